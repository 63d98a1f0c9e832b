"""Command-line entry point: ``run``, ``replay`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from oraclesim.errors import MalformedLog, OracleSimError
from oraclesim.ledger import parse_events
from oraclesim.query.proofs import AuthenticityProof, verify_proof
from oraclesim.scenario.config import load_config
from oraclesim.scenario.metrics import compute_metrics, metrics_jsonl
from oraclesim.scenario.runner import run_scenario

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def _write(text: str) -> None:
    sys.stdout.buffer.write(text.encode("utf-8"))
    sys.stdout.flush()


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    outcome = run_scenario(config)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "events.log").write_text(outcome.log, encoding="utf-8")
        (out / "metrics.jsonl").write_text(outcome.metrics_text, encoding="utf-8")
    _write(outcome.metrics_text)
    if outcome.violation:
        print(f"invariant violation: {outcome.violation}", file=sys.stderr)
    return outcome.exit_code


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        text = Path(args.log).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedLog(0, f"cannot read {args.log}: {exc}") from None
    _write(metrics_jsonl(compute_metrics(parse_events(text))))
    return EXIT_OK


def _read_key(path: Path) -> bytes:
    data = path.read_bytes()
    if len(data) == 32:
        return data
    return bytes.fromhex(data.decode("ascii").strip())


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        proof = AuthenticityProof.from_dict(json.loads(Path(args.proof).read_text(encoding="utf-8")))
        result = Path(args.result).read_bytes()
        key = _read_key(Path(args.key))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    ok = verify_proof(result, proof, key)
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oraclesim", description="Deterministic blockchain-oracle simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and print its metrics")
    run.add_argument("config", help="scenario config (YAML or JSON)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="directory for events.log and metrics.jsonl")
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="recompute metrics from an event log")
    replay.add_argument("log")
    replay.set_defaults(func=cmd_replay)

    verify = sub.add_parser("verify", help="check an authenticity proof (exit 0 iff valid)")
    verify.add_argument("proof", help="proof JSON file")
    verify.add_argument("result", help="result document, as raw bytes")
    verify.add_argument("key", help="engine public key, raw 32 bytes or hex")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OracleSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
