"""Scenario configuration documents.

A scenario is a YAML mapping (any JSON document is also valid YAML)::

    name: honest-price-feed        # scenario id, defaults to the file stem
    seed: 7                        # 64-bit integer, fully determines the run
    blocks: 30                     # number of blocks to simulate
    fee: 0                         # optional flat fee per transaction
    workers: 1                     # optional pipeline thread pool size
    fixtures: builtin              # fixture manifest path (relative to this
                                   # file) or "builtin" for the bundled set
    purchaser: {balance: 1000000}
    nodes:
      - count: 7                   # nodes sharing the settings below
        balance: 10000
        behavior: honest           # honest | lazy | random | tamper |
                                   # colluding(<group>, <value>)
    slas:
      - at: 0                      # block of the (first) proposal
        every: 10                  # optional: re-propose every N blocks
        until: 30                  # optional: last block for re-proposals
        truth: 3012.5              # optional scripted ground truth
        via: market                # market | request_response
        query: {source: URL, params: [...], helpers: [...]}
        oracles_needed: 7
        bidding_window: 2
        penalty: 100
        reward: 700
        aggregator: median         # mean | median | trimmed |
                                   # reputation_weighted | m_of_n
        scale: 100
    consensus: {challenge_window: 20, challenge_deposit: 100, weighting: stake}
    reporters:
      - {name: alice, balance: 1000, stake: 300}
    inquiries:
      - at: 1
        question: "did the home team win?"
        domain: boolean            # boolean | numeric | categorical(<k>)
        deposit: 10
        truth: true
        reports: {alice: true, bob: true, carol: false}
        challenge:                 # optional
          at: 3
          by: carol
          claimed: false
          stakes: [{by: alice, side: support_original, amount: 200, at: 4}]

Unknown keys and unknown behavior names are rejected with the offending
field named.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from oraclesim.consensus import AnswerDomain, Side
from oraclesim.errors import ConfigError, OracleSimError
from oraclesim.market import SlaProposal
from oraclesim.node import BEHAVIOR_KINDS, Behavior

BUILTIN = "builtin"
_UINT64 = 2**64


def parse_behavior(text: str) -> Behavior:
    """``honest``, ``lazy``, ``random``, ``tamper`` or ``colluding(group, value)``."""
    text = str(text).strip()
    match = re.fullmatch(r"colluding\(\s*([A-Za-z0-9_-]+)\s*,\s*([^)]+?)\s*\)", text)
    if match:
        return Behavior("colluding", match.group(1), _scalar(match.group(2)))
    if text in BEHAVIOR_KINDS and text != "colluding":
        return Behavior(text)
    raise ConfigError(f"unknown behavior {text!r}")


def _scalar(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return text


@dataclass(frozen=True)
class NodeGroup:
    count: int
    balance: int
    behavior: Behavior
    label: str | None = None


@dataclass(frozen=True)
class SlaScript:
    proposal: SlaProposal
    at: int = 0
    every: int | None = None
    until: int | None = None
    truth: Any = None
    via: str = "market"

    def due(self, height: int) -> bool:
        if height < self.at:
            return False
        if self.every is None:
            return height == self.at
        last = self.until if self.until is not None else height
        return height <= last and (height - self.at) % self.every == 0


@dataclass(frozen=True)
class ReporterSpec:
    name: str
    balance: int
    stake: int


@dataclass(frozen=True)
class StakeScript:
    by: str
    side: Side
    amount: int
    at: int


@dataclass(frozen=True)
class ChallengeScript:
    at: int
    by: str
    claimed: Any
    stakes: tuple[StakeScript, ...] = ()


@dataclass(frozen=True)
class InquiryScript:
    at: int
    question: str
    domain: AnswerDomain
    deposit: int
    reports: tuple[tuple[str, Any], ...]
    quorum: int
    truth: Any = None
    challenge: ChallengeScript | None = None
    finalize_at: int | None = None


@dataclass(frozen=True)
class ConsensusSettings:
    challenge_window: int = 20
    challenge_deposit: int = 100
    weighting: str = "stake"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    blocks: int
    nodes: tuple[NodeGroup, ...]
    slas: tuple[SlaScript, ...] = ()
    purchaser_balance: int = 10**9
    fixtures: str = BUILTIN
    fee: int = 0
    workers: int = 1
    consensus: ConsensusSettings = field(default_factory=ConsensusSettings)
    reporters: tuple[ReporterSpec, ...] = ()
    inquiries: tuple[InquiryScript, ...] = ()
    base_dir: Path = Path(".")

    def with_seed(self, seed: int) -> ScenarioConfig:
        return replace(self, seed=_seed(seed, "seed"))

    def fixtures_path(self) -> Path | None:
        if self.fixtures == BUILTIN:
            return None
        return (self.base_dir / self.fixtures).resolve()


# -- field readers ----------------------------------------------------------------


def _check_keys(data: Any, where: str, allowed: set[str], required: set[str] = frozenset()) -> Mapping[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(sorted(map(str, unknown)))}")
    missing = required - set(data)
    if missing:
        raise ConfigError(f"{where}: missing field(s) {', '.join(sorted(missing))}")
    return data


def _int(value: Any, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _seed(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < _UINT64:
        raise ConfigError(f"{where}: expected a 64-bit unsigned integer, got {value!r}")
    return value


def _list(value: Any, where: str) -> list[Any]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list")
    return value


_SLA_SCRIPT_KEYS = {"at", "every", "until", "truth", "via"}
_PROPOSAL_KEYS = {
    "query", "oracles_needed", "bidding_window", "penalty", "reward", "aggregator", "min_reputation",
    "threshold", "scale", "commit_window", "reveal_window",
}


def _sla(data: Any, where: str) -> SlaScript:
    data = _check_keys(
        data, where, _SLA_SCRIPT_KEYS | _PROPOSAL_KEYS,
        {"query", "oracles_needed", "bidding_window", "penalty", "reward"},
    )
    try:
        proposal = SlaProposal.from_dict({k: v for k, v in data.items() if k in _PROPOSAL_KEYS})
        proposal.validate()
    except (OracleSimError, KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    via = data.get("via", "market")
    if via not in ("market", "request_response"):
        raise ConfigError(f"{where}.via: expected market or request_response, got {via!r}")
    every = data.get("every")
    until = data.get("until")
    return SlaScript(
        proposal,
        at=_int(data.get("at", 0), f"{where}.at"),
        every=_int(every, f"{where}.every", 1) if every is not None else None,
        until=_int(until, f"{where}.until") if until is not None else None,
        truth=data.get("truth"),
        via=via,
    )


def _node_group(data: Any, where: str) -> NodeGroup:
    data = _check_keys(data, where, {"count", "balance", "behavior", "label"})
    try:
        behavior = parse_behavior(data.get("behavior", "honest"))
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{where}.behavior: {exc}") from None
    label = data.get("label")
    return NodeGroup(
        _int(data.get("count", 1), f"{where}.count", 1),
        _int(data.get("balance", 10_000), f"{where}.balance"),
        behavior,
        str(label) if label is not None else None,
    )


def _inquiry(data: Any, where: str, reporters: set[str]) -> InquiryScript:
    data = _check_keys(
        data, where, {"at", "question", "domain", "deposit", "reports", "quorum", "truth", "challenge", "finalize_at"},
        {"question", "domain", "reports"},
    )
    try:
        domain = AnswerDomain.parse(str(data["domain"]))
    except OracleSimError as exc:
        raise ConfigError(f"{where}.domain: {exc}") from None
    reports = data["reports"]
    if not isinstance(reports, Mapping) or not reports:
        raise ConfigError(f"{where}.reports: expected a non-empty mapping of reporter to answer")
    for name in reports:
        if name not in reporters:
            raise ConfigError(f"{where}.reports: unknown reporter {name!r}")
    challenge = None
    if data.get("challenge") is not None:
        challenge = _challenge(data["challenge"], f"{where}.challenge", reporters)
    at = _int(data.get("at", 0), f"{where}.at")
    finalize_at = data.get("finalize_at")
    return InquiryScript(
        at=at,
        question=str(data["question"]),
        domain=domain,
        deposit=_int(data.get("deposit", 0), f"{where}.deposit"),
        reports=tuple((str(k), v) for k, v in reports.items()),
        quorum=_int(data.get("quorum", len(reports)), f"{where}.quorum", 1),
        truth=data.get("truth"),
        challenge=challenge,
        finalize_at=_int(finalize_at, f"{where}.finalize_at", at) if finalize_at is not None else None,
    )


def _challenge(data: Any, where: str, reporters: set[str]) -> ChallengeScript:
    data = _check_keys(data, where, {"at", "by", "claimed", "stakes"}, {"at", "by", "claimed"})
    if data["by"] not in reporters:
        raise ConfigError(f"{where}.by: unknown account {data['by']!r}")
    at = _int(data["at"], f"{where}.at")
    stakes = []
    for i, item in enumerate(_list(data.get("stakes"), f"{where}.stakes")):
        w = f"{where}.stakes[{i}]"
        item = _check_keys(item, w, {"by", "side", "amount", "at"}, {"by", "side", "amount"})
        if item["by"] not in reporters:
            raise ConfigError(f"{w}.by: unknown account {item['by']!r}")
        try:
            side = Side(item["side"])
        except ValueError:
            raise ConfigError(f"{w}.side: expected support_original or support_challenge") from None
        stakes.append(StakeScript(item["by"], side, _int(item["amount"], f"{w}.amount", 1),
                                  _int(item.get("at", at), f"{w}.at", at)))
    return ChallengeScript(at, str(data["by"]), data["claimed"], tuple(stakes))


_TOP_KEYS = {
    "name", "seed", "blocks", "fee", "workers", "fixtures", "purchaser", "nodes", "slas", "consensus",
    "reporters", "inquiries",
}


def config_from_dict(data: Any, name: str = "scenario", base_dir: Path | str = ".") -> ScenarioConfig:
    data = _check_keys(data, "config", _TOP_KEYS, {"seed", "blocks"})
    nodes = tuple(_node_group(n, f"nodes[{i}]") for i, n in enumerate(_list(data.get("nodes"), "nodes")))
    slas = tuple(_sla(s, f"slas[{i}]") for i, s in enumerate(_list(data.get("slas"), "slas")))
    purchaser = _check_keys(data.get("purchaser") or {}, "purchaser", {"balance"})
    consensus = _check_keys(data.get("consensus") or {}, "consensus", {"challenge_window", "challenge_deposit", "weighting"})
    weighting = consensus.get("weighting", "stake")
    if weighting not in ("stake", "headcount"):
        raise ConfigError(f"consensus.weighting: expected stake or headcount, got {weighting!r}")
    reporters = []
    for i, r in enumerate(_list(data.get("reporters"), "reporters")):
        r = _check_keys(r, f"reporters[{i}]", {"name", "balance", "stake"}, {"name", "stake"})
        reporters.append(
            ReporterSpec(str(r["name"]), _int(r.get("balance", 0), f"reporters[{i}].balance"),
                         _int(r["stake"], f"reporters[{i}].stake", 1))
        )
    names = [r.name for r in reporters]
    if len(set(names)) != len(names):
        raise ConfigError("reporters: duplicate names")
    inquiries = tuple(
        _inquiry(q, f"inquiries[{i}]", set(names)) for i, q in enumerate(_list(data.get("inquiries"), "inquiries"))
    )
    fixtures = data.get("fixtures", BUILTIN)
    if not isinstance(fixtures, str):
        raise ConfigError("fixtures: expected a manifest path or 'builtin'")
    return ScenarioConfig(
        name=str(data.get("name", name)),
        seed=_seed(data["seed"], "seed"),
        blocks=_int(data["blocks"], "blocks", 1),
        nodes=nodes,
        slas=slas,
        purchaser_balance=_int(purchaser.get("balance", 10**9), "purchaser.balance"),
        fixtures=fixtures,
        fee=_int(data.get("fee", 0), "fee"),
        workers=_int(data.get("workers", 1), "workers", 1),
        consensus=ConsensusSettings(
            _int(consensus.get("challenge_window", 20), "consensus.challenge_window", 1),
            _int(consensus.get("challenge_deposit", 100), "consensus.challenge_deposit", 1),
            weighting,
        ),
        reporters=tuple(reporters),
        inquiries=inquiries,
        base_dir=Path(base_dir),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}:{where} {getattr(exc, 'problem', exc)}") from None
    try:
        return config_from_dict(data, name=path.stem, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
