"""Batch driver: build a network from a config and run it block by block."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Any

from oraclesim.consensus import HumanConsensus, InquiryStatus
from oraclesim.errors import ContractError, InvariantViolation, LedgerError, PipelineError
from oraclesim.ledger import Address, json_payload
from oraclesim.market import SlaStatus
from oraclesim.network import OracleNetwork
from oraclesim.node import to_chain_value
from oraclesim.patterns.request_response import RequestResponseOracle
from oraclesim.query.fixtures import FixtureRegistry
from oraclesim.scenario.config import InquiryScript, ScenarioConfig, SlaScript
from oraclesim.scenario.metrics import compute_metrics, metrics_jsonl

EXIT_OK = 0
EXIT_INVARIANT = 1


def builtin_fixtures() -> FixtureRegistry:
    manifest = resources.files("oraclesim") / "data" / "fixtures" / "manifest.yaml"
    with resources.as_file(manifest) as path:
        return FixtureRegistry.load(path)


def load_fixtures(config: ScenarioConfig) -> FixtureRegistry:
    path = config.fixtures_path()
    return builtin_fixtures() if path is None else FixtureRegistry.load(path)


@dataclass
class RunOutcome:
    config: ScenarioConfig
    log: str
    metrics: list[dict[str, Any]]
    violation: str | None = None

    @property
    def exit_code(self) -> int:
        return EXIT_INVARIANT if self.violation else EXIT_OK

    @property
    def metrics_text(self) -> str:
        return metrics_jsonl(self.metrics)


def _truth_value(truth: Any, script: SlaScript) -> Any:
    proposal = script.proposal
    try:
        return to_chain_value(truth, proposal.answer_kind, proposal.scale)
    except PipelineError:
        return truth


@dataclass
class _ChallengeState:
    challenge_id: int | None = None
    done: bool = False


class ScenarioRunner:
    """Wires every module for one scenario.

    The driver owns block production. Per block it issues the scripted SLA
    requests and inquiry actions, lets the network process the block and
    then checks the ledger invariants.
    """

    def __init__(self, config: ScenarioConfig, fixtures: FixtureRegistry | None = None) -> None:
        self.config = config
        if fixtures is None:
            fixtures = load_fixtures(config)
        self.network = OracleNetwork(config.seed, fixtures, config.fee, config.workers)
        ledger = self.ledger = self.network.ledger
        self.address = ledger.register_contract(self, "scenario-driver")
        self.purchaser = ledger.create_account(config.purchaser_balance, label="purchaser")
        for group in config.nodes:
            for _ in range(group.count):
                index = len(self.network.nodes)
                self.network.add_node(group.balance, group.behavior, label=f"{group.label or 'oracle'}-{index}")
        self.rr = RequestResponseOracle(self.network)
        settings = config.consensus
        self.consensus = HumanConsensus(
            ledger, settings.challenge_window, settings.challenge_deposit, settings.weighting
        )
        self.reporters: dict[str, Address] = {}
        for spec in config.reporters:
            address = ledger.create_account(spec.balance + spec.stake, label=spec.name)
            self.consensus.register_reporter(address, spec.stake)
            self.reporters[spec.name] = address
        self._inquiry_ids: dict[int, int] = {}
        self._challenges: dict[int, _ChallengeState] = {}
        accounts = {a.hex(): label for a, label in sorted(ledger.labels.items())}
        self._note(
            "scenario_meta",
            {"scenario": config.name, "seed": config.seed, "blocks": config.blocks, "accounts": accounts},
        )

    def _note(self, topic: str, payload: dict[str, Any]) -> None:
        self.ledger.emit(self.address, topic, json_payload(payload))

    # -- scripted actions ----------------------------------------------------------

    def _issue_requests(self, height: int) -> None:
        for index, script in enumerate(self.config.slas):
            if not script.due(height):
                continue
            try:
                if script.via == "request_response":
                    sla_id = self.rr.request(self.purchaser, script.proposal)
                else:
                    sla_id = self.network.market.propose_sla(self.purchaser, script.proposal)
            except (LedgerError, ContractError) as exc:
                self._note("scenario_request_failed", {"script": index, "reason": str(exc)})
                continue
            if script.truth is not None and self._proposed(sla_id):
                self._note("scenario_truth", {"sla": sla_id, "truth": _truth_value(script.truth, script)})

    def _proposed(self, sla_id: int) -> bool:
        try:
            self.network.market.get(sla_id)
        except ContractError:
            return False
        return True

    def _attempt(self, action: str, fn: Any, *args: Any) -> Any:
        try:
            return fn(*args)
        except (LedgerError, ContractError, ValueError) as exc:
            self._note("scenario_action_failed", {"action": action, "reason": str(exc)})
            return None

    def _run_inquiries(self, height: int) -> None:
        consensus = self.consensus
        window = self.config.consensus.challenge_window
        for index, script in enumerate(self.config.inquiries):
            if script.at == height:
                self._open_inquiry(index, script)
            inquiry_id = self._inquiry_ids.get(index)
            if inquiry_id is None:
                continue
            round_ = consensus.inquiry(inquiry_id)
            challenge = script.challenge
            state = self._challenges.setdefault(index, _ChallengeState())
            if challenge is not None and challenge.at == height and round_.status is InquiryStatus.RESOLVED:
                state.challenge_id = self._attempt(
                    "open_challenge", consensus.open_challenge, inquiry_id, self.reporters[challenge.by],
                    challenge.claimed,
                )
            if state.challenge_id is not None and not state.done:
                for stake in challenge.stakes:
                    if stake.at == height:
                        self._attempt(
                            "stake_side", consensus.stake_side, state.challenge_id, self.reporters[stake.by],
                            stake.side, stake.amount,
                        )
                if height >= consensus.challenge(state.challenge_id).deadline:
                    consensus.resolve_challenge(state.challenge_id)
                    state.done = True
            elif round_.status is InquiryStatus.RESOLVED:
                pending_challenge = challenge is not None and challenge.at >= height and state.challenge_id is None
                finalize_at = script.finalize_at if script.finalize_at is not None else script.at + window
                if not pending_challenge and height >= finalize_at:
                    consensus.finalize_inquiry(inquiry_id)

    def _open_inquiry(self, index: int, script: InquiryScript) -> None:
        consensus = self.consensus
        inquiry_id = consensus.open_inquiry(script.question, script.domain, script.quorum, script.deposit)
        self._inquiry_ids[index] = inquiry_id
        if script.truth is not None:
            self._note("scenario_inquiry_truth", {"inquiry": inquiry_id, "truth": script.truth})
        for name, answer in script.reports:
            self._attempt("submit_report", consensus.submit_report, inquiry_id, self.reporters[name], answer)

    # -- invariants -------------------------------------------------------------------

    def check_invariants(self) -> None:
        self.ledger.check_conservation()
        for sla in self.network.market.slas():
            if sla.status is SlaStatus.SETTLED and set(sla.validity) != set(sla.selected):
                raise InvariantViolation(f"SLA {sla.sla_id} settled without a validity record per oracle")

    def run(self) -> RunOutcome:
        violation = None
        try:
            for height in range(self.config.blocks):
                self._issue_requests(height)
                self._run_inquiries(height)
                self.network.step()
                self.check_invariants()
        except InvariantViolation as exc:
            violation = str(exc)
            self._note("scenario_invariant_violation", {"reason": violation})
        log = self.ledger.export_log()
        return RunOutcome(self.config, log, compute_metrics(self.ledger.events), violation)


def run_scenario(config: ScenarioConfig, fixtures: FixtureRegistry | None = None) -> RunOutcome:
    return ScenarioRunner(config, fixtures).run()
