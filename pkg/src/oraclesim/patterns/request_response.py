"""Request-response oracle: the full asynchronous query lifecycle.

Each request walks through seven numbered stages, each announced by an
event ``rr_step_<k>`` whose payload is the SLA id in ASCII decimal:

1. the requesting contract makes an on-chain request
2. the interface contract parses the query and logs it for the oracles
3. payment and data-access permissions check out; bids are matched and the
   assignment is routed to the selected nodes
4. the nodes query the external source
5. the nodes process the response into the on-chain format
6. the nodes have reported (commit and reveal phases are over)
7. the answers are aggregated and handed back to the requester

A failed check at stage 3 emits ``rr_step_3_failed`` and aborts the request.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

from oraclesim.aggregation import AggregationResult
from oraclesim.errors import InvalidProposal, LedgerError, OracleSimError
from oraclesim.ledger import Address
from oraclesim.market import SlaProposal
from oraclesim.network import OracleNetwork
from oraclesim.query.engine import DataSourceType, QuerySpec
from oraclesim.query.proofs import encrypt_param

STEP_TOPICS = tuple(f"rr_step_{k}" for k in range(1, 8))
FAILED_TOPIC = "rr_step_3_failed"

_STAGE_STEPS = {"routed": (3,), "retrieved": (4,), "processed": (5,), "reported": (6,)}


@dataclass(frozen=True)
class Delivery:
    cycle: int
    sla_id: int
    requested_at: int
    delivered_at: int
    result: AggregationResult
    ciphertext: str | None = None


@dataclass(frozen=True)
class Abort:
    cycle: int
    sla_id: int
    reason: str


@dataclass
class LifecycleRun:
    deliveries: list[Delivery] = field(default_factory=list)
    aborted: list[Abort] = field(default_factory=list)
    pending: list[int] = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return len(self.deliveries)


@dataclass
class _Tracked:
    cycle: int
    requested_at: int
    encrypt_to: bytes | None


def _decrypt_params(query: QuerySpec) -> list[str]:
    found = [query.params[0]] if query.source is DataSourceType.DECRYPT else []
    if query.target is DataSourceType.DECRYPT:
        found.append(query.params[0])
    for sub in query.subqueries:
        found.extend(_decrypt_params(sub))
    return found


def _answer_text(answer: Any) -> str:
    if isinstance(answer, bytes):
        return answer.hex()
    if isinstance(answer, bool):
        return "true" if answer else "false"
    return str(answer)


class RequestResponseOracle:
    """Interface contract that runs requests through an :class:`OracleNetwork`."""

    def __init__(self, network: OracleNetwork, label: str = "request-response") -> None:
        self.network = network
        self.ledger = network.ledger
        self.address = self.ledger.register_contract(self, label)
        self._tracked: dict[int, _Tracked] = {}
        self._run: LifecycleRun | None = None
        network.listeners.append(self._on_stage)

    def _step(self, topic: str, sla_id: int) -> None:
        self.ledger.emit(self.address, topic, str(sla_id).encode("ascii"))

    def _on_stage(self, stage: str, sla_id: int, _data: Any) -> None:
        tracked = self._tracked.get(sla_id)
        if tracked is None:
            return
        if stage == "voided":
            self._abort(sla_id, "no qualified oracles")
            return
        for step in _STAGE_STEPS.get(stage, ()):
            self._step(f"rr_step_{step}", sla_id)

    def _abort(self, sla_id: int, reason: str) -> None:
        tracked = self._tracked.pop(sla_id)
        self._step(FAILED_TOPIC, sla_id)
        if self._run is not None:
            self._run.aborted.append(Abort(tracked.cycle, sla_id, reason))

    def _deliver(self, sla_id: int, result: AggregationResult) -> None:
        tracked = self._tracked.pop(sla_id)
        ciphertext = None
        if tracked.encrypt_to is not None:
            entropy = hashlib.sha512(
                b"ORACLE-DELIVERY-V1" + self.network.seed.to_bytes(16, "big", signed=True) + sla_id.to_bytes(8, "big")
            ).digest()
            ciphertext = encrypt_param(_answer_text(result.answer), tracked.encrypt_to, entropy)
        self._step("rr_step_7", sla_id)
        if self._run is not None:
            self._run.deliveries.append(
                Delivery(tracked.cycle, sla_id, tracked.requested_at, self.ledger.height, result, ciphertext)
            )

    def _check_access(self, proposal: SlaProposal) -> str | None:
        for ciphertext in _decrypt_params(proposal.query):
            try:
                self.network.engine.decrypt_param(ciphertext)
            except OracleSimError:
                return "encrypted parameter is not readable by the oracle network"
        return None

    def request(
        self, purchaser: Address, proposal: SlaProposal, cycle: int = 0, encrypt_to: bytes | None = None
    ) -> int:
        """Stages 1 to 3 for one request; returns the SLA id (aborted or not)."""
        proposal.validate()
        market = self.network.market
        sla_id = market.reserve_sla_id()
        self._step("rr_step_1", sla_id)
        self._step("rr_step_2", sla_id)
        self._tracked[sla_id] = _Tracked(cycle, self.ledger.height, encrypt_to)
        reason = self._check_access(proposal)
        if reason is None:
            try:
                market.propose_sla(purchaser, proposal, sla_id=sla_id)
            except (LedgerError, InvalidProposal) as exc:
                reason = f"payment check failed: {exc}"
        if reason is not None:
            self._abort(sla_id, reason)
            return sla_id
        self.network.reporting.on_result(sla_id, self._deliver)
        return sla_id

    def run(
        self,
        purchaser: Address,
        proposal: SlaProposal,
        schedule: int | None = None,
        blocks: int | None = None,
        encrypt_to: bytes | None = None,
    ) -> LifecycleRun:
        """Drive the network until the request (or every scheduled request) settles.

        With ``schedule`` the request is re-issued every ``schedule`` blocks
        for ``blocks`` blocks; only requests that finish inside that span
        count as complete cycles.
        """
        if schedule is not None and (schedule < 1 or blocks is None):
            raise ValueError("a schedule needs a positive interval and a block budget")
        run = self._run = LifecycleRun()
        start = self.ledger.height
        span = proposal.bidding_window + proposal.commit_blocks + proposal.reveal_blocks + 1
        end = start + blocks if blocks is not None else start + span
        mine: list[int] = []
        cycle = 0
        try:
            while self.ledger.height < end:
                height = self.ledger.height
                due = height == start if schedule is None else (height - start) % schedule == 0
                if due:
                    mine.append(self.request(purchaser, proposal, cycle, encrypt_to))
                    cycle += 1
                self.network.step()
                if schedule is None and not any(s in self._tracked for s in mine):
                    break
        finally:
            self._run = None
        run.pending = [s for s in mine if s in self._tracked]
        return run
