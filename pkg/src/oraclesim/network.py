"""Wiring of the on-chain contracts and a set of oracle nodes, driven block by block."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

from oraclesim.aggregation import AggregationResult
from oraclesim.errors import InsufficientBids, OracleSimError
from oraclesim.ledger import Address, Ledger, decode_payload
from oraclesim.market import OracleMarket, ReputationContract, SlaStatus
from oraclesim.node import Assignment, Behavior, OracleNode, PipelineResult
from oraclesim.query.engine import QueryEngine
from oraclesim.query.fixtures import FixtureRegistry
from oraclesim.reporting import ReportingContract


@dataclass
class StepReport:
    """What happened to SLAs during one block."""

    height: int
    finalized: list[int] = field(default_factory=list)
    voided: list[int] = field(default_factory=list)
    executed: dict[int, list[PipelineResult | None]] = field(default_factory=dict)
    aggregated: dict[int, AggregationResult] = field(default_factory=dict)


class OracleNetwork:
    """One ledger, the three market contracts, a query engine and the nodes.

    ``listeners`` are called as ``listener(stage, sla_id, data)`` at the
    lifecycle points ``routed``, ``voided``, ``retrieved``, ``processed``
    and ``reported`` (just before aggregation).

    Each call to :meth:`step` processes the current block in a fixed order:
    nodes bid on new proposals, SLAs whose bidding closed are finalized,
    selected nodes run their pipelines and commit, queued reports advance,
    SLAs whose reveal phase closed are aggregated, and the block is sealed.

    With ``workers > 1`` the pipelines of one block run on a thread pool;
    their results are collected and reported in node order, so the log does
    not depend on thread scheduling.
    """

    def __init__(
        self,
        seed: int = 0,
        fixtures: FixtureRegistry | None = None,
        fee: int = 0,
        workers: int = 1,
    ) -> None:
        self.seed = seed
        self.ledger = Ledger(fee)
        self.reputation = ReputationContract(self.ledger)
        self.market = OracleMarket(self.ledger, self.reputation)
        self.reporting = ReportingContract(self.ledger, self.market)
        self.engine = QueryEngine(seed, fixtures, clock=lambda: self.ledger.height)
        self.nodes: list[OracleNode] = []
        self.workers = workers
        self._bid_cursor = 0
        self._finalized_cursor = 0
        self.listeners: list[Callable[[str, int, Any], None]] = []

    def add_node(self, balance: int, behavior: Behavior | None = None, label: str | None = None) -> OracleNode:
        index = len(self.nodes)
        address = self.ledger.create_account(balance, label=label or f"oracle-{index}")
        node = OracleNode(
            index, address, self.ledger, self.market, self.reporting, self.engine, behavior, seed=self.seed
        )
        self.nodes.append(node)
        return node

    def node_at(self, address: Address) -> OracleNode | None:
        for node in self.nodes:
            if node.address == address:
                return node
        return None

    def _notify(self, stage: str, sla_id: int, data: Any = None) -> None:
        for listener in self.listeners:
            listener(stage, sla_id, data)

    # -- block processing --------------------------------------------------------

    def _place_bids(self, height: int) -> None:
        for node in self.nodes:
            node.bid_on_proposals(self._bid_cursor, height)
        self._bid_cursor = height + 1

    def _finalize_bidding(self, report: StepReport) -> None:
        height = self.ledger.height
        for sla in self.market.slas():
            if sla.status is SlaStatus.BIDDING and height >= sla.bidding_closes:
                try:
                    self.market.finalize_sla(sla.sla_id)
                except InsufficientBids:
                    report.voided.append(sla.sla_id)
                    self._notify("voided", sla.sla_id)
                    continue
                report.finalized.append(sla.sla_id)
                self._notify("routed", sla.sla_id)

    def _new_assignments(self) -> list[tuple[OracleNode, Assignment]]:
        by_address = {node.address.hex(): node for node in self.nodes}
        work = []
        for event in self.ledger.iter_events("sla_finalized", self._finalized_cursor, emitter=self.market.address):
            data = decode_payload(event.payload)
            for oracle in data["selected"]:
                node = by_address.get(oracle)
                if node is None:
                    continue
                proposal = self.market.get(data["sla"]).proposal.to_dict()
                work.append((node, node.build_assignment(data["sla"], proposal)))
        self._finalized_cursor = self.ledger.height + 1
        return work

    @staticmethod
    def _run(node: OracleNode, assignment: Assignment) -> PipelineResult | None:
        try:
            return node.run_assignment(assignment)
        except OracleSimError:
            return None

    def _execute(self, report: StepReport) -> None:
        work = self._new_assignments()
        if self.workers > 1 and len(work) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda item: self._run(*item), work))
        else:
            results = [self._run(node, assignment) for node, assignment in work]
        for (_, assignment), result in zip(work, results):
            report.executed.setdefault(assignment.sla, []).append(result)
        for sla_id, outcomes in report.executed.items():
            self._notify("retrieved", sla_id, outcomes)
            self._notify("processed", sla_id, outcomes)
        for (node, assignment), result in zip(work, results):
            node.report(assignment, result)

    def _aggregate(self, report: StepReport) -> None:
        height = self.ledger.height
        for sla in self.market.slas():
            if sla.status is SlaStatus.ACTIVE and height >= sla.reveal_closes:
                self._notify("reported", sla.sla_id)
                report.aggregated[sla.sla_id] = self.reporting.finalize_aggregation(sla.sla_id)

    def step(self) -> StepReport:
        height = self.ledger.height
        report = StepReport(height)
        self._place_bids(height)
        self._finalize_bidding(report)
        self._execute(report)
        for node in self.nodes:
            node.tick()
        self._aggregate(report)
        self.ledger.advance_block()
        return report

    def run(self, blocks: int) -> list[StepReport]:
        return [self.step() for _ in range(blocks)]
