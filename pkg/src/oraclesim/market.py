"""On-chain oracle market: reputation contract and order-matching contract.

Lifecycle of one service agreement (SLA)::

    propose_sla ──► BIDDING ──finalize_sla──► ACTIVE ──(reporting)──► AGGREGATED ──settle──► SETTLED
                       └──── too few qualified bids ──► VOIDED

The purchaser's reward is escrowed at proposal time. Each bidder escrows
exactly the SLA's penalty; losing bidders get it back at finalization, and
selected oracles get it back (valid answer) or forfeit it to the purchaser
(invalid or missing answer) when validity is recorded.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

from oraclesim.aggregation import AggregationMethod
from oraclesim.errors import (
    DuplicateAction,
    InsufficientBids,
    InvalidProposal,
    InvalidState,
    NotSelected,
    Unqualified,
    WindowClosed,
    WindowOpen,
)
from oraclesim.ledger import Address, Ledger, decode_payload, json_payload, transactional
from oraclesim.query.engine import QuerySpec

PRIOR_SCORE = Fraction(1, 2)
PRIOR_WEIGHT = 2
DEFAULT_SCALE = 10**8


def _fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class SlaProposal:
    """Purchaser's requirements for one oracle service agreement.

    ``threshold`` is the m of an m-of-n boolean aggregator (defaults to a
    simple majority of ``oracles_needed``). ``scale`` is the fixed-point
    factor applied to numeric answers. Commit and reveal windows default to
    the bidding window.
    """

    query: QuerySpec
    oracles_needed: int
    bidding_window: int
    penalty: int
    reward: int
    aggregator: AggregationMethod = AggregationMethod.MEDIAN
    reputation_contract: Address | None = None
    min_reputation: Fraction = Fraction(0)
    threshold: int | None = None
    scale: int = DEFAULT_SCALE
    commit_window: int | None = None
    reveal_window: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "aggregator", AggregationMethod(self.aggregator))
        object.__setattr__(self, "min_reputation", _fraction(self.min_reputation))

    @property
    def answer_kind(self) -> str:
        return "boolean" if self.aggregator.is_boolean else "numeric"

    @property
    def threshold_m(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return self.oracles_needed // 2 + 1

    @property
    def commit_blocks(self) -> int:
        return self.commit_window if self.commit_window is not None else self.bidding_window

    @property
    def reveal_blocks(self) -> int:
        return self.reveal_window if self.reveal_window is not None else self.bidding_window

    def validate(self) -> None:
        def positive_int(name: str, value: Any, minimum: int = 1) -> None:
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise InvalidProposal(f"{name} must be an integer >= {minimum}, got {value!r}")

        positive_int("oracles_needed", self.oracles_needed)
        positive_int("bidding_window", self.bidding_window)
        positive_int("commit_window", self.commit_blocks)
        positive_int("reveal_window", self.reveal_blocks)
        positive_int("penalty", self.penalty, 0)
        positive_int("reward", self.reward, 0)
        positive_int("scale", self.scale)
        if not 0 <= self.min_reputation <= 1:
            raise InvalidProposal("min_reputation must lie in [0, 1]")
        if self.aggregator.is_boolean and not 0 <= self.threshold_m <= self.oracles_needed:
            raise InvalidProposal("m-of-n threshold must satisfy 0 <= m <= n")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query.to_dict(),
            "oracles_needed": self.oracles_needed,
            "bidding_window": self.bidding_window,
            "penalty": self.penalty,
            "reward": self.reward,
            "aggregator": self.aggregator.value,
            "reputation_contract": self.reputation_contract.hex() if self.reputation_contract else None,
            "min_reputation": f"{self.min_reputation.numerator}/{self.min_reputation.denominator}",
            "threshold": self.threshold_m,
            "scale": self.scale,
            "commit_window": self.commit_blocks,
            "reveal_window": self.reveal_blocks,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SlaProposal:
        contract = data.get("reputation_contract")
        return cls(
            query=QuerySpec.from_dict(data["query"]),
            oracles_needed=data["oracles_needed"],
            bidding_window=data["bidding_window"],
            penalty=data["penalty"],
            reward=data["reward"],
            aggregator=AggregationMethod(data.get("aggregator", "median")),
            reputation_contract=Address.from_hex(contract) if contract else None,
            min_reputation=Fraction(data.get("min_reputation", 0)),
            threshold=data.get("threshold"),
            scale=data.get("scale", DEFAULT_SCALE),
            commit_window=data.get("commit_window"),
            reveal_window=data.get("reveal_window"),
        )


class SlaStatus(str, enum.Enum):
    BIDDING = "bidding"
    ACTIVE = "active"
    AGGREGATED = "aggregated"
    SETTLED = "settled"
    VOIDED = "voided"


_ORDER = {SlaStatus.BIDDING: 0, SlaStatus.ACTIVE: 1, SlaStatus.AGGREGATED: 2, SlaStatus.SETTLED: 3}


@dataclass(frozen=True)
class OracleBid:
    oracle: Address
    deposit: int  # escrow id holding exactly the SLA penalty
    bid_height: int
    score_at_bid: Fraction


@dataclass
class FinalizedSla:
    """On-chain record of one SLA, from proposal through settlement."""

    sla_id: int
    purchaser: Address
    proposal: SlaProposal
    proposed_at: int
    reward_escrow: int
    status: SlaStatus = SlaStatus.BIDDING
    bids: dict[Address, OracleBid] = field(default_factory=dict)
    selected: list[Address] = field(default_factory=list)
    escrows: dict[Address, int] = field(default_factory=dict)
    finalized_at: int | None = None
    validity: dict[Address, bool] = field(default_factory=dict)

    @property
    def bidding_closes(self) -> int:
        return self.proposed_at + self.proposal.bidding_window

    @property
    def commit_closes(self) -> int:
        if self.finalized_at is None:
            raise InvalidState(f"SLA {self.sla_id} not finalized")
        return self.finalized_at + self.proposal.commit_blocks

    @property
    def reveal_closes(self) -> int:
        return self.commit_closes + self.proposal.reveal_blocks

    def commit_open(self, height: int) -> bool:
        return self.status is SlaStatus.ACTIVE and self.finalized_at <= height < self.commit_closes

    def reveal_open(self, height: int) -> bool:
        return self.status is SlaStatus.ACTIVE and self.commit_closes <= height < self.reveal_closes


@dataclass
class ReputationRecord:
    oracle: Address
    assigned: int = 0
    completed: int = 0
    valid: int = 0
    penalized: int = 0

    @property
    def score(self) -> Fraction:
        """Laplace-smoothed success rate; 1/2 with no history."""
        return (self.valid + PRIOR_WEIGHT * PRIOR_SCORE) / (self.assigned + PRIOR_WEIGHT)


def fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


class ReputationContract:
    """Tracks oracle performance counters and derives scores from them."""

    def __init__(self, ledger: Ledger, label: str = "reputation") -> None:
        self.ledger = ledger
        self.address = ledger.register_contract(self, label)
        self._records: dict[Address, ReputationRecord] = {}

    def record(self, oracle: Address) -> ReputationRecord:
        if oracle not in self._records:
            self._records[oracle] = ReputationRecord(oracle)
        return self._records[oracle]

    def score(self, oracle: Address) -> Fraction:
        record = self._records.get(oracle)
        return record.score if record else PRIOR_SCORE

    def note_assigned(self, oracle: Address) -> None:
        self.record(oracle).assigned += 1

    def note_outcome(self, oracle: Address, completed: bool, valid: bool) -> ReputationRecord:
        record = self.record(oracle)
        if valid and not completed:
            raise InvalidState("an answer cannot be valid without being completed")
        if record.completed + completed > record.assigned:
            raise InvalidState("more completions than assignments")
        record.completed += int(completed)
        record.valid += int(valid)
        record.penalized += int(not valid)
        return record

    def records(self) -> list[ReputationRecord]:
        return [self._records[a] for a in sorted(self._records)]


class OracleMarket:
    """Order-matching contract: SLA proposals, bidding, selection, validity feedback."""

    def __init__(self, ledger: Ledger, reputation: ReputationContract | None = None) -> None:
        self.ledger = ledger
        self.reputation = reputation or ReputationContract(ledger)
        self.address = ledger.register_contract(self, "order-matching")
        self._slas: dict[int, FinalizedSla] = {}
        self._ids = itertools.count(1)

    # -- helpers -------------------------------------------------------------

    def get(self, sla_id: int) -> FinalizedSla:
        try:
            return self._slas[sla_id]
        except KeyError:
            raise InvalidState(f"unknown SLA {sla_id}") from None

    def slas(self) -> list[FinalizedSla]:
        return list(self._slas.values())

    def reserve_sla_id(self) -> int:
        return next(self._ids)

    def reputation_for(self, sla: FinalizedSla) -> ReputationContract:
        address = sla.proposal.reputation_contract
        if address is None:
            return self.reputation
        return self.ledger.contract_at(address)

    def reputation_score(self, oracle: Address, contract: Address | None = None) -> Fraction:
        if contract is None:
            return self.reputation.score(oracle)
        return self.ledger.contract_at(contract).score(oracle)

    def _emit(self, topic: str, payload: dict[str, Any]) -> None:
        self.ledger.emit(self.address, topic, json_payload(payload))

    @staticmethod
    def _move(sla: FinalizedSla, status: SlaStatus) -> None:
        if status is SlaStatus.VOIDED:
            if sla.status is not SlaStatus.BIDDING:
                raise InvalidState(f"SLA {sla.sla_id} cannot be voided from {sla.status.value}")
        elif sla.status is SlaStatus.VOIDED or _ORDER[status] <= _ORDER[sla.status]:
            raise InvalidState(f"SLA {sla.sla_id}: {sla.status.value} -> {status.value} is not forward")
        sla.status = status

    # -- proposal and bidding --------------------------------------------------

    def _check_proposal(self, purchaser: Address, proposal: SlaProposal) -> None:
        proposal.validate()
        if proposal.reputation_contract is not None:
            contract = self.ledger.contract_at(proposal.reputation_contract)
            if not isinstance(contract, ReputationContract):
                raise InvalidProposal("reputation_contract is not a reputation contract")
        self.ledger.require_funds(purchaser, proposal.reward, with_fee=True)

    @transactional
    def propose_sla(self, purchaser: Address, proposal: SlaProposal, sla_id: int | None = None) -> int:
        self._check_proposal(purchaser, proposal)
        if sla_id is None:
            sla_id = self.reserve_sla_id()
        elif sla_id in self._slas:
            raise DuplicateAction(f"SLA id {sla_id} already used")
        self.ledger.charge_fee(purchaser)
        escrow = self.ledger.escrow(purchaser, self.address, proposal.reward)
        sla = FinalizedSla(sla_id, purchaser, proposal, self.ledger.height, escrow)
        self._slas[sla_id] = sla
        self._emit(
            "sla_proposed",
            {
                "sla": sla_id,
                "purchaser": purchaser.hex(),
                "proposal": proposal.to_dict(),
                "bidding_closes": sla.bidding_closes,
            },
        )
        return sla_id

    @transactional
    def propose_sla_manual(
        self, purchaser: Address, proposal: SlaProposal, oracles: Iterable[Address], sla_id: int | None = None
    ) -> FinalizedSla:
        """Manual matching: the purchaser picks the oracles, bidding is skipped.

        Penalties are still escrowed from every chosen oracle.
        """
        oracles = list(oracles)
        self._check_proposal(purchaser, proposal)
        if len(oracles) != proposal.oracles_needed or len(set(oracles)) != len(oracles):
            raise InvalidProposal(f"need exactly {proposal.oracles_needed} distinct oracles")
        for oracle in oracles:
            self.ledger.require_funds(oracle, proposal.penalty)
        sla_id = self.propose_sla(purchaser, proposal, sla_id)
        sla = self._slas[sla_id]
        height = self.ledger.height
        for oracle in oracles:
            escrow = self.ledger.escrow(oracle, self.address, proposal.penalty)
            sla.bids[oracle] = OracleBid(oracle, escrow, height, self.reputation_for(sla).score(oracle))
        self._activate(sla, oracles)
        return sla

    @transactional
    def submit_bid(self, oracle: Address, sla_id: int) -> OracleBid:
        sla = self.get(sla_id)
        height = self.ledger.height
        if sla.status is not SlaStatus.BIDDING or height >= sla.bidding_closes:
            raise WindowClosed(f"SLA {sla_id} is not accepting bids")
        if oracle in sla.bids:
            raise DuplicateAction(f"{self.ledger.label(oracle)} already bid on SLA {sla_id}")
        if oracle == sla.purchaser:
            raise Unqualified("the purchaser cannot serve its own SLA")
        score = self.reputation_for(sla).score(oracle)
        if score < sla.proposal.min_reputation:
            raise Unqualified(f"score {float(score):.4f} below {float(sla.proposal.min_reputation):.4f}")
        self.ledger.require_funds(oracle, sla.proposal.penalty, with_fee=True)
        self.ledger.charge_fee(oracle)
        escrow = self.ledger.escrow(oracle, self.address, sla.proposal.penalty)
        bid = OracleBid(oracle, escrow, height, score)
        sla.bids[oracle] = bid
        self._emit("bid_submitted", {"sla": sla_id, "oracle": oracle.hex(), "score": fraction_text(score)})
        return bid

    @staticmethod
    def selection_key(bid: OracleBid) -> tuple[Fraction, int, Address]:
        """Best reputation first, then earliest bid, then lowest address."""
        return (-bid.score_at_bid, bid.bid_height, bid.oracle)

    @transactional
    def finalize_sla(self, sla_id: int) -> FinalizedSla:
        sla = self.get(sla_id)
        if sla.status is not SlaStatus.BIDDING:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}")
        if self.ledger.height < sla.bidding_closes:
            raise WindowOpen(f"bidding on SLA {sla_id} closes at {sla.bidding_closes}")
        needed = sla.proposal.oracles_needed
        ranked = sorted(sla.bids.values(), key=self.selection_key)
        if len(ranked) < needed:
            self._void(sla, f"{len(ranked)} qualified bids, {needed} needed")
            raise InsufficientBids(f"SLA {sla_id} voided: {len(ranked)} bids for {needed} oracles")
        for bid in ranked[needed:]:
            self.ledger.release(bid.deposit, bid.oracle)
        self._activate(sla, [bid.oracle for bid in ranked[:needed]])
        return sla

    def _activate(self, sla: FinalizedSla, selected: list[Address]) -> None:
        self._move(sla, SlaStatus.ACTIVE)
        sla.selected = selected
        sla.escrows = {oracle: sla.bids[oracle].deposit for oracle in selected}
        sla.finalized_at = self.ledger.height
        reputation = self.reputation_for(sla)
        for oracle in selected:
            reputation.note_assigned(oracle)
        self._emit(
            "sla_finalized",
            {
                "sla": sla.sla_id,
                "selected": [o.hex() for o in selected],
                "commit_closes": sla.commit_closes,
                "reveal_closes": sla.reveal_closes,
            },
        )

    def _void(self, sla: FinalizedSla, reason: str) -> None:
        self._move(sla, SlaStatus.VOIDED)
        self.ledger.release(sla.reward_escrow, sla.purchaser)
        for bid in sla.bids.values():
            self.ledger.release(bid.deposit, bid.oracle)
        self._emit("sla_voided", {"sla": sla.sla_id, "reason": reason, "refunded_bids": len(sla.bids)})

    # -- aggregation feedback ----------------------------------------------------

    @transactional
    def mark_aggregated(self, sla_id: int) -> None:
        sla = self.get(sla_id)
        if sla.status is not SlaStatus.ACTIVE:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}, expected active")
        self._move(sla, SlaStatus.AGGREGATED)

    @transactional
    def record_validity(
        self, sla_id: int, oracle: Address, was_valid: bool, completed: bool | None = None
    ) -> ReputationRecord:
        """Settle one selected oracle's penalty deposit and update its reputation.

        ``completed`` says whether the oracle delivered an answer at all; it
        defaults to ``was_valid``.
        """
        sla = self.get(sla_id)
        if sla.status is not SlaStatus.AGGREGATED:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}, expected aggregated")
        if oracle not in sla.escrows:
            raise NotSelected(f"{self.ledger.label(oracle)} was not selected for SLA {sla_id}")
        if oracle in sla.validity:
            raise DuplicateAction(f"validity for {self.ledger.label(oracle)} already recorded")
        completed = was_valid if completed is None else completed
        reputation = self.reputation_for(sla)
        record = reputation.note_outcome(oracle, completed, was_valid)
        escrow = sla.escrows[oracle]
        if was_valid:
            self.ledger.release(escrow, oracle)
            forfeited = 0
        else:
            forfeited = self.ledger.release(escrow, sla.purchaser)
        sla.validity[oracle] = was_valid
        self._emit(
            "validity_recorded",
            {
                "sla": sla_id,
                "oracle": oracle.hex(),
                "valid": was_valid,
                "completed": completed,
                "forfeited": forfeited,
                "score": fraction_text(record.score),
            },
        )
        return record

    @transactional
    def settle(self, sla_id: int) -> dict[Address, int]:
        """Split the reward equally among selected oracles that answered validly.

        Shares of invalid oracles and the division remainder go back to the
        purchaser.
        """
        sla = self.get(sla_id)
        if sla.status is not SlaStatus.AGGREGATED:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}, expected aggregated")
        missing = [o for o in sla.selected if o not in sla.validity]
        if missing:
            raise InvalidState(f"SLA {sla_id}: validity missing for {len(missing)} oracle(s)")
        reward = self.ledger.release(sla.reward_escrow, self.address)
        share = reward // len(sla.selected)
        payouts = {oracle: share for oracle in sla.selected if sla.validity[oracle]}
        for oracle, amount in payouts.items():
            self.ledger.transfer(self.address, oracle, amount)
        refund = reward - share * len(payouts)
        self.ledger.transfer(self.address, sla.purchaser, refund)
        self._move(sla, SlaStatus.SETTLED)
        self._emit(
            "sla_settled",
            {"sla": sla_id, "payouts": {o.hex(): a for o, a in payouts.items()}, "refund": refund},
        )
        return payouts


class ListingService:
    """Off-chain oracle listing built purely from the market's event log."""

    def __init__(self, ledger: Ledger, market: OracleMarket) -> None:
        self.ledger = ledger
        self.market = market

    def history(self) -> dict[Address, dict[str, int]]:
        stats: dict[Address, dict[str, int]] = {}
        for event in self.ledger.iter_events("validity_recorded", emitter=self.market.address):
            data = decode_payload(event.payload)
            entry = stats.setdefault(Address.from_hex(data["oracle"]), {"reports": 0, "valid": 0, "forfeited": 0})
            entry["reports"] += 1
            entry["valid"] += int(data["valid"])
            entry["forfeited"] += data["forfeited"]
        return stats

    def rank(self, min_score: Fraction | float = 0, limit: int | None = None) -> list[Address]:
        """Oracles with any history, best current score first."""
        floor = _fraction(min_score)
        scored = [(self.market.reputation.score(o), o) for o in self.history()]
        ranked = [o for s, o in sorted(scored, key=lambda t: (-t[0], t[1])) if s >= floor]
        return ranked if limit is None else ranked[:limit]
