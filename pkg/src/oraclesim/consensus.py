"""Schelling-point consensus for human oracles, with a challenge game.

Reporters lock reputation stake with the contract and answer inquiries by
posting a deposit. Once the quorum of reports is in, the round resolves to
the stake-weighted mode (boolean and categorical questions) or the
stake-weighted lower median (numeric questions). Reporters who matched the
outcome get their deposit back plus a stake-proportional share of the
forfeited deposits; rounding remainders go to an explicit sink account.

A resolved round can be challenged once. The challenger's deposit seeds the
dispute pool; anyone may back either side until the deadline; the larger
pool wins and splits the losing pool pro rata. A tie leaves the original
answer standing and refunds both pools.

The contract never sees ground truth; question text is opaque.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from typing import Any

from oraclesim.errors import (
    DuplicateAction,
    InvalidAnswer,
    InvalidState,
    InvalidProposal,
    Unqualified,
    WindowClosed,
    WindowOpen,
)
from oraclesim.ledger import Address, Ledger, json_payload, transactional

DEFAULT_CHALLENGE_DEPOSIT = 100
DEFAULT_CHALLENGE_WINDOW = 20

Answer = bool | int


@dataclass(frozen=True)
class AnswerDomain:
    kind: str  # "boolean" | "categorical" | "numeric"
    categories: int = 0

    @classmethod
    def parse(cls, text: str) -> AnswerDomain:
        text = text.strip()
        if text in ("boolean", "numeric"):
            return cls(text)
        match = re.fullmatch(r"categorical\((\d+)\)", text)
        if match and int(match.group(1)) >= 2:
            return cls("categorical", int(match.group(1)))
        raise InvalidProposal(f"unknown answer domain {text!r}")

    def __str__(self) -> str:
        return f"categorical({self.categories})" if self.kind == "categorical" else self.kind

    def check(self, answer: Any) -> Answer:
        if self.kind == "boolean":
            if isinstance(answer, bool):
                return answer
        elif isinstance(answer, int) and not isinstance(answer, bool):
            if self.kind == "numeric" or 0 <= answer < self.categories:
                return answer
        raise InvalidAnswer(f"{answer!r} is not in domain {self}")


class InquiryStatus(str, enum.Enum):
    OPEN = "open"
    RESOLVED = "resolved"
    CHALLENGED = "challenged"
    FINAL = "final"


class Side(str, enum.Enum):
    SUPPORT_ORIGINAL = "support_original"
    SUPPORT_CHALLENGE = "support_challenge"


@dataclass(frozen=True)
class ReporterProfile:
    address: Address
    stake: int
    escrow: int


@dataclass(frozen=True)
class Report:
    reporter: Address
    answer: Answer
    deposit: int  # escrow id
    weight: int


@dataclass
class InquiryRound:
    id: int
    question: str
    domain: AnswerDomain
    quorum: int
    deposit_required: int
    reports: dict[Address, Report] = field(default_factory=dict)
    status: InquiryStatus = InquiryStatus.OPEN
    answer: Answer | None = None
    final_answer: Answer | None = None
    challenge: int | None = None


@dataclass(frozen=True)
class Stake:
    staker: Address
    amount: int
    escrow: int


@dataclass
class Challenge:
    id: int
    inquiry: int
    challenger: Address
    claimed_answer: Answer
    deadline: int
    support: list[Stake] = field(default_factory=list)
    dispute: list[Stake] = field(default_factory=list)
    resolved: bool = False
    outcome: str | None = None

    @property
    def support_pool(self) -> int:
        return sum(s.amount for s in self.support)

    @property
    def dispute_pool(self) -> int:
        return sum(s.amount for s in self.dispute)


def _answer_key(answer: Answer) -> tuple[int, int]:
    return (0, int(answer))


def weighted_mode(votes: list[tuple[Answer, int]]) -> Answer:
    """Answer with the greatest total weight; ties go to the smallest answer."""
    totals: dict[Answer, int] = {}
    for answer, weight in votes:
        totals[answer] = totals.get(answer, 0) + weight
    return min(totals, key=lambda a: (-totals[a], _answer_key(a)))


def weighted_median(votes: list[tuple[int, int]]) -> int:
    """Smallest value whose cumulative weight reaches half the total."""
    total = sum(w for _, w in votes)
    running = 0
    for value, weight in sorted(votes):
        running += weight
        if 2 * running >= total:
            return value
    raise ValueError("empty vote")


def pro_rata(pot: int, weights: dict[Address, int]) -> tuple[dict[Address, int], int]:
    """Floor-divide ``pot`` by weight; returns (shares, remainder)."""
    total = sum(weights.values())
    if total == 0:
        return {}, pot
    shares = {a: pot * w // total for a, w in weights.items()}
    return shares, pot - sum(shares.values())


class HumanConsensus:
    def __init__(
        self,
        ledger: Ledger,
        challenge_window: int = DEFAULT_CHALLENGE_WINDOW,
        challenge_deposit: int = DEFAULT_CHALLENGE_DEPOSIT,
        weighting: str = "stake",
    ) -> None:
        if weighting not in ("stake", "headcount"):
            raise ValueError("weighting is 'stake' or 'headcount'")
        self.ledger = ledger
        self.challenge_window = challenge_window
        self.challenge_deposit = challenge_deposit
        self.weighting = weighting
        self.address = ledger.register_contract(self, "human-consensus")
        self.sink = ledger.create_account(0, label="consensus-sink")
        self._profiles: dict[Address, ReporterProfile] = {}
        self._inquiries: dict[int, InquiryRound] = {}
        self._challenges: dict[int, Challenge] = {}
        self._inquiry_ids = itertools.count(1)
        self._challenge_ids = itertools.count(1)

    def _emit(self, topic: str, payload: dict[str, Any]) -> None:
        self.ledger.emit(self.address, topic, json_payload(payload))

    def inquiry(self, inquiry_id: int) -> InquiryRound:
        try:
            return self._inquiries[inquiry_id]
        except KeyError:
            raise InvalidState(f"unknown inquiry {inquiry_id}") from None

    def challenge(self, challenge_id: int) -> Challenge:
        try:
            return self._challenges[challenge_id]
        except KeyError:
            raise InvalidState(f"unknown challenge {challenge_id}") from None

    def profile(self, reporter: Address) -> ReporterProfile | None:
        return self._profiles.get(reporter)

    # -- reporters -------------------------------------------------------------

    @transactional
    def register_reporter(self, reporter: Address, stake: int) -> ReporterProfile:
        """Lock ``stake`` tokens as the reporter's voting weight."""
        if reporter in self._profiles:
            raise DuplicateAction(f"{self.ledger.label(reporter)} already registered")
        if stake < 1:
            raise ValueError("stake must be positive")
        escrow = self.ledger.escrow(reporter, self.address, stake)
        profile = ReporterProfile(reporter, stake, escrow)
        self._profiles[reporter] = profile
        return profile

    @transactional
    def withdraw_stake(self, reporter: Address) -> int:
        profile = self._profiles.pop(reporter, None)
        if profile is None:
            raise InvalidState(f"{self.ledger.label(reporter)} has no stake")
        return self.ledger.release(profile.escrow, reporter)

    # -- reporting -------------------------------------------------------------

    @transactional
    def open_inquiry(self, question: str, answer_domain: AnswerDomain | str, quorum: int, deposit_required: int) -> int:
        if isinstance(answer_domain, str):
            answer_domain = AnswerDomain.parse(answer_domain)
        if quorum < 1:
            raise InvalidProposal("quorum must be at least 1")
        if deposit_required < 0:
            raise InvalidProposal("deposit cannot be negative")
        inquiry_id = next(self._inquiry_ids)
        self._inquiries[inquiry_id] = InquiryRound(inquiry_id, question, answer_domain, quorum, deposit_required)
        self._emit(
            "inquiry_opened",
            {"inquiry": inquiry_id, "question": question, "domain": str(answer_domain), "quorum": quorum,
             "deposit": deposit_required},
        )
        return inquiry_id

    @transactional
    def submit_report(self, inquiry_id: int, reporter: Address, answer: Answer) -> Answer | None:
        """Record a report; returns the resolved answer if this report met the quorum."""
        round_ = self.inquiry(inquiry_id)
        if round_.status is not InquiryStatus.OPEN or len(round_.reports) >= round_.quorum:
            raise WindowClosed(f"inquiry {inquiry_id} no longer takes reports")
        if reporter in round_.reports:
            raise DuplicateAction(f"{self.ledger.label(reporter)} already reported on inquiry {inquiry_id}")
        answer = round_.domain.check(answer)
        profile = self._profiles.get(reporter)
        if profile is None or profile.stake < round_.deposit_required:
            raise Unqualified(f"{self.ledger.label(reporter)} lacks the stake to report")
        self.ledger.require_funds(reporter, round_.deposit_required, with_fee=True)
        self.ledger.charge_fee(reporter)
        deposit = self.ledger.escrow(reporter, self.address, round_.deposit_required)
        weight = profile.stake if self.weighting == "stake" else 1
        round_.reports[reporter] = Report(reporter, answer, deposit, weight)
        self._emit("report_submitted", {"inquiry": inquiry_id, "reporter": reporter.hex()})
        if len(round_.reports) == round_.quorum:
            return self.resolve_consensus(inquiry_id)
        return None

    def tally(self, round_: InquiryRound) -> Answer:
        votes = [(r.answer, r.weight) for r in round_.reports.values()]
        if round_.domain.kind == "numeric":
            return weighted_median(votes)
        return weighted_mode(votes)

    @transactional
    def resolve_consensus(self, inquiry_id: int) -> Answer:
        round_ = self.inquiry(inquiry_id)
        if round_.status is not InquiryStatus.OPEN:
            raise InvalidState(f"inquiry {inquiry_id} already resolved")
        if len(round_.reports) < round_.quorum:
            raise WindowOpen(f"inquiry {inquiry_id} has {len(round_.reports)}/{round_.quorum} reports")
        answer = self.tally(round_)
        reports = sorted(round_.reports.values(), key=lambda r: r.reporter)
        winners = [r for r in reports if r.answer == answer]
        forfeited = 0
        for report in reports:
            if report.answer != answer:
                forfeited += self.ledger.release(report.deposit, self.address)
        for report in winners:
            self.ledger.release(report.deposit, report.reporter)
        shares, remainder = pro_rata(forfeited, {r.reporter: r.weight for r in winners})
        for reporter, amount in shares.items():
            self.ledger.transfer(self.address, reporter, amount)
        self.ledger.transfer(self.address, self.sink, remainder)
        round_.status = InquiryStatus.RESOLVED
        round_.answer = answer
        self._emit(
            "inquiry_resolved",
            {"inquiry": inquiry_id, "answer": answer, "forfeited": forfeited, "burned": remainder,
             "winners": len(winners), "reports": len(reports)},
        )
        return answer

    @transactional
    def finalize_inquiry(self, inquiry_id: int) -> Answer:
        """Close a resolved, unchallenged round for good."""
        round_ = self.inquiry(inquiry_id)
        if round_.status is not InquiryStatus.RESOLVED:
            raise InvalidState(f"inquiry {inquiry_id} is {round_.status.value}")
        round_.status = InquiryStatus.FINAL
        round_.final_answer = round_.answer
        self._emit("inquiry_final", {"inquiry": inquiry_id, "answer": round_.answer, "challenged": False})
        return round_.answer

    # -- challenge game ----------------------------------------------------------

    @transactional
    def open_challenge(self, inquiry_id: int, challenger: Address, claimed_answer: Answer) -> int:
        round_ = self.inquiry(inquiry_id)
        if round_.status is InquiryStatus.FINAL:
            raise InvalidState(f"inquiry {inquiry_id} is final")
        if round_.status is not InquiryStatus.RESOLVED:
            raise InvalidState(f"inquiry {inquiry_id} is {round_.status.value}, not resolved")
        claimed_answer = round_.domain.check(claimed_answer)
        if claimed_answer == round_.answer:
            raise InvalidAnswer("a challenge must claim a different answer")
        self.ledger.require_funds(challenger, self.challenge_deposit, with_fee=True)
        self.ledger.charge_fee(challenger)
        challenge_id = next(self._challenge_ids)
        escrow = self.ledger.escrow(challenger, self.address, self.challenge_deposit)
        challenge = Challenge(
            challenge_id, inquiry_id, challenger, claimed_answer, self.ledger.height + self.challenge_window
        )
        challenge.dispute.append(Stake(challenger, self.challenge_deposit, escrow))
        self._challenges[challenge_id] = challenge
        round_.status = InquiryStatus.CHALLENGED
        round_.challenge = challenge_id
        self._emit(
            "challenge_opened",
            {"challenge": challenge_id, "inquiry": inquiry_id, "challenger": challenger.hex(),
             "claimed": claimed_answer, "deadline": challenge.deadline},
        )
        return challenge_id

    @transactional
    def stake_side(self, challenge_id: int, staker: Address, side: Side | str, amount: int) -> None:
        challenge = self.challenge(challenge_id)
        side = Side(side)
        if challenge.resolved or self.ledger.height >= challenge.deadline:
            raise WindowClosed(f"challenge {challenge_id} closed at {challenge.deadline}")
        if amount < 1:
            raise ValueError("stake must be positive")
        self.ledger.require_funds(staker, amount, with_fee=True)
        self.ledger.charge_fee(staker)
        escrow = self.ledger.escrow(staker, self.address, amount)
        pool = challenge.support if side is Side.SUPPORT_ORIGINAL else challenge.dispute
        pool.append(Stake(staker, amount, escrow))
        self._emit("side_staked", {"challenge": challenge_id, "staker": staker.hex(), "side": side.value,
                                   "amount": amount})

    @transactional
    def resolve_challenge(self, challenge_id: int) -> Answer:
        challenge = self.challenge(challenge_id)
        if challenge.resolved:
            raise DuplicateAction(f"challenge {challenge_id} already resolved")
        if self.ledger.height < challenge.deadline:
            raise WindowOpen(f"challenge {challenge_id} runs until {challenge.deadline}")
        round_ = self.inquiry(challenge.inquiry)
        support, dispute = challenge.support_pool, challenge.dispute_pool
        burned = 0
        if support == dispute:
            outcome, final = "tie", round_.answer
            for stake in challenge.support + challenge.dispute:
                self.ledger.release(stake.escrow, stake.staker)
        else:
            if dispute > support:
                outcome, final = "flipped", challenge.claimed_answer
                winning, losing = challenge.dispute, challenge.support
            else:
                outcome, final = "upheld", round_.answer
                winning, losing = challenge.support, challenge.dispute
            pot = sum(self.ledger.release(s.escrow, self.address) for s in losing)
            weights: dict[Address, int] = {}
            for stake in winning:
                self.ledger.release(stake.escrow, stake.staker)
                weights[stake.staker] = weights.get(stake.staker, 0) + stake.amount
            shares, burned = pro_rata(pot, dict(sorted(weights.items())))
            for staker, amount in shares.items():
                self.ledger.transfer(self.address, staker, amount)
            self.ledger.transfer(self.address, self.sink, burned)
        challenge.resolved = True
        challenge.outcome = outcome
        round_.status = InquiryStatus.FINAL
        round_.final_answer = final
        self._emit(
            "challenge_resolved",
            {"challenge": challenge_id, "inquiry": challenge.inquiry, "outcome": outcome, "final": final,
             "support_pool": support, "dispute_pool": dispute, "burned": burned},
        )
        return final
