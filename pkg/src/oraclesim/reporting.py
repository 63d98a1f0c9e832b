"""Commit-reveal data reporting and the aggregating contract.

Commitment digest, bit-exact::

    SHA-256( b"ORACLE-COMMIT-V1" || sla_id (8-byte BE) || oracle (32 bytes)
             || canon(value) || salt (32 bytes) )

    canon(value) = tag || length (8-byte BE) || payload
      tag 0x01 boolean    payload 0x00 / 0x01
      tag 0x02 numeric    payload 16-byte big-endian signed integer (SLA scale)
      tag 0x03 bytes      payload as is
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable

from oraclesim.aggregation import (
    AggregationMethod,
    AggregationResult,
    AnswerValue,
    aggregate_boolean,
    aggregate_numeric,
    is_numeric,
)
from oraclesim.errors import (
    DigestMismatch,
    DuplicateAction,
    InvalidAnswer,
    InvalidState,
    NoCommitment,
    NotSelected,
    WindowClosed,
    WindowOpen,
)
from oraclesim.ledger import Address, Ledger, json_payload, transactional
from oraclesim.market import FinalizedSla, OracleMarket, SlaStatus

DOMAIN_TAG = b"ORACLE-COMMIT-V1"
SALT_BYTES = 32

TAG_BOOLEAN = 0x01
TAG_NUMERIC = 0x02
TAG_BYTES = 0x03


def canon(value: AnswerValue) -> bytes:
    if isinstance(value, bool):
        tag, payload = TAG_BOOLEAN, b"\x01" if value else b"\x00"
    elif isinstance(value, int):
        try:
            payload = value.to_bytes(16, "big", signed=True)
        except OverflowError:
            raise InvalidAnswer(f"{value} does not fit a signed 128-bit integer") from None
        tag = TAG_NUMERIC
    elif isinstance(value, (bytes, bytearray)):
        tag, payload = TAG_BYTES, bytes(value)
    else:
        raise InvalidAnswer(f"cannot encode {type(value).__name__}")
    return bytes([tag]) + len(payload).to_bytes(8, "big") + payload


def decode_canon(data: bytes) -> AnswerValue:
    if len(data) < 9:
        raise InvalidAnswer("encoding too short")
    tag, length, payload = data[0], int.from_bytes(data[1:9], "big"), data[9:]
    if length != len(payload):
        raise InvalidAnswer("length prefix does not match payload")
    if tag == TAG_BOOLEAN and payload in (b"\x00", b"\x01"):
        return payload == b"\x01"
    if tag == TAG_NUMERIC and length == 16:
        return int.from_bytes(payload, "big", signed=True)
    if tag == TAG_BYTES:
        return payload
    raise InvalidAnswer(f"bad canonical encoding (tag {tag:#04x})")


def commitment_digest(sla_id: int, oracle: Address, value: AnswerValue, salt: bytes) -> bytes:
    if len(salt) != SALT_BYTES:
        raise ValueError("salts are 32 bytes")
    material = DOMAIN_TAG + sla_id.to_bytes(8, "big") + oracle.raw + canon(value) + salt
    return hashlib.sha256(material).digest()


class RevealState(str, enum.Enum):
    COMMITTED = "committed"
    REVEALED = "revealed"
    MISMATCHED = "mismatched"


@dataclass(frozen=True)
class Commitment:
    digest: bytes
    committer: Address
    sla: int
    commit_height: int


@dataclass
class _Round:
    commitments: dict[Address, Commitment] = field(default_factory=dict)
    states: dict[Address, RevealState] = field(default_factory=dict)
    values: dict[Address, AnswerValue] = field(default_factory=dict)
    result: AggregationResult | None = None


class ReportingContract:
    """Collects committed and revealed oracle answers and aggregates them.

    Finalizing an SLA here writes the collective answer into the purchaser's
    callback slot, records every selected oracle's validity with the market
    and settles the reward.
    """

    def __init__(self, ledger: Ledger, market: OracleMarket) -> None:
        self.ledger = ledger
        self.market = market
        self.address = ledger.register_contract(self, "aggregating")
        self._rounds: dict[int, _Round] = {}
        self._callbacks: dict[int, list[Callable[[int, AggregationResult], None]]] = {}
        self.delivered: dict[int, AggregationResult] = {}

    def _round(self, sla_id: int) -> _Round:
        return self._rounds.setdefault(sla_id, _Round())

    def _selected_sla(self, sla_id: int, oracle: Address) -> FinalizedSla:
        sla = self.market.get(sla_id)
        if sla.status is not SlaStatus.ACTIVE:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}, expected active")
        if oracle not in sla.escrows:
            raise NotSelected(f"{self.ledger.label(oracle)} is not selected for SLA {sla_id}")
        return sla

    def commitment(self, sla_id: int, oracle: Address) -> Commitment | None:
        return self._round(sla_id).commitments.get(oracle)

    def reveal_state(self, sla_id: int, oracle: Address) -> RevealState | None:
        return self._round(sla_id).states.get(oracle)

    def on_result(self, sla_id: int, callback: Callable[[int, AggregationResult], None]) -> None:
        self._callbacks.setdefault(sla_id, []).append(callback)

    @transactional
    def commit(self, sla_id: int, oracle: Address, digest: bytes) -> Commitment:
        sla = self._selected_sla(sla_id, oracle)
        if len(digest) != 32:
            raise ValueError("commitment digests are 32 bytes")
        if not sla.commit_open(self.ledger.height):
            raise WindowClosed(f"commit phase of SLA {sla_id} is closed")
        round_ = self._round(sla_id)
        if oracle in round_.commitments:
            raise DuplicateAction(f"{self.ledger.label(oracle)} already committed to SLA {sla_id}")
        self.ledger.require_funds(oracle, 0, with_fee=True)
        self.ledger.charge_fee(oracle)
        record = Commitment(bytes(digest), oracle, sla_id, self.ledger.height)
        round_.commitments[oracle] = record
        round_.states[oracle] = RevealState.COMMITTED
        self.ledger.emit(self.address, "committed", json_payload({"sla": sla_id, "oracle": oracle.hex()}))
        return record

    @transactional
    def reveal(self, sla_id: int, oracle: Address, value: AnswerValue, salt: bytes) -> None:
        """Open a commitment.

        A value/salt pair that does not reproduce the digest marks the oracle
        invalid for this SLA (no second attempt) and raises DigestMismatch.
        """
        sla = self._selected_sla(sla_id, oracle)
        if not sla.reveal_open(self.ledger.height):
            raise WindowClosed(f"reveal phase of SLA {sla_id} is not open")
        round_ = self._round(sla_id)
        record = round_.commitments.get(oracle)
        if record is None:
            raise NoCommitment(f"{self.ledger.label(oracle)} never committed to SLA {sla_id}")
        if round_.states[oracle] is not RevealState.COMMITTED:
            raise DuplicateAction(f"{self.ledger.label(oracle)} already revealed for SLA {sla_id}")
        self.ledger.require_funds(oracle, 0, with_fee=True)
        self.ledger.charge_fee(oracle)
        try:
            matches = len(salt) == SALT_BYTES and commitment_digest(sla_id, oracle, value, salt) == record.digest
        except InvalidAnswer:
            matches = False
        if not matches:
            round_.states[oracle] = RevealState.MISMATCHED
            self.ledger.emit(
                self.address, "reveal_rejected", json_payload({"sla": sla_id, "oracle": oracle.hex()})
            )
            raise DigestMismatch(f"reveal by {self.ledger.label(oracle)} does not match its commitment")
        round_.states[oracle] = RevealState.REVEALED
        round_.values[oracle] = value
        self.ledger.emit(self.address, "revealed", json_payload({"sla": sla_id, "oracle": oracle.hex()}))

    def aggregate(self, sla: FinalizedSla) -> AggregationResult:
        """Run the SLA's aggregator over the well-typed reveals (pure read)."""
        round_ = self._round(sla.sla_id)
        proposal = sla.proposal
        method = proposal.aggregator
        if method.is_boolean:
            reveals = [(o, v) for o, v in round_.values.items() if isinstance(v, bool)]
            return aggregate_boolean(reveals, proposal.threshold_m, proposal.oracles_needed)
        reveals = [(o, v) for o, v in round_.values.items() if is_numeric(v)]
        weights = None
        if method is AggregationMethod.REPUTATION_WEIGHTED:
            reputation = self.market.reputation_for(sla)
            weights = {o: reputation.score(o) for o, _ in reveals}
        return aggregate_numeric(reveals, method, weights)

    @transactional
    def finalize_aggregation(self, sla_id: int) -> AggregationResult:
        sla = self.market.get(sla_id)
        round_ = self._round(sla_id)
        if round_.result is not None or sla.status in (SlaStatus.AGGREGATED, SlaStatus.SETTLED):
            raise DuplicateAction(f"SLA {sla_id} already aggregated")
        if sla.status is not SlaStatus.ACTIVE:
            raise InvalidState(f"SLA {sla_id} is {sla.status.value}, expected active")
        if self.ledger.height < sla.reveal_closes:
            raise WindowOpen(f"reveal phase of SLA {sla_id} closes at {sla.reveal_closes}")

        result = self.aggregate(sla)
        round_.result = result
        self.market.mark_aggregated(sla_id)
        self.delivered[sla_id] = result
        answer = result.answer
        self.ledger.emit(
            self.address,
            "sla_aggregated",
            json_payload(
                {
                    "sla": sla_id,
                    "status": result.status.value,
                    "answer": answer.hex() if isinstance(answer, bytes) else answer,
                    "method": result.method.value,
                    "contributing": [o.hex() for o in result.contributing],
                }
            ),
        )
        for oracle in sla.selected:
            revealed = round_.states.get(oracle) is RevealState.REVEALED
            valid = revealed and result.per_oracle_validity.get(oracle, False)
            self.market.record_validity(sla_id, oracle, valid, completed=revealed)
        self.market.settle(sla_id)
        for callback in self._callbacks.pop(sla_id, []):
            callback(sla_id, result)
        return result
