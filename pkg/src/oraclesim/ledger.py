"""Single-chain deterministic ledger.

Accounts, an indivisible token, escrows, a contract registry, an append-only
event log and a discrete block height. There is no wall clock; every window
in the simulator is measured in blocks.

All mutations are serialized through ``Ledger.lock``. Contracts wrap their
entry points with :func:`transactional` so a whole contract call is one
atomic step with respect to other threads.
"""

from __future__ import annotations

import fnmatch
import functools
import hashlib
import json
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, TypeVar

from oraclesim.errors import (
    ArithmeticOverflow,
    EscrowClosed,
    InsufficientFunds,
    InvariantViolation,
    MalformedLog,
    UnknownAddress,
    UnknownEscrow,
)

#: Token amounts are unsigned 128-bit integers.
MAX_AMOUNT = 2**128 - 1

_ADDRESS_TAG = b"ORACLESIM-ADDRESS-V1"

F = TypeVar("F", bound=Callable[..., Any])


@dataclass(frozen=True, order=True, slots=True)
class Address:
    """32-byte opaque account identifier, compared byte-wise."""

    raw: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.raw, bytes) or len(self.raw) != 32:
            raise ValueError("an address is exactly 32 bytes")

    @classmethod
    def from_hex(cls, text: str) -> Address:
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.raw.hex()

    def __str__(self) -> str:
        return self.raw[:4].hex()

    def __repr__(self) -> str:
        return f"Address({self.raw[:4].hex()}..)"


def checked_add(a: int, b: int) -> int:
    total = a + b
    if total > MAX_AMOUNT:
        raise ArithmeticOverflow(f"{a} + {b} exceeds the token range")
    return total


def checked_sub(a: int, b: int) -> int:
    if b > a:
        raise InsufficientFunds(f"need {b}, have {a}")
    return a - b


def _check_amount(amount: int) -> None:
    if isinstance(amount, bool) or not isinstance(amount, int):
        raise TypeError("token amounts are integers")
    if amount < 0:
        raise ValueError("token amounts are never negative")
    if amount > MAX_AMOUNT:
        raise ArithmeticOverflow("amount exceeds the token range")


@dataclass(frozen=True, slots=True)
class LedgerEvent:
    height: int
    seq: int
    emitter: Address
    topic: str
    payload: bytes

    def to_line(self) -> str:
        return f"{self.height} {self.seq} {self.emitter.hex()} {self.topic} {self.payload.hex()}"

    @classmethod
    def from_line(cls, line: str, line_no: int = 0) -> LedgerEvent:
        parts = line.split(" ")
        if len(parts) != 5:
            raise MalformedLog(line_no, f"expected 5 fields, got {len(parts)}")
        height, seq, emitter, topic, payload = parts
        try:
            return cls(int(height), int(seq), Address.from_hex(emitter), topic, bytes.fromhex(payload))
        except ValueError as exc:
            raise MalformedLog(line_no, str(exc)) from None


@dataclass(slots=True)
class Escrow:
    id: int
    owner: Address
    holder: Address
    amount: int
    open: bool = True


def json_payload(obj: Any) -> bytes:
    """Canonical JSON encoding used for event payloads."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def decode_payload(payload: bytes) -> Any:
    return json.loads(payload.decode())


def export_events(events: Iterable[LedgerEvent]) -> str:
    """Render events as ``height seq emitter topic payload-hex`` lines."""
    return "".join(event.to_line() + "\n" for event in events)


def parse_events(text: str) -> list[LedgerEvent]:
    """Inverse of :func:`export_events`.

    Every record must end with a newline; a final line without one is
    reported as a truncation at that line.
    """
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] != "":
        raise MalformedLog(len(lines), "truncated record (no terminating newline)")
    events = []
    previous = None
    for line_no, line in enumerate(lines[:-1], start=1):
        event = LedgerEvent.from_line(line, line_no)
        key = (event.height, event.seq)
        if previous is not None and key <= previous:
            raise MalformedLog(line_no, "events out of (height, seq) order")
        previous = key
        events.append(event)
    return events


class Ledger:
    """The chain. One instance per simulation run."""

    def __init__(self, fee: int = 0) -> None:
        _check_amount(fee)
        self.lock = threading.RLock()
        self.fee = fee
        self._height = 0
        self._seq = 0
        self._balances: dict[Address, int] = {}
        self._labels: dict[Address, str] = {}
        self._escrows: dict[int, Escrow] = {}
        self._escrowed_total = 0
        self._supply = 0
        self._events: list[LedgerEvent] = []
        self._contracts: dict[Address, Any] = {}
        self._account_counter = 0
        self.fee_sink = self.create_account(0, label="fee-sink")

    # -- accounts ----------------------------------------------------------

    @property
    def height(self) -> int:
        return self._height

    @property
    def total_supply(self) -> int:
        return self._supply

    def create_account(self, initial_balance: int = 0, label: str | None = None) -> Address:
        """Mint a fresh account. This is the only way tokens enter the system."""
        _check_amount(initial_balance)
        with self.lock:
            supply = checked_add(self._supply, initial_balance)
            counter = self._account_counter.to_bytes(8, "big")
            address = Address(hashlib.sha256(_ADDRESS_TAG + counter).digest())
            self._account_counter += 1
            self._supply = supply
            self._balances[address] = initial_balance
            if label is not None:
                self._labels[address] = label
            return address

    def label(self, address: Address) -> str:
        return self._labels.get(address, address.hex())

    @property
    def labels(self) -> dict[Address, str]:
        return dict(self._labels)

    def accounts(self) -> list[Address]:
        return list(self._balances)

    def balance(self, address: Address) -> int:
        try:
            return self._balances[address]
        except KeyError:
            raise UnknownAddress(address.hex()) from None

    def _require(self, address: Address) -> None:
        if address not in self._balances:
            raise UnknownAddress(address.hex())

    def require_funds(self, address: Address, amount: int, *, with_fee: bool = False) -> None:
        needed = checked_add(amount, self.fee) if with_fee else amount
        have = self.balance(address)
        if have < needed:
            raise InsufficientFunds(f"{self.label(address)} holds {have}, needs {needed}")

    def transfer(self, source: Address, dest: Address, amount: int) -> None:
        _check_amount(amount)
        with self.lock:
            self._require(source)
            self._require(dest)
            if amount == 0:
                return
            remaining = checked_sub(self._balances[source], amount)
            if dest == source:
                return
            credited = checked_add(self._balances[dest], amount)
            self._balances[source] = remaining
            self._balances[dest] = credited

    def charge_fee(self, payer: Address) -> None:
        """Move the flat per-transaction fee (if any) to the fee sink."""
        if self.fee:
            self.transfer(payer, self.fee_sink, self.fee)

    # -- escrow ------------------------------------------------------------

    def escrow(self, owner: Address, holder: Address, amount: int) -> int:
        """Lock ``amount`` of the owner's tokens under ``holder``'s control."""
        _check_amount(amount)
        with self.lock:
            self._require(owner)
            self._require(holder)
            remaining = checked_sub(self._balances[owner], amount)
            escrowed = checked_add(self._escrowed_total, amount)
            escrow_id = len(self._escrows) + 1
            self._balances[owner] = remaining
            self._escrowed_total = escrowed
            self._escrows[escrow_id] = Escrow(escrow_id, owner, holder, amount)
            return escrow_id

    def get_escrow(self, escrow_id: int) -> Escrow:
        try:
            return self._escrows[escrow_id]
        except KeyError:
            raise UnknownEscrow(str(escrow_id)) from None

    def release(self, escrow_id: int, to: Address) -> int:
        """Pay the full escrowed amount to ``to`` and close the escrow."""
        with self.lock:
            record = self.get_escrow(escrow_id)
            if not record.open:
                raise EscrowClosed(f"escrow {escrow_id} already released")
            self._require(to)
            credited = checked_add(self._balances[to], record.amount)
            record.open = False
            self._escrowed_total -= record.amount
            self._balances[to] = credited
            return record.amount

    @property
    def escrowed_total(self) -> int:
        return self._escrowed_total

    def open_escrows(self) -> list[Escrow]:
        return [e for e in self._escrows.values() if e.open]

    # -- contracts ---------------------------------------------------------

    def register_contract(self, contract: Any, label: str) -> Address:
        address = self.create_account(0, label=label)
        self._contracts[address] = contract
        return address

    def contract_at(self, address: Address) -> Any:
        try:
            return self._contracts[address]
        except KeyError:
            raise UnknownAddress(f"no contract at {address.hex()}") from None

    # -- events and blocks -------------------------------------------------

    def emit(self, emitter: Address, topic: str, payload: bytes = b"") -> LedgerEvent:
        if not topic or " " in topic or "\n" in topic:
            raise ValueError(f"bad topic {topic!r}")
        with self.lock:
            event = LedgerEvent(self._height, self._seq, emitter, topic, bytes(payload))
            self._seq += 1
            self._events.append(event)
            return event

    def read_events(
        self,
        topic: str = "*",
        from_height: int = 0,
        to_height: int | None = None,
        emitter: Address | None = None,
    ) -> list[LedgerEvent]:
        """Events whose topic matches the glob ``topic`` within [from, to]."""
        return list(self.iter_events(topic, from_height, to_height, emitter))

    def iter_events(
        self,
        topic: str = "*",
        from_height: int = 0,
        to_height: int | None = None,
        emitter: Address | None = None,
    ) -> Iterator[LedgerEvent]:
        events = self._events
        start = _first_index_at(events, from_height)
        for event in events[start:]:
            if to_height is not None and event.height > to_height:
                break
            if emitter is not None and event.emitter != emitter:
                continue
            if topic == "*" or fnmatch.fnmatchcase(event.topic, topic):
                yield event

    @property
    def events(self) -> tuple[LedgerEvent, ...]:
        return tuple(self._events)

    def export_log(self) -> str:
        return export_events(self._events)

    def advance_block(self) -> int:
        with self.lock:
            self._height += 1
            self._seq = 0
            return self._height

    # -- invariants --------------------------------------------------------

    def check_conservation(self) -> None:
        held = sum(self._balances.values())
        escrowed = sum(e.amount for e in self._escrows.values() if e.open)
        if escrowed != self._escrowed_total:
            raise InvariantViolation("escrow bookkeeping drifted")
        if held + escrowed != self._supply:
            raise InvariantViolation(
                f"balances {held} + escrows {escrowed} != minted supply {self._supply}"
            )


def _first_index_at(events: list[LedgerEvent], height: int) -> int:
    lo, hi = 0, len(events)
    while lo < hi:
        mid = (lo + hi) // 2
        if events[mid].height < height:
            lo = mid + 1
        else:
            hi = mid
    return lo


def transactional(method: F) -> F:
    """Run a contract entry point under the ledger's single-writer lock."""

    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        with self.ledger.lock:
            return method(self, *args, **kwargs)

    return wrapper  # type: ignore[return-value]
