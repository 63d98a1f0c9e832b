from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oraclesim.errors import (
    ArithmeticOverflow,
    EscrowClosed,
    InsufficientFunds,
    InvariantViolation,
    MalformedLog,
    UnknownAddress,
)
from oraclesim.ledger import (
    MAX_AMOUNT,
    Address,
    Ledger,
    LedgerEvent,
    checked_add,
    checked_sub,
    export_events,
    parse_events,
)


class TestAccounts:
    def test_zero_balance_account(self, ledger):
        a = ledger.create_account(0)
        assert ledger.balance(a) == 0

    def test_initial_balance_is_reported(self, ledger):
        a = ledger.create_account(100)
        assert ledger.balance(a) == 100
        assert ledger.total_supply == 100

    def test_addresses_are_unique(self, ledger):
        assert ledger.create_account(0) != ledger.create_account(0)

    def test_addresses_are_deterministic(self):
        assert Ledger().create_account(5) == Ledger().create_account(5)

    def test_unknown_address(self, ledger):
        with pytest.raises(UnknownAddress):
            ledger.balance(Address(b"\x00" * 32))

    def test_address_hex_round_trip(self, ledger):
        a = ledger.create_account(0)
        assert Address.from_hex(a.hex()) == a

    def test_address_must_be_32_bytes(self):
        with pytest.raises(ValueError):
            Address(b"\x01" * 31)


class TestTransfer:
    def test_zero_transfer_is_noop(self, ledger):
        a, b = ledger.create_account(100), ledger.create_account(5)
        ledger.transfer(a, b, 0)
        assert (ledger.balance(a), ledger.balance(b)) == (100, 5)

    def test_arithmetic(self, ledger):
        a, b = ledger.create_account(100), ledger.create_account(0)
        ledger.transfer(a, b, 40)
        assert (ledger.balance(a), ledger.balance(b)) == (60, 40)

    def test_overdraft_rejected(self, ledger):
        a, b = ledger.create_account(100), ledger.create_account(0)
        with pytest.raises(InsufficientFunds):
            ledger.transfer(a, b, 101)
        assert ledger.balance(a) == 100

    def test_self_transfer_keeps_balance(self, ledger):
        a = ledger.create_account(10)
        ledger.transfer(a, a, 10)
        assert ledger.balance(a) == 10
        with pytest.raises(InsufficientFunds):
            ledger.transfer(a, a, 11)

    def test_negative_amount_rejected(self, ledger):
        a, b = ledger.create_account(10), ledger.create_account(0)
        with pytest.raises(ValueError):
            ledger.transfer(a, b, -1)

    def test_overflow_detected(self, ledger):
        a = ledger.create_account(MAX_AMOUNT)
        with pytest.raises(ArithmeticOverflow):
            ledger.create_account(1)
        assert ledger.balance(a) == MAX_AMOUNT

    def test_checked_arithmetic(self):
        assert checked_add(MAX_AMOUNT - 1, 1) == MAX_AMOUNT
        with pytest.raises(ArithmeticOverflow):
            checked_add(MAX_AMOUNT, 1)
        with pytest.raises(InsufficientFunds):
            checked_sub(1, 2)


class TestEscrow:
    def test_round_trip_restores_owner(self, ledger):
        a, m = ledger.create_account(50), ledger.create_account(0)
        e = ledger.escrow(a, m, 30)
        assert ledger.balance(a) == 20
        assert ledger.escrowed_total == 30
        ledger.release(e, a)
        assert ledger.balance(a) == 50
        assert ledger.escrowed_total == 0

    def test_release_to_third_party(self, ledger):
        a, m, b = ledger.create_account(50), ledger.create_account(0), ledger.create_account(0)
        e = ledger.escrow(a, m, 10)
        ledger.release(e, b)
        assert ledger.balance(b) == 10

    def test_double_release_rejected(self, ledger):
        a, m = ledger.create_account(50), ledger.create_account(0)
        e = ledger.escrow(a, m, 10)
        ledger.release(e, a)
        with pytest.raises(EscrowClosed):
            ledger.release(e, a)

    def test_escrow_needs_funds(self, ledger):
        a, m = ledger.create_account(5), ledger.create_account(0)
        with pytest.raises(InsufficientFunds):
            ledger.escrow(a, m, 6)


class TestEvents:
    def test_empty_read(self, ledger):
        assert ledger.read_events() == []

    def test_emission_order_within_block(self, ledger):
        src = ledger.create_account(0)
        a = ledger.emit(src, "A", b"1")
        b = ledger.emit(src, "B", b"2")
        assert ledger.read_events() == [a, b]
        assert (a.seq, b.seq) == (0, 1)

    def test_topic_filter(self, ledger):
        src = ledger.create_account(0)
        ledger.emit(src, "sla_proposed", b"")
        ledger.emit(src, "bid_submitted", b"")
        assert [e.topic for e in ledger.read_events("sla_proposed")] == ["sla_proposed"]
        assert [e.topic for e in ledger.read_events("sla_*")] == ["sla_proposed"]

    def test_height_range(self, ledger):
        src = ledger.create_account(0)
        for _ in range(4):
            ledger.emit(src, "tick", b"")
            ledger.advance_block()
        assert [e.height for e in ledger.read_events("tick", 1, 2)] == [1, 2]

    def test_emitter_filter(self, ledger):
        one, two = ledger.create_account(0), ledger.create_account(0)
        ledger.emit(one, "x", b"")
        ledger.emit(two, "x", b"")
        assert [e.emitter for e in ledger.read_events(emitter=two)] == [two]

    def test_bad_topic(self, ledger):
        with pytest.raises(ValueError):
            ledger.emit(ledger.create_account(0), "two words", b"")

    def test_log_round_trip(self, ledger):
        src = ledger.create_account(0)
        ledger.emit(src, "a", b"\x00\xff")
        ledger.advance_block()
        ledger.emit(src, "b", b"")
        assert parse_events(ledger.export_log()) == list(ledger.events)

    def test_truncated_log_reports_line(self, ledger):
        src = ledger.create_account(0)
        for topic in "abc":
            ledger.emit(src, topic, b"xyz")
        text = ledger.export_log()
        with pytest.raises(MalformedLog) as err:
            parse_events(text[:-1])
        assert err.value.line_no == 3

    def test_out_of_order_log_rejected(self, ledger):
        src = ledger.create_account(0)
        e1 = ledger.emit(src, "a", b"")
        e2 = ledger.emit(src, "b", b"")
        with pytest.raises(MalformedLog):
            parse_events(export_events([e2, e1]))

    def test_event_line_format(self):
        event = LedgerEvent(3, 1, Address(b"\xab" * 32), "topic", b"\x01\x02")
        assert event.to_line() == f"3 1 {'ab' * 32} topic 0102"


class TestBlocks:
    def test_advance(self, ledger):
        assert ledger.advance_block() == 1

    def test_n_advances(self, ledger):
        for _ in range(7):
            ledger.advance_block()
        assert ledger.height == 7

    def test_events_carry_new_height(self, ledger):
        src = ledger.create_account(0)
        ledger.advance_block()
        assert ledger.emit(src, "t", b"").height == 1


class TestConservation:
    def test_detects_drift(self, ledger):
        a = ledger.create_account(10)
        ledger._balances[a] = 11
        with pytest.raises(InvariantViolation):
            ledger.check_conservation()


ops = st.lists(
    st.tuples(st.sampled_from(["transfer", "escrow", "release", "block"]), st.integers(0, 4), st.integers(0, 4),
              st.integers(0, 120)),
    max_size=60,
)


def _apply(ledger: Ledger, accounts, escrows, op) -> None:
    kind, i, j, amount = op
    try:
        if kind == "transfer":
            ledger.transfer(accounts[i], accounts[j], amount)
        elif kind == "escrow":
            escrows.append(ledger.escrow(accounts[i], accounts[j], amount))
        elif kind == "release" and escrows:
            ledger.release(escrows[amount % len(escrows)], accounts[j])
        elif kind == "block":
            ledger.advance_block()
            ledger.emit(accounts[i], "tick", amount.to_bytes(2, "big"))
    except (InsufficientFunds, EscrowClosed):
        pass


@settings(max_examples=150, deadline=None)
@given(balances=st.lists(st.integers(0, 200), min_size=5, max_size=5), sequence=ops)
def test_conservation_under_random_operations(balances, sequence):
    ledger = Ledger()
    accounts = [ledger.create_account(b) for b in balances]
    escrows: list[int] = []
    for op in sequence:
        _apply(ledger, accounts, escrows, op)
        ledger.check_conservation()
    held = sum(ledger.balance(a) for a in ledger.accounts())
    assert held + ledger.escrowed_total == sum(balances)


@settings(max_examples=50, deadline=None)
@given(balances=st.lists(st.integers(0, 200), min_size=5, max_size=5), sequence=ops)
def test_identical_operations_give_identical_logs(balances, sequence):
    logs = []
    for _ in range(2):
        ledger = Ledger()
        accounts = [ledger.create_account(b) for b in balances]
        escrows: list[int] = []
        for op in sequence:
            _apply(ledger, accounts, escrows, op)
        logs.append(ledger.export_log())
    assert logs[0] == logs[1]


@settings(max_examples=50, deadline=None)
@given(sequence=ops)
def test_rereading_a_range_is_stable(sequence):
    ledger = Ledger()
    accounts = [ledger.create_account(100) for _ in range(5)]
    escrows: list[int] = []
    snapshots = []
    for op in sequence:
        _apply(ledger, accounts, escrows, op)
        snapshots.append(ledger.read_events(to_height=max(ledger.height - 1, 0)))
    final = ledger.read_events()
    for snap in snapshots:
        assert final[: len(snap)] == snap
