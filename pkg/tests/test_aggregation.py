from __future__ import annotations

import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oraclesim.aggregation import (
    AggregationMethod,
    ResultStatus,
    aggregate_boolean,
    aggregate_numeric,
    median,
    outlier_mask,
)
from oraclesim.ledger import Address


def addrs(n: int) -> list[Address]:
    return [Address(bytes([i + 1]) * 32) for i in range(n)]


def counting_oracle(votes: list[bool | None], m: int) -> bool | None:
    """Reference m-of-n count; None entries are oracles that did not reveal."""
    trues = sum(1 for v in votes if v is True)
    missing = sum(1 for v in votes if v is None)
    if trues >= m:
        return True
    if trues + missing < m:
        return False
    return None


class TestBoolean:
    def test_five_of_seven(self):
        reveals = list(zip(addrs(7), [True] * 5 + [False] * 2))
        result = aggregate_boolean(reveals, 5, 7)
        assert result.answer is True
        assert sum(result.per_oracle_validity.values()) == 5

    def test_vacuous_threshold(self):
        result = aggregate_boolean([], 0, 0)
        assert result.decided and result.answer is True

    def test_four_of_seven_with_m5_is_false(self):
        reveals = list(zip(addrs(7), [True] * 4 + [False] * 3))
        assert aggregate_boolean(reveals, 5, 7).answer is False

    def test_undecided_blames_nobody(self):
        reveals = list(zip(addrs(3), [True, True, False]))
        result = aggregate_boolean(reveals, 5, 7)
        assert result.status is ResultStatus.UNDECIDED
        assert result.answer is None
        assert all(result.per_oracle_validity.values())

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            aggregate_boolean([], 4, 3)

    @pytest.mark.parametrize("n", range(0, 6))
    def test_matches_oracle_with_missing_reveals(self, n):
        parties = addrs(n)
        for votes in itertools.product([True, False, None], repeat=n):
            reveals = [(a, v) for a, v in zip(parties, votes) if v is not None]
            for m in range(n + 1):
                result = aggregate_boolean(reveals, m, n)
                assert result.answer == counting_oracle(list(votes), m)


class TestNumeric:
    def test_mean_of_constant(self):
        assert aggregate_numeric(list(zip(addrs(5), [10] * 5)), "mean").answer == 10

    def test_trimmed_rejects_outlier(self):
        a = addrs(5)
        result = aggregate_numeric(list(zip(a, [10, 11, 12, 11, 100])), "trimmed")
        assert result.answer == 11
        assert result.per_oracle_validity[a[4]] is False
        assert a[4] not in result.contributing

    def test_median_of_three(self):
        assert aggregate_numeric(list(zip(addrs(3), [1, 2, 3])), "median").answer == 2

    def test_even_median_rounds_half_to_even(self):
        assert aggregate_numeric(list(zip(addrs(2), [1, 2])), "median").answer == 2
        assert aggregate_numeric(list(zip(addrs(2), [2, 3])), "median").answer == 2

    def test_zero_mad_removes_nothing(self):
        values = [5, 5, 5, 9]
        assert outlier_mask(values) == [True] * 4
        result = aggregate_numeric(list(zip(addrs(4), values)), "trimmed")
        assert result.answer == 6

    def test_empty_is_undecided(self):
        assert aggregate_numeric([], "median").status is ResultStatus.UNDECIDED

    def test_reputation_weighted(self):
        a = addrs(3)
        weights = {a[0]: Fraction(3, 4), a[1]: Fraction(1, 4), a[2]: Fraction(1, 2)}
        result = aggregate_numeric(list(zip(a, [100, 200, 140])), "reputation_weighted", weights)
        # (0.75*100 + 0.25*200 + 0.5*140) / 1.5 = 130
        assert result.answer == 130

    def test_reputation_weighted_needs_weights(self):
        with pytest.raises(ValueError):
            aggregate_numeric(list(zip(addrs(2), [1, 2])), "reputation_weighted")

    def test_m_of_n_is_not_numeric(self):
        with pytest.raises(ValueError):
            aggregate_numeric([], AggregationMethod.M_OF_N)

    def test_median_helper(self):
        assert median([3, 1, 2, 4]) == Fraction(5, 2)


@settings(max_examples=200, deadline=None)
@given(
    truth=st.integers(-10**12, 10**12),
    honest=st.integers(1, 6),
    liars=st.lists(st.integers(-10**12, 10**12), max_size=5),
)
def test_honest_majority_median(truth, honest, liars):
    if honest <= len(liars):
        liars = liars[: honest - 1]
    values = [truth] * honest + liars
    result = aggregate_numeric(list(zip(addrs(len(values)), values)), "median")
    assert result.answer == truth


@settings(max_examples=200, deadline=None)
@given(values=st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=9), seed=st.randoms())
def test_order_independence(values, seed):
    parties = addrs(len(values))
    pairs = list(zip(parties, values))
    shuffled = pairs[:]
    seed.shuffle(shuffled)
    for method in ("mean", "median", "trimmed"):
        assert aggregate_numeric(pairs, method) == aggregate_numeric(shuffled, method)
