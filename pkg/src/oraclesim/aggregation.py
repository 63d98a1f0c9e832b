"""Aggregators that turn individual oracle answers into one collective answer.

All functions here are pure and order-insensitive: shuffling the input
reveals never changes the result. Numeric answers are fixed-point integers,
so every intermediate is an exact :class:`~fractions.Fraction` and the final
answer is rounded half-to-even back onto the integer grid.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from oraclesim.ledger import Address

AnswerValue = bool | int | bytes

#: Values further than this many MADs from the median are outliers.
MAD_BAND = 3


class AggregationMethod(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"
    TRIMMED = "trimmed"
    REPUTATION_WEIGHTED = "reputation_weighted"
    M_OF_N = "m_of_n"

    @property
    def is_boolean(self) -> bool:
        return self is AggregationMethod.M_OF_N


class ResultStatus(str, enum.Enum):
    DECIDED = "decided"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class AggregationResult:
    answer: AnswerValue | None
    status: ResultStatus
    per_oracle_validity: dict[Address, bool] = field(default_factory=dict)
    contributing: tuple[Address, ...] = ()
    method: AggregationMethod = AggregationMethod.MEDIAN

    @property
    def decided(self) -> bool:
        return self.status is ResultStatus.DECIDED


def is_numeric(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def median(values: Sequence[Fraction | int]) -> Fraction:
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return Fraction(ordered[mid])
    return Fraction(ordered[mid - 1] + ordered[mid], 2)


def to_fixed_point(value: Fraction) -> int:
    return round(value)


def outlier_mask(values: Sequence[int]) -> list[bool]:
    """True for each value inside the median +/- 3*MAD band.

    A zero MAD rejects nothing.
    """
    center = median(values)
    mad = median([abs(v - center) for v in values])
    if mad == 0:
        return [True] * len(values)
    return [abs(v - center) <= MAD_BAND * mad for v in values]


def aggregate_boolean(
    reveals: Sequence[tuple[Address, bool]], threshold_m: int, total_n: int
) -> AggregationResult:
    """m-of-n threshold vote over boolean reveals.

    ``true`` wins once ``threshold_m`` votes say so. ``false`` wins once the
    outstanding and true votes together can no longer reach the threshold.
    Anything in between is undecided; in that case no revealer is blamed.
    """
    if not 0 <= threshold_m <= total_n:
        raise ValueError("need 0 <= m <= n")
    if len(reveals) > total_n:
        raise ValueError("more reveals than oracles")
    trues = sum(1 for _, vote in reveals if vote)
    falses = len(reveals) - trues
    voters = tuple(sorted(addr for addr, _ in reveals))
    if trues >= threshold_m:
        answer = True
    elif total_n - falses < threshold_m:
        answer = False
    else:
        return AggregationResult(
            None,
            ResultStatus.UNDECIDED,
            {addr: True for addr in voters},
            (),
            AggregationMethod.M_OF_N,
        )
    validity = {addr: vote == answer for addr, vote in sorted(reveals)}
    contributing = tuple(addr for addr in voters if validity[addr])
    return AggregationResult(answer, ResultStatus.DECIDED, validity, contributing, AggregationMethod.M_OF_N)


def aggregate_numeric(
    reveals: Sequence[tuple[Address, int]],
    method: AggregationMethod | str = AggregationMethod.MEDIAN,
    weights: Mapping[Address, Fraction] | None = None,
) -> AggregationResult:
    """Numeric aggregation over fixed-point integer reveals.

    Validity for every method is membership in the 3*MAD band around the
    median. ``trimmed`` and ``reputation_weighted`` additionally drop the
    out-of-band values before averaging; the latter weights survivors by
    ``weights`` (renormalized).
    """
    method = AggregationMethod(method)
    if method.is_boolean:
        raise ValueError("use aggregate_boolean for m_of_n")
    if not reveals:
        return AggregationResult(None, ResultStatus.UNDECIDED, {}, (), method)
    ordered = sorted(reveals)
    values = [v for _, v in ordered]
    mask = outlier_mask(values)
    validity = {addr: ok for (addr, _), ok in zip(ordered, mask)}

    if method is AggregationMethod.MEAN:
        survivors = ordered
        answer = Fraction(sum(values), len(values))
    elif method is AggregationMethod.MEDIAN:
        survivors = ordered
        answer = median(values)
    elif method is AggregationMethod.TRIMMED:
        survivors = [r for r, ok in zip(ordered, mask) if ok]
        answer = Fraction(sum(v for _, v in survivors), len(survivors))
    else:
        if weights is None:
            raise ValueError("reputation_weighted needs weights")
        survivors = [r for r, ok in zip(ordered, mask) if ok]
        total = sum(Fraction(weights[a]) for a, _ in survivors)
        if total <= 0:
            return AggregationResult(None, ResultStatus.UNDECIDED, validity, (), method)
        answer = sum(Fraction(weights[a]) * v for a, v in survivors) / total

    contributing = tuple(addr for addr, _ in survivors)
    return AggregationResult(to_fixed_point(answer), ResultStatus.DECIDED, validity, contributing, method)
