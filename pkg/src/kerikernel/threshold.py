"""Signing thresholds: integer counts and fractionally weighted clauses.

Weighted thresholds use exact :class:`fractions.Fraction` arithmetic. A list of
clauses is satisfied only when every clause is; clause ``j`` covers the key
offsets immediately after those of clause ``j - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union


class ThresholdError(ValueError):
    pass


class IndexOutOfRange(ThresholdError):
    pass


@dataclass(frozen=True)
class SigningThreshold:
    count: int | None = None
    clauses: tuple[tuple[Fraction, ...], ...] = ()
    nested: bool = False

    def __post_init__(self):
        if self.count is not None:
            if self.clauses:
                raise ThresholdError("a threshold is either a count or weights, not both")
            if self.count < 1:
                raise ThresholdError("integer threshold must be at least 1")
            return
        if not self.clauses:
            raise ThresholdError("empty threshold")
        for clause in self.clauses:
            if not clause:
                raise ThresholdError("empty weight clause")
            for w in clause:
                if not 0 < w <= 1:
                    raise ThresholdError(f"weight {w} outside (0, 1]")
            if sum(clause) < 1:
                raise ThresholdError("a weight clause can never be satisfied")

    @property
    def weighted(self) -> bool:
        return self.count is None

    @property
    def size(self) -> int | None:
        """Number of keys a weighted threshold spans; None for counts."""
        if self.count is not None:
            return None
        return sum(len(c) for c in self.clauses)

    def check_keys(self, key_count: int) -> None:
        if self.count is not None:
            if self.count > key_count:
                raise ThresholdError(f"threshold {self.count} exceeds {key_count} keys")
        elif self.size != key_count:
            raise ThresholdError(f"threshold spans {self.size} keys, event has {key_count}")

    def satisfies(self, indices: Iterable[int], key_count: int | None = None) -> bool:
        idx = set(indices)
        limit = self.size if key_count is None else key_count
        if limit is not None:
            bad = [i for i in idx if not 0 <= i < limit]
            if bad:
                raise IndexOutOfRange(f"signer offsets {sorted(bad)} outside 0..{limit - 1}")
        if self.count is not None:
            return len(idx) >= self.count
        start = 0
        for clause in self.clauses:
            total = sum((w for j, w in enumerate(clause, start) if j in idx), Fraction(0))
            if total < 1:
                return False
            start += len(clause)
        return True

    def to_sad(self) -> Union[str, list]:
        """Field value used in serialized events."""
        if self.count is not None:
            return f"{self.count:x}"
        rows = [[_frac_text(w) for w in clause] for clause in self.clauses]
        return rows if self.nested else rows[0]

    def __str__(self) -> str:
        sad = self.to_sad()
        return sad if isinstance(sad, str) else repr(sad)


def _frac_text(w: Fraction) -> str:
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def _weight(v) -> Fraction:
    if isinstance(v, float):
        raise ThresholdError("weights must be exact rationals, not floats")
    try:
        return Fraction(v)
    except (ValueError, ZeroDivisionError) as exc:
        raise ThresholdError(f"bad weight {v!r}") from exc


def parse_threshold(value) -> SigningThreshold:
    """Accept an int, hex text, a weight list or a list of weight lists."""
    if isinstance(value, SigningThreshold):
        return value
    if isinstance(value, bool):
        raise ThresholdError("boolean is not a threshold")
    if isinstance(value, int):
        return SigningThreshold(count=value)
    if isinstance(value, str):
        try:
            return SigningThreshold(count=int(value, 16))
        except ValueError:
            raise ThresholdError(f"bad threshold text {value!r}") from None
    if isinstance(value, (list, tuple)):
        if value and all(isinstance(v, (list, tuple)) for v in value):
            return SigningThreshold(
                clauses=tuple(tuple(_weight(w) for w in c) for c in value), nested=True
            )
        return SigningThreshold(clauses=(tuple(_weight(w) for w in value),))
    raise ThresholdError(f"cannot interpret {value!r} as a threshold")


def satisfies(threshold, indices: Iterable[int], key_count: int | None = None) -> bool:
    return parse_threshold(threshold).satisfies(indices, key_count)
