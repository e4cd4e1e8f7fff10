"""Witness agreement thresholds under at most F faulty witnesses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


@dataclass(frozen=True)
class AgreementParams:
    N: int
    F: int
    M: int

    def __post_init__(self):
        if self.F < 0 or self.N < 1:
            raise ValueError("need N >= 1 and F >= 0")
        if not 1 <= self.M <= self.N:
            raise ValueError(f"tally M={self.M} outside 1..{self.N}")

    def classify(self) -> "Classification":
        return classify(self.N, self.F)

    @property
    def immune(self) -> bool:
        return self.M in self.classify().immune_range


@dataclass(frozen=True)
class Classification:
    N: int
    F: int
    proper_bound: int
    intact: bool
    immune_range: range

    @property
    def immune_lower(self) -> int:
        return self.immune_range.start

    @property
    def immune_upper(self) -> int:
        return self.immune_range.stop - 1


def immune_lower_bound(N: int, F: int) -> int:
    # ceil((N + F + 1) / 2) in integers
    return (N + F + 2) // 2


def classify(N: int, F: int) -> Classification:
    if N < 1 or F < 0:
        raise ValueError("need N >= 1 and F >= 0")
    return Classification(
        N=N, F=F,
        proper_bound=F + 1,
        intact=N >= 2 * F + 1,
        immune_range=range(immune_lower_bound(N, F), N - F + 1),
    )


@dataclass(frozen=True)
class TableRow:
    F: int
    N: int
    three_f_plus_one: int
    lower: int
    upper: int
    tallies: tuple[int, ...]


def immunity_table(F: int, Ns: Optional[Iterable[int]] = None) -> list[TableRow]:
    """Rows of immune tallies for N from 3F+1 upwards (six rows by default)."""
    Ns = range(3 * F + 1, 3 * F + 7) if Ns is None else Ns
    rows = []
    for N in Ns:
        c = classify(N, F)
        rows.append(TableRow(F, N, 3 * F + 1, c.immune_lower, N - F, tuple(c.immune_range)))
    return rows


_MEMBERSHIP_CACHE: dict[int, np.ndarray] = {}


def _memberships(N: int) -> np.ndarray:
    """Every covering pair (A, B) as a ternary code per witness.

    0 = only in A, 1 = only in B, 2 = in both. Returns per-pair counts
    (|A|, |B|, |A & B|) with shape (3**N, 3).
    """
    if N not in _MEMBERSHIP_CACHE:
        codes = np.arange(3**N, dtype=np.int64)
        digits = np.empty((3**N, N), dtype=np.int8)
        for j in range(N):
            digits[:, j] = codes % 3
            codes //= 3
        only_a = (digits == 0).sum(axis=1)
        only_b = (digits == 1).sum(axis=1)
        both = (digits == 2).sum(axis=1)
        _MEMBERSHIP_CACHE[N] = np.stack([only_a + both, only_b + both, both], axis=1)
    return _MEMBERSHIP_CACHE[N]


def immune_split_check(N: int, F: int, M: int) -> bool:
    """Brute force: do all covering pairs of M-sized agreements share F+1 witnesses?"""
    if N > 14:
        raise ValueError("enumeration is limited to N <= 14")
    counts = _memberships(N)
    big = (counts[:, 0] >= M) & (counts[:, 1] >= M)
    return bool(np.all(counts[big, 2] >= F + 1))


@dataclass(frozen=True)
class AgreementRecord:
    prefix: str
    sn: int
    digest: str
    witnesses: frozenset

    @property
    def size(self) -> int:
        return len(self.witnesses)


@dataclass(frozen=True)
class Judgment:
    accountable: bool
    sufficient: bool
    jointly_confirmed: Optional[bool]


def judge(
    record: AgreementRecord,
    params: AgreementParams,
    prev_params: Optional[AgreementParams] = None,
    *,
    witnesses: Optional[Iterable[str]] = None,
    prev_witnesses: Optional[Iterable[str]] = None,
    threshold: Optional[int] = None,
) -> Judgment:
    """Judge one agreement.

    ``params.M`` is the controller's tally; ``threshold`` lets a validator
    demand more. Joint confirmation is only evaluated for events that change
    the witness set, and only when both sets are given.
    """
    current = set(witnesses) if witnesses is not None else None
    counted = record.witnesses & current if current is not None else record.witnesses
    size = len(counted)
    accountable = size >= params.M
    sufficient = size >= (params.M if threshold is None else threshold)
    joint = None
    if prev_params is not None and prev_witnesses is not None and current is not None:
        previous = set(prev_witnesses)
        if previous != current:
            joint = (
                len(record.witnesses & previous) >= prev_params.M
                and len(record.witnesses & current) >= params.M
            )
    return Judgment(accountable, sufficient, joint)
