"""
Counting functions over the largest and second-largest prime factors.

``psi``/``psi2`` count n <= x whose largest / second-largest (strict) prime
factor is at most y, with n = 1 counted and the second-largest factor taken
as 1 when omega(n) < 2. The ``*_many`` variants answer several y in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, PreconditionError
from .sieve import DEFAULT_BLOCK_SIZE, map_blocks

Number = Union[int, Fraction]


@dataclass(frozen=True)
class SmoothCount:
    x: int
    y: int
    value: int


@dataclass
class ResidueCountTable:
    x: int
    k: int
    side: str
    counts: list[int]
    undefined_count: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.undefined_count

    def coprime_counts(self) -> dict[int, int]:
        return {l: c for l, c in enumerate(self.counts) if math.gcd(l, self.k) == 1}


def root_floor(x: int, alpha: Number) -> int:
    """floor(x ** (1/alpha)) computed exactly for rational alpha >= 1."""
    a = Fraction(alpha)
    if a <= 0:
        raise DomainError("alpha must be positive")
    if x < 1:
        raise DomainError("x must be >= 1")
    p, q = a.numerator, a.denominator
    # largest y with y^p <= x^q
    target = x**q
    y = int(math.floor(math.exp(math.log(x) * q / p))) if x > 1 else 1
    y = max(y, 1)
    while y**p > target:
        y -= 1
    while (y + 1) ** p <= target:
        y += 1
    return y


def _count_leq(values: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """For each y, how many entries are <= y (values sorted internally)."""
    v = np.sort(values)
    return np.searchsorted(v, ys, side="right")


def _smooth_many(x, ys, column, block_size, workers):
    if x < 1:
        raise PreconditionError("x must be >= 1")
    ys = [int(y) for y in ys]
    if any(y < 1 for y in ys):
        raise PreconditionError("y must be >= 1")
    y_arr = np.array(ys, dtype=np.int64)

    def per_block(block):
        col = getattr(block, column).astype(np.int64)
        # absent factor counts as 1, which every y >= 1 admits
        col = np.where(col == 0, 1, col)
        return _count_leq(col, y_arr)

    total = np.ones(len(ys), dtype=np.int64)  # n = 1
    for part in map_blocks(per_block, x, block_size, workers):
        total += part
    return [int(v) for v in total]


def psi_many(x: int, ys: Sequence[int], block_size=DEFAULT_BLOCK_SIZE, workers=None) -> list[int]:
    return _smooth_many(x, ys, "lpf", block_size, workers)


def psi2_many(x: int, ys: Sequence[int], block_size=DEFAULT_BLOCK_SIZE, workers=None) -> list[int]:
    return _smooth_many(x, ys, "p2_strict", block_size, workers)


def psi(x: int, y: int, block_size=DEFAULT_BLOCK_SIZE, workers=None) -> int:
    """#{n <= x : P(n) <= y}."""
    return psi_many(x, [y], block_size, workers)[0]


def psi2(x: int, y: int, block_size=DEFAULT_BLOCK_SIZE, workers=None) -> int:
    """#{n <= x : P_2(n) <= y}, strict second-largest factor, 1 when omega(n) < 2."""
    return psi2_many(x, [y], block_size, workers)[0]


def repeated_lpf_count(x: int, block_size=DEFAULT_BLOCK_SIZE, workers=None) -> int:
    """#{2 <= n <= x : P(n)^2 divides n}."""
    if x < 2:
        raise PreconditionError("x must be >= 2")

    def per_block(block):
        P = block.lpf.astype(np.int64)
        return int(np.count_nonzero((block.n // P) % P == 0))

    return sum(map_blocks(per_block, x, block_size, workers))


def strict_mult_disagreements(x: int, block_size=DEFAULT_BLOCK_SIZE, workers=None) -> int:
    """#{2 <= n <= x : the two second-largest-factor definitions differ}."""

    def per_block(block):
        return int(np.count_nonzero(block.p2_strict != block.p2_mult))

    return sum(map_blocks(per_block, x, block_size, workers))


def residue_counts(
    x: int, k: int, side: str = "largest", block_size=DEFAULT_BLOCK_SIZE, workers=None
) -> ResidueCountTable:
    """Counts of P(n) or P_2(n) modulo k over 2 <= n <= x; omega(n) < 2 goes to undefined_count."""
    if x < 2:
        raise PreconditionError("x must be >= 2")
    if k < 1:
        raise DomainError("modulus must be >= 1")
    if side not in ("largest", "second_largest"):
        raise DomainError(f"unknown side {side!r}")
    column = "lpf" if side == "largest" else "p2_strict"

    def per_block(block):
        col = getattr(block, column).astype(np.int64)
        defined = col[col > 0]
        counts = np.bincount(defined % k, minlength=k)
        return counts, len(col) - len(defined)

    counts = np.zeros(k, dtype=np.int64)
    undefined = 0
    for c, u in map_blocks(per_block, x, block_size, workers):
        counts += c
        undefined += u
    return ResidueCountTable(x, k, side, [int(c) for c in counts], undefined)


def smooth_counts(
    x: int, ys: Sequence[int], second: bool = False, block_size=DEFAULT_BLOCK_SIZE, workers=None
) -> list[SmoothCount]:
    fn = psi2_many if second else psi_many
    return [SmoothCount(x, y, v) for y, v in zip(ys, fn(x, ys, block_size, workers))]
