"""
Grid solution of the Dickman function.

rho(alpha) = 1 for 0 <= alpha <= 1 and, beyond that,

    rho(alpha) = 1 - integral_1^alpha rho(u - 1) du / u.

On [1, 2] the march goes one cell [a, a + h] at a time: the delayed values
rho(u - 1) on the cell are already on the grid, are interpolated linearly,
and their product with 1/u is integrated exactly (a product trapezoidal
rule). rho(u - 1) = 1 there, so this stretch is exact up to rounding.

Past alpha = 2 the same equation is used in its averaged form

    alpha rho(alpha) = integral_{alpha-1}^alpha rho(t) dt,

discretized by the trapezoidal rule. Every term is positive, so errors stay
relative and the far tail (rho(16) ~ 1e-21) keeps its sign, which the
subtractive form cannot do once rho drops below its O(h^2) absolute error.
Both stretches are O(h^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numba
import numpy as np

from .distribution import psi_many, psi2_many, root_floor
from .errors import PreconditionError
from .sieve import DEFAULT_BLOCK_SIZE

DEFAULT_STEP = Fraction(1, 1024)
DEFAULT_ALPHA_MAX = 16


@dataclass
class RhoTable:
    step: Fraction
    alpha_max: float
    values: np.ndarray  # rho at 0, h, 2h, ...

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) * float(self.step)

    def __call__(self, alpha: float) -> float:
        alpha = float(alpha)
        if alpha < 0:
            raise PreconditionError("alpha must be >= 0")
        if alpha > self.alpha_max + 1e-12:
            raise PreconditionError(f"alpha {alpha} beyond table end {self.alpha_max}")
        pos = alpha / float(self.step)
        i = int(math.floor(pos))
        if i >= len(self.values) - 1:
            return float(self.values[-1])
        t = pos - i
        return float((1 - t) * self.values[i] + t * self.values[i + 1])


def _as_step(h) -> Fraction:
    if isinstance(h, str):
        h = h.strip()
        if h.startswith("2^"):
            return Fraction(2) ** int(h[2:])
    return Fraction(h).limit_denominator(1 << 40)


@numba.njit(cache=True)
def _march_kernel(N, steps, hf):
    rho = np.ones(steps + 1)
    for i in range(N + 1, min(steps, 2 * N) + 1):
        a = (i - 1) * hf  # cell [a, a + h]
        left = rho[i - 1 - N]
        right = rho[i - N]
        slope = (right - left) / hf
        # integral of (left + slope (u - a)) / u over the cell
        integral = (left - slope * a) * math.log1p(hf / a) + slope * hf
        rho[i] = rho[i - 1] - integral
    for i in range(2 * N + 1, steps + 1):
        inner = 0.0
        for j in range(i - N + 1, i):
            inner += rho[j]
        # alpha_i rho_i = h (rho_{i-N} / 2 + inner + rho_i / 2)
        rho[i] = hf * (0.5 * rho[i - N] + inner) / (i * hf - 0.5 * hf)
    return rho


def _march(alpha_max: float, h: Fraction) -> np.ndarray:
    N = int(1 / h)
    steps = int(math.ceil(alpha_max * N - 1e-9))
    return _march_kernel(N, steps, float(h))


def build_rho_table(
    alpha_max: float = DEFAULT_ALPHA_MAX,
    h: Union[Fraction, float, str] = DEFAULT_STEP,
    richardson: bool = False,
) -> RhoTable:
    """Tabulate rho on [0, alpha_max] with step h (1/h must be an integer, h <= 1/64).

    With ``richardson`` the table is (4 rho_{h/2} - rho_h) / 3 on the h grid.
    """
    step = _as_step(h)
    if alpha_max < 1:
        raise PreconditionError("alpha_max must be >= 1")
    if step <= 0 or step > Fraction(1, 64):
        raise PreconditionError(f"step {step} must lie in (0, 1/64]")
    if (1 / step).denominator != 1:
        raise PreconditionError(f"1/step must be an integer, got step {step}")
    coarse = _march(alpha_max, step)
    if richardson:
        fine = _march(alpha_max, step / 2)[::2][: len(coarse)]
        coarse = (4 * fine - coarse) / 3
    return RhoTable(step, float(alpha_max), coarse)


def smooth_ratio(
    x: int,
    alpha: Union[Fraction, int, str],
    rho: RhoTable,
    block_size=DEFAULT_BLOCK_SIZE,
    workers=None,
) -> float:
    """Psi(x, floor(x^(1/alpha))) / (x rho(alpha))."""
    return smooth_ratios(x, [alpha], rho, block_size, workers)[0]


def smooth_ratios(x, alphas, rho: RhoTable, block_size=DEFAULT_BLOCK_SIZE, workers=None):
    alphas = [Fraction(a) for a in alphas]
    for a in alphas:
        if a < 1:
            raise PreconditionError("alpha must be >= 1")
        if float(a) > rho.alpha_max + 1e-12:
            raise PreconditionError(f"rho table ends at {rho.alpha_max} < alpha {a}")
    ys = [root_floor(x, a) for a in alphas]
    if any(y < 2 for y in ys):
        raise PreconditionError("x^(1/alpha) must be >= 2")
    counts = psi_many(x, ys, block_size, workers)
    return [c / (x * rho(float(a))) for c, a in zip(counts, alphas)]


def rho2_empirical(x: int, alpha, block_size=DEFAULT_BLOCK_SIZE, workers=None) -> float:
    """Psi_2(x, floor(x^(1/alpha))) / x."""
    return rho2_empirical_many(x, [alpha], block_size, workers)[0]


def rho2_empirical_many(x, alphas, block_size=DEFAULT_BLOCK_SIZE, workers=None):
    alphas = [Fraction(a) for a in alphas]
    if any(a < 1 for a in alphas):
        raise PreconditionError("alpha must be >= 1")
    ys = [root_floor(x, a) for a in alphas]
    return [c / x for c in psi2_many(x, ys, block_size, workers)]
