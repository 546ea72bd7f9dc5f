"""
Streaming partial sums of mu(n), mu(n)omega(n) and their harmonic versions.

One pass over the sieve blocks fills a :class:`SeriesTable`. Residue slices
are grouped by (side, modulus): a single kernel call buckets every n by the
residue of its chosen prime factor, so all residues of one modulus cost the
same as one. Harmonic columns use Neumaier summation inside a block and
across blocks, which are always folded in ascending order.

The unsliced columns run over 1 <= n <= x (so M(10) = -1, the classical
Mertens value); sliced columns run over 2 <= n <= x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .duality import PrimeCharFn
from .errors import DomainError, PreconditionError
from .sieve import DEFAULT_BLOCK_SIZE, FactorBlock, factorize, map_blocks

SIDES = ("smallest", "largest", "second_largest")
UNDEF = "undef"
_EPS = 2.0**-53

INT_STATS = ("M", "M_omega")
FLOAT_STATS = ("m", "m_omega")


class Compensated(NamedTuple):
    value: float
    err_bound: float


@dataclass(frozen=True)
class SliceSpec:
    k: int
    l: int
    side: str = "smallest"
    coprime_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"modulus must be >= 1, got {self.k}")
        if not 0 <= self.l < self.k:
            raise DomainError(f"residue {self.l} not in [0, {self.k})")
        if self.side not in SIDES:
            raise DomainError(f"unknown side {self.side!r}")
        if self.coprime_only and math.gcd(self.l, self.k) != 1:
            raise DomainError(f"residue {self.l} is not coprime to {self.k}")

    @property
    def coprime(self) -> bool:
        return math.gcd(self.l, self.k) == 1


@dataclass(frozen=True)
class KappaPair:
    x: int
    sum_P1: int
    sum_P2: int


def _side_key(block: FactorBlock, side: str) -> np.ndarray:
    if side == "smallest":
        return block.spf
    if side == "largest":
        return block.lpf
    return block.p2_strict


def default_checkpoints(limit: int, start: int = 100) -> list[int]:
    """Powers of ten from ``start`` up to ``limit`` (limit itself appended if not a power)."""
    out = []
    x = start
    while x <= limit:
        out.append(x)
        x *= 10
    if not out or out[-1] != limit:
        out.append(limit)
    return out


def _check_checkpoints(checkpoints, limit):
    cps = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise PreconditionError("checkpoints must be strictly increasing")
    if cps and cps[-1] > limit:
        raise PreconditionError(f"checkpoint {cps[-1]} beyond limit {limit}")
    if cps and cps[0] < 1:
        raise PreconditionError("checkpoints must be >= 1")
    return cps


def _cuts(block: FactorBlock, checkpoints: Sequence[int]):
    """Local exclusive end offsets of the checkpoints falling inside ``block``."""
    return np.array(
        [c - block.lo + 1 for c in checkpoints if block.lo <= c < block.hi], dtype=np.int64
    )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@numba.njit(nogil=True, cache=True, inline="always")
def _neumaier(s, c, v):
    t = s + v
    if abs(s) >= abs(v):
        c += (s - t) + v
    else:
        c += (v - t) + s
    return t, c


@numba.njit(nogil=True, cache=True)
def _bucket_kernel(lo, mu, omega, key, k, cuts):
    """Per-bucket sums with snapshots at ``cuts``; bucket k collects key == 0.

    ints[j, b] = (M, M_omega); flts[j, b] = (m, m_comp, mw, mw_comp, |m|, |mw|)
    row j < len(cuts) is the snapshot at cuts[j], the last row is the block total.
    """
    size = mu.shape[0]
    ncut = cuts.shape[0]
    ints = np.zeros((ncut + 1, k + 1, 2), dtype=np.int64)
    flts = np.zeros((ncut + 1, k + 1, 6), dtype=np.float64)
    acc_i = np.zeros((k + 1, 2), dtype=np.int64)
    acc_f = np.zeros((k + 1, 6), dtype=np.float64)
    j = 0
    for i in range(size + 1):
        while j < ncut and cuts[j] == i:
            ints[j] = acc_i
            flts[j] = acc_f
            j += 1
        if i == size:
            break
        u = mu[i]
        if u == 0:
            continue
        kk = key[i]
        b = k if kk == 0 else kk % k
        w = np.int64(u) * np.int64(omega[i])
        n = float(lo + i)
        acc_i[b, 0] += u
        acc_i[b, 1] += w
        t = u / n
        tw = w / n
        s, c = _neumaier(acc_f[b, 0], acc_f[b, 1], t)
        acc_f[b, 0] = s
        acc_f[b, 1] = c
        s, c = _neumaier(acc_f[b, 2], acc_f[b, 3], tw)
        acc_f[b, 2] = s
        acc_f[b, 3] = c
        acc_f[b, 4] += abs(t)
        acc_f[b, 5] += abs(tw)
    ints[ncut] = acc_i
    flts[ncut] = acc_f
    return ints, flts


@numba.njit(nogil=True, cache=True)
def _frac_kernel(lo, x, mu, omega, fv):
    # sum of mu(n) omega(n) f(p(n)) {x/n}, Neumaier; also |terms|
    s = 0.0
    c = 0.0
    a = 0.0
    for i in range(mu.shape[0]):
        w = np.int64(mu[i]) * np.int64(omega[i]) * fv[i]
        if w == 0:
            continue
        n = lo + i
        t = w * ((x % n) / n)
        s, c = _neumaier(s, c, t)
        a += abs(t)
    return s, c, a


class _NeumaierAcc:
    __slots__ = ("s", "c", "abs", "terms")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0
        self.abs = 0.0
        self.terms = 0

    def add(self, v: float):
        t = self.s + v
        if abs(self.s) >= abs(v):
            self.c += (self.s - t) + v
        else:
            self.c += (v - t) + self.s
        self.s = t

    def fold(self, s: float, c: float, a: float, terms: int):
        self.add(float(s))
        self.add(float(c))
        self.abs += float(a)
        self.terms += terms

    def copy(self):
        out = _NeumaierAcc()
        out.s, out.c, out.abs, out.terms = self.s, self.c, self.abs, self.terms
        return out

    def result(self) -> Compensated:
        # division rounding per term plus Neumaier bound
        bound = (3 * _EPS + self.terms * _EPS * _EPS) * self.abs
        return Compensated(self.s + self.c, bound)


# ---------------------------------------------------------------------------
# series table
# ---------------------------------------------------------------------------


@dataclass
class SeriesTable:
    """Partial sums at each checkpoint.

    ``unsliced[stat]`` and ``sliced[(side, k, l)][stat]`` are lists aligned
    with ``checkpoints``; ``l`` is ``"undef"`` for the bucket of n whose
    chosen factor does not exist. Float entries are :class:`Compensated`.
    """

    checkpoints: list[int]
    unsliced: dict = field(default_factory=dict)
    sliced: dict = field(default_factory=dict)

    def column(self, stat: str, k: Optional[int] = None, l=None, side: str = "smallest"):
        if k is None:
            col = self.unsliced[stat]
        else:
            col = self.sliced[(side, k, l)][stat.replace("_slice", "")]
        return [v.value if isinstance(v, Compensated) else v for v in col]

    def at(self, x: int, stat: str, k=None, l=None, side="smallest"):
        return self.column(stat, k, l, side)[self.checkpoints.index(x)]

    def rows(self, side: Optional[str] = None, unsliced: bool = True):
        """Long-format rows (x, stat, k, l, value, err_bound).

        ``side`` keeps only slices on that side; ``unsliced`` toggles the
        plain columns.
        """
        out = []
        for j, x in enumerate(self.checkpoints):
            if unsliced:
                for stat in INT_STATS + FLOAT_STATS:
                    out.append(_row(x, stat, "", "", self.unsliced[stat][j]))
            for (s, k, l), cols in self.sliced.items():
                if side is not None and s != side:
                    continue
                for stat in INT_STATS + FLOAT_STATS:
                    out.append(_row(x, stat + "_slice", k, l, cols[stat][j]))
        return out


def _row(x, stat, k, l, v):
    if isinstance(v, Compensated):
        return (x, stat, k, l, repr(v.value), repr(v.err_bound))
    return (x, stat, k, l, str(v), "0")


def accumulate_series(
    limit: int,
    slices: Sequence[SliceSpec] = (),
    checkpoints: Optional[Sequence[int]] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
    include_undefined: bool = False,
) -> SeriesTable:
    """One streaming pass computing M, m, M_omega, m_omega, plain and sliced.

    Every residue of each requested (side, modulus) is computed; only the
    requested slices are stored, plus the undefined bucket of
    ``second_largest`` slices when ``include_undefined`` is set.
    """
    if limit < 1:
        raise PreconditionError("limit must be >= 1")
    cps = _check_checkpoints(
        default_checkpoints(limit) if checkpoints is None else checkpoints, limit
    )
    groups = {("smallest", 1)}
    groups.update((s.side, s.k) for s in slices)
    groups = sorted(groups)

    def per_block(block: FactorBlock):
        cuts = _cuts(block, cps)
        res = {}
        for side, k in groups:
            res[(side, k)] = _bucket_kernel(
                block.lo, block.mu, block.omega, _side_key(block, side), k, cuts
            )
        terms = int(np.count_nonzero(block.mu))
        cut_terms = [int(np.count_nonzero(block.mu[:c])) for c in cuts]
        return block.lo, block.hi, res, terms, cut_terms

    # running totals per (side, k, bucket)
    run_int = {g: np.zeros((g[1] + 1, 2), dtype=object) for g in groups}
    run_flt = {g: [[_NeumaierAcc(), _NeumaierAcc()] for _ in range(g[1] + 1)] for g in groups}
    snaps: dict[int, tuple] = {}

    # n = 1 belongs to the unsliced columns only
    one_int = {"M": 1, "M_omega": 0}

    for lo, hi, res, terms, cut_terms in map_blocks(per_block, limit, block_size, workers):
        local_cps = [c for c in cps if lo <= c < hi]
        for j, c in enumerate(local_cps):
            snap = {}
            for g in groups:
                ints, flts = res[g]
                buckets = []
                for b in range(g[1] + 1):
                    m_acc, mw_acc = run_flt[g][b]
                    m_acc, mw_acc = m_acc.copy(), mw_acc.copy()
                    m_acc.fold(flts[j, b, 0], flts[j, b, 1], flts[j, b, 4], cut_terms[j])
                    mw_acc.fold(flts[j, b, 2], flts[j, b, 3], flts[j, b, 5], cut_terms[j])
                    buckets.append(
                        (
                            int(run_int[g][b, 0]) + int(ints[j, b, 0]),
                            int(run_int[g][b, 1]) + int(ints[j, b, 1]),
                            m_acc,
                            mw_acc,
                        )
                    )
                snap[g] = buckets
            snaps[c] = snap
        for g in groups:
            ints, flts = res[g]
            for b in range(g[1] + 1):
                run_int[g][b, 0] += int(ints[-1, b, 0])
                run_int[g][b, 1] += int(ints[-1, b, 1])
                run_flt[g][b][0].fold(flts[-1, b, 0], flts[-1, b, 1], flts[-1, b, 4], terms)
                run_flt[g][b][1].fold(flts[-1, b, 2], flts[-1, b, 3], flts[-1, b, 5], terms)

    table = SeriesTable(checkpoints=cps)
    table.unsliced = {s: [] for s in INT_STATS + FLOAT_STATS}
    wanted = []
    for s in slices:
        wanted.append((s.side, s.k, s.l))
    if include_undefined:
        for side, k in groups:
            if side == "second_largest":
                wanted.append((side, k, UNDEF))
    for key in dict.fromkeys(wanted):
        table.sliced[key] = {s: [] for s in INT_STATS + FLOAT_STATS}

    for c in cps:
        if c == 1:
            # only n = 1
            table.unsliced["M"].append(1)
            table.unsliced["M_omega"].append(0)
            table.unsliced["m"].append(Compensated(1.0, 0.0))
            table.unsliced["m_omega"].append(Compensated(0.0, 0.0))
            for cols in table.sliced.values():
                cols["M"].append(0)
                cols["M_omega"].append(0)
                cols["m"].append(Compensated(0.0, 0.0))
                cols["m_omega"].append(Compensated(0.0, 0.0))
            continue
        snap = snaps[c]
        M, Mw, m_acc, mw_acc = snap[("smallest", 1)][0]
        m_acc = m_acc.copy()
        m_acc.add(1.0)
        table.unsliced["M"].append(M + one_int["M"])
        table.unsliced["M_omega"].append(Mw + one_int["M_omega"])
        table.unsliced["m"].append(m_acc.result())
        table.unsliced["m_omega"].append(mw_acc.result())
        for (side, k, l), cols in table.sliced.items():
            b = k if l == UNDEF else l
            M, Mw, m_acc, mw_acc = snap[(side, k)][b]
            cols["M"].append(M)
            cols["M_omega"].append(Mw)
            cols["m"].append(m_acc.result())
            cols["m_omega"].append(mw_acc.result())
    return table


def all_residue_slices(k: int, side: str = "smallest") -> list[SliceSpec]:
    return [SliceSpec(k, l, side) for l in range(k)]


# ---------------------------------------------------------------------------
# weighted sums at a single x
# ---------------------------------------------------------------------------

WEIGHTS = ("unit", "omega_minus_1", "omega")


def _weight(block: FactorBlock, weight: str) -> np.ndarray:
    w = block.omega.astype(np.int64)
    if weight == "unit":
        return np.ones_like(w)
    if weight == "omega_minus_1":
        return w - 1
    if weight == "omega":
        return w
    raise DomainError(f"unknown weight {weight!r}")


def _fvals(f: PrimeCharFn, primes: np.ndarray) -> np.ndarray:
    out = np.zeros(primes.shape[0], dtype=np.int64)
    mask = primes > 0
    out[mask] = f.values(primes[mask].astype(np.int64))
    return out


def floor_weighted_sum(
    x: int,
    f: PrimeCharFn,
    weight: str = "unit",
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
) -> int:
    """Exact sum over 1 < d <= x of mu(d) w(d) f(p(d)) floor(x/d)."""
    if x < 2:
        raise PreconditionError("x must be >= 2")
    if weight not in WEIGHTS:
        raise DomainError(f"unknown weight {weight!r}")

    def per_block(block):
        n = block.n
        terms = block.mu.astype(np.int64) * _weight(block, weight) * _fvals(f, block.spf)
        return int(np.dot(terms, x // n))

    return sum(map_blocks(per_block, x, block_size, workers))


def _slice_indicator(block: FactorBlock, s: Optional[SliceSpec]) -> np.ndarray:
    if s is None:
        return np.ones(len(block), dtype=np.int64)
    key = _side_key(block, s.side).astype(np.int64)
    return ((key > 0) & (key % s.k == s.l)).astype(np.int64)


def frac_weighted_sum(
    x: int,
    slice: Optional[SliceSpec] = None,
    f: Optional[PrimeCharFn] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
) -> Compensated:
    """Sum over 1 < n <= x (in the slice) of mu(n) omega(n) f(p(n)) {x/n}.

    Needs its own pass for each x since the weight depends on x.
    """
    if x < 2:
        raise PreconditionError("x must be >= 2")
    acc = _NeumaierAcc()

    def per_block(block):
        fv = _slice_indicator(block, slice)
        if f is not None:
            fv = fv * _fvals(f, block.spf)
        s, c, a = _frac_kernel(block.lo, x, block.mu, block.omega, fv)
        return s, c, a, int(np.count_nonzero(block.mu))

    for s, c, a, terms in map_blocks(per_block, x, block_size, workers):
        acc.fold(s, c, a, terms)
    return acc.result()


def frac_weighted_sum_exact(x: int, slice: Optional[SliceSpec] = None) -> Fraction:
    """Exact rational version of :func:`frac_weighted_sum` by trial division (small x)."""
    total = Fraction(0)
    for n in range(2, x + 1):
        fac = factorize(n)
        if any(e > 1 for _, e in fac):
            continue
        if slice is not None:
            ps = [p for p, _ in fac]
            key = {"smallest": ps[0], "largest": ps[-1]}.get(
                slice.side, ps[-2] if len(ps) >= 2 else 0
            )
            if not key or key % slice.k != slice.l:
                continue
        total += (-1) ** len(fac) * len(fac) * Fraction(x % n, n)
    return total


# ---------------------------------------------------------------------------
# largest-prime-factor side
# ---------------------------------------------------------------------------


def _checkpoint_int_sums(per_block_values, limit, checkpoints, block_size, workers, ncols):
    """Generic streaming prefix sums of integer per-n columns at checkpoints."""
    cps = _check_checkpoints(checkpoints, limit)

    def per_block(block):
        vals = per_block_values(block)  # shape (ncols, len(block))
        cuts = _cuts(block, cps)
        csum = np.cumsum(vals, axis=1)
        parts = [csum[:, c - 1].tolist() if c > 0 else [0] * ncols for c in cuts]
        total = csum[:, -1].tolist() if len(block) else [0] * ncols
        return block.lo, block.hi, parts, total

    running = [0] * ncols
    out = {}
    for lo, hi, parts, total in map_blocks(per_block, limit, block_size, workers):
        local = [c for c in cps if lo <= c < hi]
        for c, part in zip(local, parts):
            out[c] = [r + int(p) for r, p in zip(running, part)]
        running = [r + int(t) for r, t in zip(running, total)]
    return [out.get(c, [0] * ncols) for c in cps]


def pside_sums(
    limit: int,
    f: PrimeCharFn,
    checkpoints: Optional[Sequence[int]] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
) -> list[KappaPair]:
    """Sums over 2 <= n <= x of f(P(n)) and f(P_2(n)) (strict, 0 if omega(n) < 2)."""
    cps = default_checkpoints(limit) if checkpoints is None else list(checkpoints)

    def vals(block):
        return np.vstack([_fvals(f, block.lpf), _fvals(f, block.p2_strict)])

    sums = _checkpoint_int_sums(vals, limit, cps, block_size, workers, 2)
    return [KappaPair(x, s[0], s[1]) for x, s in zip(cps, sums)]


def pside_average(limit, f, order, checkpoints=None, block_size=DEFAULT_BLOCK_SIZE, workers=None):
    """Sum of f(P_order(n)) over 2 <= n <= x at each checkpoint (order 1 or 2)."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    pairs = pside_sums(limit, f, checkpoints, block_size, workers)
    return [p.sum_P1 if order == 1 else p.sum_P2 for p in pairs]


def sqrt_window_experiment(
    x: int, block_size: int = DEFAULT_BLOCK_SIZE, workers: Optional[int] = None
) -> tuple[int, int]:
    """(sum f(P(n)), sum f(P_2(n))) over 2 <= n <= x for f = 1 on primes in (sqrt x, x]."""
    if x < 4:
        raise PreconditionError("x must be >= 4")
    pair = pside_sums(x, PrimeCharFn.sqrt_window(x), [x], block_size, workers)[0]
    return pair.sum_P1, pair.sum_P2


# ---------------------------------------------------------------------------
# exceptional primes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExceptionalPoint:
    x: int
    sum_mu_omega: Compensated
    sum_mu: Compensated


def exceptional_prime_series(
    p: int,
    limit: int,
    checkpoints: Optional[Sequence[int]] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
) -> list[ExceptionalPoint]:
    """Harmonic sums of mu(n)omega(n) and mu(n) over n <= x with smallest prime factor p.

    p(n) = p exactly when p(n) = 0 mod p, so this is the residue-0 slice
    modulo p on the smallest-factor side.
    """
    fac = factorize(p) if p >= 1 else []
    if p < 2 or len(fac) != 1 or fac[0][1] != 1:
        raise DomainError(f"{p} is not prime")
    cps = default_checkpoints(limit) if checkpoints is None else list(checkpoints)
    table = accumulate_series(
        limit, [SliceSpec(p, 0, "smallest")], cps, block_size=block_size, workers=workers
    )
    cols = table.sliced[("smallest", p, 0)]
    return [
        ExceptionalPoint(x, cols["m_omega"][j], cols["m"][j]) for j, x in enumerate(cps)
    ]
