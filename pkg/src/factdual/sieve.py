"""
Segmented sieve producing per-integer multiplicative data.

Every other module consumes integers through this one. For each n in a
half-open block [lo, hi) the sieve yields

    mu, omega, big_omega, spf, lpf, p2_strict, p2_mult

where ``p2_strict`` is the largest prime factor strictly below ``lpf`` and
``p2_mult`` is P(n / P(n)). Inside blocks the prime-factor columns are
uint32 with 0 meaning "absent"; the public :class:`FactorRecord` exposes
absence as ``None``.

Blocks are independent. :func:`map_blocks` fans a per-block function out to
a thread pool (the numba kernels release the GIL) and yields the results in
ascending block order, so any reduction written as a plain ``for`` loop over
its output is independent of the worker count.
"""

from __future__ import annotations

import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, TypeVar

import numba
import numpy as np

from .errors import DomainError, PreconditionError, ResourceError

DEFAULT_BLOCK_SIZE = 1 << 22
# spf/lpf are stored as uint32
LIMIT_CAP = 4 * 10**9

T = TypeVar("T")


@dataclass(frozen=True)
class FactorRecord:
    n: int
    mu: int
    omega: int
    big_omega: int
    spf: Optional[int] = None
    lpf: Optional[int] = None
    p2_strict: Optional[int] = None
    p2_mult: Optional[int] = None


@dataclass(frozen=True)
class PrimeBasis:
    limit: int
    primes: np.ndarray  # int64, ascending

    def __len__(self):
        return len(self.primes)

    def __iter__(self):
        return iter(self.primes.tolist())


@dataclass
class FactorBlock:
    """Columnar factor data for every n in [lo, hi)."""

    lo: int
    hi: int
    mu: np.ndarray  # int8
    omega: np.ndarray  # uint8
    big_omega: np.ndarray  # uint8
    spf: np.ndarray  # uint32, 0 = absent
    lpf: np.ndarray  # uint32
    p2_strict: np.ndarray  # uint32
    p2_mult: np.ndarray  # uint32

    def __len__(self):
        return self.hi - self.lo

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.lo, self.hi, dtype=np.int64)

    def record(self, n: int) -> FactorRecord:
        if not self.lo <= n < self.hi:
            raise IndexError(f"{n} outside block [{self.lo}, {self.hi})")
        i = n - self.lo

        def opt(a):
            v = int(a[i])
            return v if v else None

        return FactorRecord(
            n=n,
            mu=int(self.mu[i]),
            omega=int(self.omega[i]),
            big_omega=int(self.big_omega[i]),
            spf=opt(self.spf),
            lpf=opt(self.lpf),
            p2_strict=opt(self.p2_strict),
            p2_mult=opt(self.p2_mult),
        )

    def records(self) -> list[FactorRecord]:
        return [self.record(n) for n in range(self.lo, self.hi)]


def build_prime_basis(limit: int) -> PrimeBasis:
    """All primes <= limit, by a plain Eratosthenes sieve."""
    if limit < 0:
        raise DomainError("limit must be >= 0")
    if limit > LIMIT_CAP:
        raise ResourceError(f"limit {limit} exceeds cap {LIMIT_CAP}")
    if limit < 2:
        return PrimeBasis(limit, np.zeros(0, dtype=np.int64))
    try:
        is_prime = np.ones(limit + 1, dtype=bool)
    except MemoryError as exc:
        raise ResourceError(f"cannot allocate prime table for limit {limit}") from exc
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p :: p] = False
    return PrimeBasis(limit, np.flatnonzero(is_prime).astype(np.int64))


def factorize(n: int) -> list[tuple[int, int]]:
    """(prime, exponent) pairs of n in ascending order, by trial division."""
    if n < 1:
        raise DomainError(f"cannot factor {n}")
    factors = []
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            factors.append((p, e))
        p += 1 if p == 2 else 2
    if m > 1:
        factors.append((m, 1))
    return factors


def factor_record(n: int) -> FactorRecord:
    """Reference factorization of a single n by trial division."""
    if n < 1:
        raise DomainError(f"factor_record needs n >= 1, got {n}")
    factors = factorize(n)

    omega = len(factors)
    big_omega = sum(e for _, e in factors)
    if omega == 0:
        return FactorRecord(n=n, mu=1, omega=0, big_omega=0)
    mu = (-1) ** omega if big_omega == omega else 0
    lpf, lpf_exp = factors[-1]
    p2_strict = factors[-2][0] if omega >= 2 else None
    if lpf_exp >= 2:
        p2_mult = lpf
    else:
        p2_mult = p2_strict
    return FactorRecord(
        n=n,
        mu=mu,
        omega=omega,
        big_omega=big_omega,
        spf=factors[0][0],
        lpf=lpf,
        p2_strict=p2_strict,
        p2_mult=p2_mult,
    )


@numba.njit(nogil=True, cache=True)
def _sieve_kernel(lo, hi, primes, mu, omega, big_omega, spf, lpf, p2s, p2m):
    size = hi - lo
    prod = np.ones(size, dtype=np.int64)  # product of prime powers found so far
    lpf_exp = np.zeros(size, dtype=np.uint8)
    for i in range(size):
        mu[i] = 1
    top = hi - 1
    for j in range(primes.shape[0]):
        p = primes[j]
        if p * p > top:
            break
        # first pass: every multiple of p
        start = ((lo + p - 1) // p) * p
        for m in range(start, hi, p):
            i = m - lo
            omega[i] += 1
            big_omega[i] += 1
            prod[i] *= p
            mu[i] = -mu[i]
            if spf[i] == 0:
                spf[i] = p
            p2s[i] = lpf[i]
            lpf[i] = p
            lpf_exp[i] = 1
        # higher powers: multiples of p^a, a >= 2
        q = p * p
        e = 2
        while q <= top:
            start = ((lo + q - 1) // q) * q
            for m in range(start, hi, q):
                i = m - lo
                big_omega[i] += 1
                prod[i] *= p
                mu[i] = 0
                lpf_exp[i] = e
            q *= p
            e += 1
    for i in range(size):
        n = lo + i
        if prod[i] != n:
            # exactly one prime above sqrt(hi - 1) remains
            r = n // prod[i]
            omega[i] += 1
            big_omega[i] += 1
            mu[i] = -mu[i]
            if spf[i] == 0:
                spf[i] = r
            p2s[i] = lpf[i]
            lpf[i] = r
            lpf_exp[i] = 1
        if lpf_exp[i] >= 2:
            p2m[i] = lpf[i]
        else:
            p2m[i] = p2s[i]


def sieve_block(lo: int, hi: int, basis: PrimeBasis) -> FactorBlock:
    """Sieve [lo, hi); ``basis`` must cover sqrt(hi - 1)."""
    if lo < 2 or hi < lo:
        raise PreconditionError(f"need 2 <= lo <= hi, got [{lo}, {hi})")
    if hi - 1 > LIMIT_CAP:
        raise ResourceError(f"hi {hi} exceeds cap {LIMIT_CAP}")
    if hi > lo and basis.limit < math.isqrt(hi - 1):
        raise PreconditionError(
            f"prime basis up to {basis.limit} does not cover sqrt({hi - 1})"
        )
    size = hi - lo
    block = FactorBlock(
        lo=lo,
        hi=hi,
        mu=np.zeros(size, dtype=np.int8),
        omega=np.zeros(size, dtype=np.uint8),
        big_omega=np.zeros(size, dtype=np.uint8),
        spf=np.zeros(size, dtype=np.uint32),
        lpf=np.zeros(size, dtype=np.uint32),
        p2_strict=np.zeros(size, dtype=np.uint32),
        p2_mult=np.zeros(size, dtype=np.uint32),
    )
    if size:
        _sieve_kernel(
            lo,
            hi,
            basis.primes,
            block.mu,
            block.omega,
            block.big_omega,
            block.spf,
            block.lpf,
            block.p2_strict,
            block.p2_mult,
        )
    return block


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count; the ``FACTDUAL_WORKERS`` environment variable wins."""
    env = os.environ.get("FACTDUAL_WORKERS")
    if env:
        workers = int(env)
    if workers is None:
        workers = 1
    if workers < 1:
        raise PreconditionError("worker count must be >= 1")
    return workers


def block_bounds(limit: int, block_size: int = DEFAULT_BLOCK_SIZE, start: int = 2):
    """Half-open bounds covering [start, limit], aligned to multiples of block_size."""
    if block_size < 1:
        raise PreconditionError("block_size must be >= 1")
    start = max(start, 2)
    bounds = []
    lo = start
    while lo <= limit:
        hi = min((lo // block_size + 1) * block_size, limit + 1)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def map_blocks(
    fn: Callable[[FactorBlock], T],
    limit: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: Optional[int] = None,
    start: int = 2,
) -> Iterator[T]:
    """Yield ``fn(block)`` for every block covering [start, limit], in ascending order."""
    if limit > LIMIT_CAP:
        raise ResourceError(f"limit {limit} exceeds cap {LIMIT_CAP}")
    bounds = block_bounds(limit, block_size, start)
    if not bounds:
        return
    basis = build_prime_basis(math.isqrt(limit))
    workers = resolve_workers(workers)

    def task(b):
        return fn(sieve_block(b[0], b[1], basis))

    if workers == 1:
        for b in bounds:
            yield task(b)
        return
    # bounded look-ahead keeps at most 2*workers blocks alive
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        it = iter(bounds)
        for b in it:
            pending.append(pool.submit(task, b))
            if len(pending) >= 2 * workers:
                break
        for b in it:
            yield pending.popleft().result()
            pending.append(pool.submit(task, b))
        while pending:
            yield pending.popleft().result()


def iter_blocks(limit, block_size=DEFAULT_BLOCK_SIZE, workers=None, start=2):
    return map_blocks(lambda b: b, limit, block_size, workers, start)
