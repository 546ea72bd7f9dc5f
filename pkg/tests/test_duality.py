import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from factdual.duality import (
    IDENTITY_IDS,
    K_IDENTITIES,
    PrimeCharFn,
    binom,
    chi_prime_power,
    dual_sum_largest,
    dual_sum_smallest,
    identity_lhs,
    identity_rhs,
    inv_sum_second_largest,
    inv_sum_smallest_side,
    mobius_omega_divisor_sum,
    mobius_omega_inverse,
    verify_identities,
)
from factdual.errors import DomainError, PreconditionError

ID = PrimeCharFn.identity()
ONE = PrimeCharFn.one()
TEST_FS = [ID, ONE, PrimeCharFn.residue(3, 1), PrimeCharFn.residue(4, 3),
           PrimeCharFn.random_table(1), PrimeCharFn.random_table(2), PrimeCharFn.random_table(3)]


def test_binom_conventions():
    assert binom(4, 2) == 6
    assert binom(2, 3) == 0
    assert binom(-1, 0) == 0
    assert binom(0, 0) == 1


def test_chi_prime_power():
    assert chi_prime_power(1) == 0
    assert chi_prime_power(8) == 1
    assert chi_prime_power(12) == 0
    assert chi_prime_power(97) == 1


def test_prime_char_fn_kinds():
    assert PrimeCharFn.residue(4, 3)(7) == 1
    assert PrimeCharFn.residue(4, 3)(5) == 0
    assert PrimeCharFn.finite_set([3, 7])(7) == 1
    assert PrimeCharFn.finite_set([3, 7])(5) == 0
    w = PrimeCharFn.sqrt_window(100)
    assert w(11) == 1 and w(7) == 0 and w(101) == 0
    vals = PrimeCharFn.random_table(5).values(np.arange(2, 5000))
    assert vals.min() >= -8 and vals.max() <= 8
    assert len(set(vals.tolist())) > 10


def test_random_table_is_reproducible_and_seeded():
    p = np.array([2, 3, 5, 7, 11, 13])
    a = PrimeCharFn.random_table(1).values(p)
    assert np.array_equal(a, PrimeCharFn.random_table(1).values(p))
    assert not np.array_equal(
        PrimeCharFn.random_table(1).values(np.arange(2, 200)),
        PrimeCharFn.random_table(2).values(np.arange(2, 200)),
    )


def test_random_table_domain_bound():
    f = PrimeCharFn.random_table(1, bound=100)
    f(97)
    with pytest.raises(DomainError):
        f(101)


@pytest.mark.parametrize("text", ["id", "one", "res:3,1", "rand:7", "set:2,5", "window:100"])
def test_parse_round_trip(text):
    assert PrimeCharFn.parse(text).label == text


def test_residue_reduces_modulo_k():
    assert PrimeCharFn.residue(3, 4) == PrimeCharFn.residue(3, 1)


@pytest.mark.parametrize("text", ["", "res:3", "rand:x", "foo:1", "res:0,0"])
def test_parse_rejects(text):
    with pytest.raises(DomainError):
        PrimeCharFn.parse(text)


def test_dual_sum_examples():
    # divisors 2, 3, 6 of 12 give P = 2, 3, 3 and p = 2, 3, 2
    assert dual_sum_largest(12, 1, ID) == -2
    assert dual_sum_smallest(12, 1, ID) == -3
    assert dual_sum_largest(30, 2, ID) == 4
    assert dual_sum_smallest(30, 2, ID) == 10
    for f in TEST_FS:
        assert dual_sum_largest(97, 2, f) == 0
        assert dual_sum_smallest(97, 2, f) == 0


def test_inverse_sum_examples():
    assert inv_sum_smallest_side(30, 2, ID) == 3
    assert inv_sum_smallest_side(12, 1, ID) == -2
    assert inv_sum_smallest_side(27, 2, ID) == 0
    assert inv_sum_second_largest(30, 2, ID) == 3
    assert inv_sum_second_largest(12, 2, ID) == 2
    assert inv_sum_second_largest(97, 2, ID) == 0


def test_mobius_omega_examples():
    assert mobius_omega_divisor_sum(1) == 0
    assert mobius_omega_divisor_sum(8) == -1
    assert mobius_omega_divisor_sum(6) == 0
    for n in (1, 2, 6, 12, 30, 210):
        assert mobius_omega_inverse(n) == oracles.mu(n) * oracles.omega(n)


def test_per_n_errors():
    with pytest.raises(DomainError):
        dual_sum_largest(1, 1, ID)
    with pytest.raises(DomainError):
        dual_sum_smallest(10, 0, ID)
    with pytest.raises(DomainError):
        chi_prime_power(0)


def test_per_n_route_matches_full_divisor_oracle():
    rng = random.Random(11)
    ns = list(range(2, 400)) + [rng.randrange(2, 10**5) for _ in range(60)]
    for n in ns:
        for ident in IDENTITY_IDS:
            ks = range(1, oracles.omega(n) + 2) if ident in K_IDENTITIES else [None]
            fs = TEST_FS if ident not in ("2.9", "2.10") else [None]
            for f in fs:
                for k in ks:
                    lhs, rhs = oracles.identity_sides(ident, n, k, f)
                    assert identity_lhs(ident, n, k, f) == lhs, (ident, n, k)
                    assert identity_rhs(ident, n, k, f) == rhs, (ident, n, k)
                    assert lhs == rhs, (ident, n, k)


@given(st.integers(2, 10**6), st.integers(1, 4), st.integers(0, 2**32), st.integers(0, 2**32))
def test_linearity_in_f(n, k, s1, s2):
    f, g = PrimeCharFn.random_table(s1), PrimeCharFn.random_table(s2)
    for fn in (dual_sum_largest, dual_sum_smallest, inv_sum_smallest_side, inv_sum_second_largest):
        assert fn(n, k, _Sum(f, g)) == fn(n, k, f) + fn(n, k, g)


class _Sum:
    def __init__(self, f, g):
        self.f, self.g = f, g

    def __call__(self, p):
        return self.f(p) + self.g(p)


def test_verify_identities_examples():
    reports = verify_identities(100, 3, [ID])
    assert reports and all(r.passed for r in reports)
    reports = verify_identities(2, 1, [ONE], identities=["1.3"])
    assert len(reports) == 1
    r = reports[0]
    assert r.passed and r.lhs == r.rhs == -1


def test_verify_identities_random_table_1e5():
    reports = verify_identities(10**5, 5, [PrimeCharFn.random_table(1)])
    assert all(r.passed for r in reports)


def test_batch_matches_per_n_aggregates():
    N = 3000
    fs = [ID, PrimeCharFn.random_table(4)]
    for r in verify_identities(N, 4, fs):
        f = None if r.f == "-" else PrimeCharFn.parse(r.f)
        lhs = rhs = 0
        for n in range(2, N + 1):
            if r.k is not None and r.k > oracles.omega(n) + 1:
                continue
            lhs += identity_lhs(r.identity, n, r.k, f)
            rhs += identity_rhs(r.identity, n, r.k, f)
        assert (r.lhs, r.rhs) == (lhs, rhs), (r.identity, r.k, r.f)


def test_mobius_omega_identities_to_1e6():
    reports = verify_identities(10**6, 1, [], identities=["2.9", "2.10"])
    assert len(reports) == 2 and all(r.passed for r in reports)


def test_verify_identities_errors():
    with pytest.raises(PreconditionError):
        verify_identities(1, 1, [ID])
    with pytest.raises(DomainError):
        verify_identities(10, 1, [ID], identities=["9.9"])
