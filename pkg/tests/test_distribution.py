import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

import oracles
from factdual.distribution import (
    psi,
    psi2,
    psi2_many,
    psi_many,
    repeated_lpf_count,
    residue_counts,
    root_floor,
    smooth_counts,
    strict_mult_disagreements,
)
from factdual.errors import DomainError, PreconditionError


def test_psi_examples():
    assert psi(10, 3) == 7
    assert psi(1000, 1) == 1
    assert psi(1000, 1000) == 1000
    assert psi(1, 5) == 1


def test_psi2_examples():
    assert psi2(20, 1) == 13
    assert psi2(1000, 1000) == 1000


def test_psi2_small_y_lower_bound():
    x = 10**6
    assert psi2(x, 2) * math.log(x) / x >= 0.5


@pytest.mark.parametrize("x", [1, 2, 50, 997, 3000])
def test_psi_matches_oracle(x):
    ys = [1, 2, 3, 7, 10, 31, 100, x]
    assert psi_many(x, ys, block_size=257) == [oracles.psi(x, y) for y in ys]
    assert psi2_many(x, ys, block_size=257) == [oracles.psi2(x, y) for y in ys]


@given(st.integers(2, 20000), st.integers(1, 20000))
def test_psi_complement_and_order(x, y):
    big = sum(1 for n in range(2, x + 1) if oracles.lpf(n) > y) if x <= 3000 else None
    p1, p2 = psi(x, y), psi2(x, y)
    if big is not None:
        assert p1 + big == x
    assert p2 >= p1
    assert psi(x, y + 1) >= p1 and psi(x + 1, y) >= p1


def test_smooth_counts_records():
    out = smooth_counts(100, [2, 5], second=True)
    assert [(c.x, c.y, c.value) for c in out] == [(100, 2, psi2(100, 2)), (100, 5, psi2(100, 5))]


def test_repeated_lpf_examples():
    assert repeated_lpf_count(10) == 3
    assert repeated_lpf_count(3) == 0
    assert repeated_lpf_count(10**5) / 10**5 > repeated_lpf_count(10**7) / 10**7
    with pytest.raises(PreconditionError):
        repeated_lpf_count(1)


def test_repeated_lpf_matches_oracle():
    x = 5000
    expect = sum(1 for n in range(2, x + 1) if n % oracles.lpf(n) ** 2 == 0)
    assert repeated_lpf_count(x, block_size=300) == expect


@pytest.mark.parametrize("x", [10**3, 10**4, 10**5])
def test_definitions_disagree_exactly_on_repeated_lpf(x):
    assert strict_mult_disagreements(x) == repeated_lpf_count(x)


def test_residue_counts_examples():
    t = residue_counts(10, 4, "largest")
    assert t.counts[3] == 4
    t = residue_counts(1000, 1, "largest")
    assert t.counts == [999] and t.undefined_count == 0
    with pytest.raises(DomainError):
        residue_counts(10, 0)
    with pytest.raises(DomainError):
        residue_counts(10, 3, "smallest")


@pytest.mark.parametrize("k", [1, 3, 4, 5, 12])
def test_residue_counts_match_oracle_and_conserve(k):
    x = 3000
    for side in ("largest", "second_largest"):
        t = residue_counts(x, k, side, block_size=511)
        expect = [0] * k
        undef = 0
        for n in range(2, x + 1):
            p = oracles.lpf(n) if side == "largest" else oracles.p2_strict(n)
            if p is None:
                undef += 1
            else:
                expect[p % k] += 1
        assert t.counts == expect and t.undefined_count == undef
        assert t.total == x - 1


def test_second_largest_residue_classes_balanced_1e7():
    x = 10**7
    t = residue_counts(x, 3, "second_largest")
    for l in (1, 2):
        assert abs(t.counts[l] - x / 2) <= 0.05 * x / 2


def test_theorem6_star_shape():
    x = 10**7
    for T in (10, 100, 1000):
        assert psi2(x, T) * math.log(x) / (x * math.log(T)) <= 10


def test_root_floor_exact():
    assert root_floor(10**7, 3) == 215
    assert root_floor(1000, 3) == 10
    assert root_floor(999, 3) == 9
    assert root_floor(10**6, Fraction(3, 2)) == 10**4
    assert root_floor(10**6 - 1, Fraction(3, 2)) == 9999
    for x in (2, 17, 10**5, 10**12 + 39):
        for a in (Fraction(1), Fraction(2), Fraction(5, 2), Fraction(7, 3)):
            y = root_floor(x, a)
            p, q = a.numerator, a.denominator
            assert y**p <= x**q < (y + 1) ** p
    with pytest.raises(DomainError):
        root_floor(0, 2)
