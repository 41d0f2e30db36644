from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carpetdyn import toral
from carpetdyn.surd import QuadSurd
from oracles import periodic_bruteforce

EXPECTED = [1, 5, 16, 45, 121, 320, 841, 2205, 5776, 15125, 39601, 103680]


def test_lefschetz_counts_both_ways(cat):
    for n, want in enumerate(EXPECTED, start=1):
        assert toral.lefschetz_count(cat, n) == want
        assert toral.lefschetz_count_surd(cat, n) == want


@pytest.mark.parametrize("n", range(1, 9))
def test_lattice_solve_matches_lefschetz(cat, n):
    pts = toral.periodic_points(cat, n)
    assert len(pts) == len(set(pts)) == EXPECTED[n - 1]
    An = toral.power(cat, n)
    assert all(toral.apply(An, p) == p for p in pts[:500])


@pytest.mark.parametrize("n", range(1, 7))
def test_denominator_grid_oracle(cat, n):
    assert periodic_bruteforce(cat, n) == EXPECTED[n - 1]


def test_other_hyperbolic_matrix_oracle():
    aut = toral.ToralAutomorphism.from_matrix([[3, 1], [2, 1]])
    for n in range(1, 5):
        assert len(toral.periodic_points(aut, n)) == toral.lefschetz_count(aut, n) == periodic_bruteforce(aut, n)


def test_exact_period_points_partition(cat):
    total = sum(len(toral.exact_period_points(cat, d)) for d in (1, 2, 3, 6))
    assert total == EXPECTED[5]
    for p in toral.exact_period_points(cat, 3):
        assert toral.minimal_period(cat, p) == 3


def test_orbit_closes(cat):
    p = toral.RationalTorusPoint(Fraction(1, 2), Fraction(0))
    orb = toral.orbit(cat, p)
    assert len(orb) == toral.minimal_period(cat, p) == 3
    assert toral.apply(cat, orb[-1]) == p


def test_rejects_bad_matrices():
    with pytest.raises(ValueError):
        toral.ToralAutomorphism.from_matrix([[2, 0], [0, 1]])
    with pytest.raises(toral.NotHyperbolicError):
        toral.eigen(toral.ToralAutomorphism.from_matrix([[1, 1], [0, 1]]))


def test_overflow_is_reported(cat):
    with pytest.raises(toral.MatrixOverflowError):
        toral.power(cat, 200)


def test_inverse_and_powers(cat):
    inv = cat.inverted()
    p = toral.RationalTorusPoint(Fraction(3, 7), Fraction(2, 9))
    assert toral.apply(inv, toral.apply(cat, p)) == p
    assert toral.apply(toral.power(cat, 4), p) == toral.apply(cat, toral.apply(cat, toral.apply(cat, toral.apply(cat, p))))


def test_eigen_exact(cat):
    ev = toral.eigen(cat)
    s = ev.slope_u
    assert isinstance(s, QuadSurd)
    # slope (sqrt5 - 1)/2: s^2 + s - 1 = 0
    assert s * s + s - 1 == QuadSurd(0, 0, 5)
    assert ev.slope_u * ev.slope_s == QuadSurd(-1, 0, 5)
    assert abs(ev.lambda_u * ev.lambda_s - 1) < 1e-12
    assert abs(ev.lambda_u + ev.lambda_s - 3) < 1e-12


coords = st.fractions(min_value=0, max_value=1, max_denominator=10**6).filter(lambda f: f < 1)


@given(coords, coords)
def test_string_roundtrip(x, y):
    p = toral.RationalTorusPoint(x, y)
    assert toral.point_from_str(toral.point_to_str(p)) == p


@given(coords, coords)
def test_float_map_agrees_with_exact(x, y):
    p = toral.RationalTorusPoint(x, y)
    img = toral.apply(toral.CAT_MAP, p).as_float()
    got = toral.apply_float(toral.CAT_MAP, np.array([p.as_float()]))[0]
    d = np.abs(got - img)
    assert np.all(np.minimum(d, 1 - d) < 1e-12)


def test_point_from_str_rejects_junk():
    with pytest.raises(ValueError):
        toral.point_from_str("1/2")
