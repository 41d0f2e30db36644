from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carpetdyn import sphere, toral


def test_branch_points_and_lifts():
    b = sphere.project(toral.RationalTorusPoint(Fraction(1, 2), Fraction(0)))
    assert b.is_branch and len(sphere.lifts(b)) == 1
    s = sphere.project((Fraction(1, 3), Fraction(1, 5)))
    assert not s.is_branch and len(sphere.lifts(s)) == 2
    assert sphere.project((Fraction(2, 3), Fraction(4, 5))) == s


def test_antipodal_lifts_are_at_distance_zero():
    a = sphere.project((0.1, 0.0))
    b = sphere.project((0.9, 0.0))
    assert sphere.sphere_metric(a, b) < 1e-15
    ea = sphere.project((Fraction(1, 10), Fraction(0)))
    eb = sphere.project((Fraction(9, 10), Fraction(0)))
    assert ea == eb and sphere.sphere_dist2_exact(ea, eb) == 0


def test_metric_is_min_over_lifts():
    a = sphere.project((0.2, 0.3))
    b = sphere.project((0.75, 0.7))
    assert sphere.sphere_metric(a, b) == pytest.approx(min(
        np.hypot(0.05, 0.0), np.hypot(0.45, 0.4)))


rat = st.fractions(min_value=0, max_value=1, max_denominator=997).filter(lambda f: f < 1)


@given(rat, rat)
def test_semiconjugacy_exact(x, y):
    p = toral.RationalTorusPoint(x, y)
    assert sphere.factor_apply(toral.CAT_MAP, sphere.project(p)) == sphere.project(toral.apply(toral.CAT_MAP, p))


def test_local_chart_is_isometric():
    s = sphere.project((0.23, 0.61))
    ch = sphere.local_chart(s, 0.05)
    rng = np.random.default_rng(3)
    v = (rng.random((200, 2)) * 2 - 1) * ch.radius / 2
    pts = [ch.from_local(x) for x in v]
    for i in range(0, 200, 2):
        d = sphere.sphere_metric(pts[i], pts[i + 1])
        assert d == pytest.approx(np.hypot(*(v[i] - v[i + 1])), abs=1e-12)


def test_local_chart_rejects_branch_points():
    with pytest.raises(sphere.BranchPointError):
        sphere.local_chart(sphere.project((Fraction(1, 2), Fraction(1, 2))), 0.1)


def test_array_helpers_match_scalar():
    rng = np.random.default_rng(0)
    P, Q = rng.random((30, 2)), rng.random((20, 2))
    D = sphere.sphere_dist_array(P, Q)
    for i in range(0, 30, 7):
        for j in range(0, 20, 5):
            assert D[i, j] == pytest.approx(sphere.sphere_metric(sphere.project(tuple(P[i])), sphere.project(tuple(Q[j]))), abs=1e-12)
    C = sphere.canonical_array(P)
    assert np.allclose(sphere.sphere_dist_rows(C, P), 0)
