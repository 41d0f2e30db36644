import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carpetdyn import toral
from carpetdyn.measure import (
    DiscreteMeasure,
    EmptyOrbit,
    MetricSpaceHandle,
    SpaceMismatch,
    birkhoff_average,
    character_correlation,
    correlation_quadrature,
    empirical_measure,
    grid_measure,
    lp_distance,
    nu_support_evidence,
    torus_step,
    transported_mass,
    _integer_scale,
    _lp_bisect,
)
from oracles import lp_bruteforce

TORUS = MetricSpaceHandle.torus()
SPHERE = MetricSpaceHandle.sphere()


def random_measure(rng, n, space, spread=1.0):
    pts = rng.random((n, 2)) * spread
    w = rng.random(n) + 0.05
    return DiscreteMeasure.from_atoms(pts, w / w.sum(), space, tol=1e-9)


@pytest.mark.parametrize("space", [TORUS, SPHERE], ids=["torus", "sphere"])
def test_matches_subset_oracle(space):
    rng = np.random.default_rng(42)
    for _ in range(40):
        a, b = rng.integers(1, 7, 2)
        mu = random_measure(rng, a, space, spread=rng.choice([0.1, 1.0]))
        nu = random_measure(rng, b, space, spread=rng.choice([0.1, 1.0]))
        assert lp_distance(mu, nu) == pytest.approx(lp_bruteforce(mu, nu), abs=2e-9)


def test_uniform_weights_use_exact_integer_flows():
    rng = np.random.default_rng(8)
    for _ in range(60):
        a, b = rng.integers(1, 8, 2)
        mu = DiscreteMeasure.from_atoms(rng.random((a, 2)) * 0.3, np.full(a, 1 / a), SPHERE)
        nu = DiscreteMeasure.from_atoms(rng.random((b, 2)) * 0.3, np.full(b, 1 / b), SPHERE)
        assert _integer_scale(np.concatenate([mu.weights, nu.weights])) is not None
        assert lp_distance(mu, nu) == pytest.approx(lp_bruteforce(mu, nu), abs=2e-9)


def test_bisection_agrees_with_exact():
    rng = np.random.default_rng(7)
    for _ in range(10):
        mu, nu = random_measure(rng, 6, TORUS, 0.3), random_measure(rng, 5, TORUS, 0.3)
        assert _lp_bisect(mu, nu) == pytest.approx(lp_distance(mu, nu), abs=2e-9)


def test_simple_values():
    d0 = DiscreteMeasure.dirac([0.1, 0.1], TORUS)
    d1 = DiscreteMeasure.dirac([0.15, 0.1], TORUS)
    assert lp_distance(d0, d0) == 0.0
    assert lp_distance(d0, d1) == pytest.approx(0.05)
    far = DiscreteMeasure.dirac([0.6, 0.6], TORUS)
    assert lp_distance(d0, far) == pytest.approx(min(1.0, math.hypot(0.5, 0.5)))
    # antipodal lifts coincide on the sphere
    assert lp_distance(DiscreteMeasure.dirac([0.2, 0.3], SPHERE), DiscreteMeasure.dirac([0.8, 0.7], SPHERE)) == 0.0


def test_metric_axioms():
    rng = np.random.default_rng(1)
    for _ in range(60):
        m = [random_measure(rng, int(rng.integers(1, 8)), SPHERE, 0.5) for _ in range(3)]
        ab, bc, ac = lp_distance(m[0], m[1]), lp_distance(m[1], m[2]), lp_distance(m[0], m[2])
        assert ab == pytest.approx(lp_distance(m[1], m[0]), abs=1e-12)
        assert ac <= ab + bc + 1e-12
        assert 0 <= ab <= 1


def test_space_mismatch():
    with pytest.raises(SpaceMismatch):
        lp_distance(DiscreteMeasure.dirac([0.1, 0.1], TORUS), DiscreteMeasure.dirac([0.1, 0.1], SPHERE))


def test_measure_validation_and_merging():
    with pytest.raises(ValueError):
        DiscreteMeasure.from_atoms([[0, 0]], [0.5], TORUS)
    with pytest.raises(ValueError):
        DiscreteMeasure.from_atoms([[0, 0], [0.1, 0]], [1.0, 0.0], TORUS)
    m = DiscreteMeasure.from_atoms([[0.2, 0.3], [0.8, 0.7]], [0.5, 0.5], SPHERE)
    assert len(m) == 1 and m.weights[0] == 1.0
    again = DiscreteMeasure.from_json(m.to_json())
    assert np.array_equal(again.points, m.points)


def test_empirical_measure():
    orb = toral.orbit(toral.CAT_MAP, toral.RationalTorusPoint(Fraction(1, 2), Fraction(0)))
    mu = empirical_measure(orb, TORUS)
    assert len(mu) == 3 and np.allclose(mu.weights, 1 / 3)
    with pytest.raises(EmptyOrbit):
        empirical_measure([], TORUS)


def test_transported_mass_monotone():
    rng = np.random.default_rng(4)
    mu, nu = random_measure(rng, 8, TORUS), random_measure(rng, 8, TORUS)
    vals = [transported_mass(mu, nu, e) for e in np.linspace(0, 0.8, 12)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0)


@pytest.mark.slow
def test_empirical_measures_approach_lebesgue():
    lam = grid_measure(TORUS, 32)
    x = np.array([0.1234567, 0.7654321])
    step = torus_step(toral.CAT_MAP)
    pts = np.empty((100_000, 2))
    p = tuple(x)
    for j in range(len(pts)):
        pts[j] = p
        p = step(p)
    rho = [lp_distance(empirical_measure(pts[:n], TORUS), lam) for n in (100, 1000, 10_000, 100_000)]
    assert all(a > b for a, b in zip(rho, rho[1:]))


def test_character_correlations_exact():
    A = toral.CAT_MAP
    for n in range(1, 31):
        assert character_correlation(A, (1, 0), (1, 0), n) == 0
    # (A^T) (1, 0) = (2, 1)
    assert character_correlation(A, (1, 0), (2, 1), 1) == 1
    with pytest.raises(ValueError):
        character_correlation(A, (0, 0), (1, 0), 1)


@pytest.mark.parametrize("n", range(1, 6))
def test_correlation_against_quadrature(n):
    A = toral.CAT_MAP
    for k, l in [((1, 0), (1, 0)), ((0, 1), (1, 1)), ((1, 0), (2, 1))]:
        exact = character_correlation(A, k, l, n)
        assert abs(correlation_quadrature(A, k, l, n) - exact) < 1e-9


def test_birkhoff_exact_on_periodic_orbit():
    A = toral.CAT_MAP
    p = toral.RationalTorusPoint(Fraction(1, 5), Fraction(2, 5))
    orb = toral.orbit(A, toral.RationalTorusPoint(Fraction(1, 3), Fraction(0)))
    f = lambda q: q.x
    avg = birkhoff_average(lambda q: toral.apply(A, q), f, orb[0], len(orb) * 7)
    assert avg == sum(q.x for q in orb) / len(orb)
    assert isinstance(avg, Fraction)
    assert birkhoff_average(lambda q: toral.apply(A, q), lambda q: 1, p, 10) == 1


def test_birkhoff_disc_indicator():
    step = torus_step(toral.CAT_MAP)
    r = 0.2
    f = lambda p: 1.0 if math.hypot(p[0] - 0.5, p[1] - 0.5) < r else 0.0
    avg = birkhoff_average(step, f, (0.31415926, 0.2718281), 200_000)
    assert abs(avg - math.pi * r * r) < 1e-2


def test_nu_support_is_worker_independent(stage6):
    a = nu_support_evidence(stage6, samples=20_000, depth_grid=2, seed=9, workers=1)
    b = nu_support_evidence(stage6, samples=20_000, depth_grid=2, seed=9, workers=2)
    assert a == b
    assert a["all_positive"] and a["mass_in_holes"] == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 0.999), st.floats(0, 0.999)), min_size=1, max_size=6))
def test_distance_to_itself_is_zero(pts):
    w = np.full(len(pts), 1 / len(pts))
    m = DiscreteMeasure.from_atoms(np.array(pts), w, SPHERE, tol=1e-9)
    assert lp_distance(m, m) == 0.0


def test_axiom_checker():
    rng = np.random.default_rng(0)
    assert SPHERE.check_axioms(rng.random((40, 2)), rng)
