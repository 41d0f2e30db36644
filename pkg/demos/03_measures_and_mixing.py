"""Orbits spread out: Levy-Prokhorov distances, Birkhoff averages, correlations.

The empirical measure of a long cat-map orbit approaches Lebesgue measure
in the Levy-Prokhorov metric; time averages match space averages; and
character correlations vanish exactly once the frequency has moved on.

    python demos/03_measures_and_mixing.py
"""

import math

import numpy as np

from carpetdyn import toral
from carpetdyn.measure import (
    MetricSpaceHandle,
    birkhoff_average,
    character_correlation,
    empirical_measure,
    grid_measure,
    lp_distance,
    nu_support_evidence,
    torus_step,
)
from carpetdyn.tower import build_stage, plan_orbits

A = toral.CAT_MAP
T = MetricSpaceHandle.torus()
step = torus_step(A)

pts = np.empty((100_000, 2))
p = (math.sqrt(2) - 1, math.pi - 3)
for j in range(len(pts)):
    pts[j] = p
    p = step(p)

lebesgue = grid_measure(T, 32)
print("orbit length   LP distance to Lebesgue (32x32 grid)")
for n in (100, 1000, 10_000, 100_000):
    print(f"{n:>12}   {lp_distance(empirical_measure(pts[:n], T), lebesgue):.4f}")

avg = birkhoff_average(step, lambda q: math.cos(2 * math.pi * q[0]), (math.sqrt(2) - 1, math.pi - 3), 10**6)
print(f"\nBirkhoff average of cos(2 pi x) over 10^6 steps: {avg:+.2e}  (space average 0)")

print("\ncorrelation <e_(1,0) o A^n, e_l>:")
for n in range(1, 5):
    img = toral.power(A, n).matrix.transpose().mul_vec(1, 0)
    print(f"  n={n}: zero against (1,0): {character_correlation(A, (1, 0), (1, 0), n) == 0}, one against {img}")

stage = build_stage(plan_orbits(A, 10), 5)
ev = nu_support_evidence(stage, samples=100_000, depth_grid=3, seed=1)
print(f"\nlifted measure on a depth-5 stage: every cell of the 8x8 mesh has mass "
      f">= {ev['min_cell_mass']:.4f}; mass in the holes {ev['mass_in_holes']}")
