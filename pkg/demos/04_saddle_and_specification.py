"""Why tracing breaks on the carpet: the blown-up saddle.

On the torus any two orbit segments separated by a short gap can be traced
by one orbit.  After blowing up a fixed saddle, the boundary circle carries
a fixed point c at the stable direction, and orbits hugging the stable leaf
are held near c for a long time but can never spend most of an excursion
there.  This demo runs the three pieces of evidence side by side.

    python demos/04_saddle_and_specification.py
"""

from fractions import Fraction

import numpy as np

from carpetdyn import toral
from carpetdyn.speclab import (
    BallRegion,
    SaddleModel,
    TorusSystem,
    adversarial_trace,
    clear_radius,
    contradiction_experiment,
    gap_for_epsilon,
    periodic_regular_point,
    random_instance,
    saddle_exit_time,
    saddle_setup,
    sample_near_leaf,
    trace_search,
    visit_fraction,
)
from carpetdyn.tower import PointBatch, build_stage, plan_orbits, sample_regular

A = toral.CAT_MAP
rng = np.random.default_rng(4)

# 1. the linear saddle: time spent on the stable side before the unstable side wins
model = SaddleModel(Fraction(1, 2), Fraction(2), Fraction(2, 25))
print("saddle exit time for (p, q) = (2/25, 1/1250):", saddle_exit_time(model, Fraction(2, 25), Fraction(1, 1250)))

# 2. the torus traces everything at gap N(eps)
eps = 0.1
N = gap_for_epsilon(A, eps)
hits = sum(trace_search(TorusSystem(A), random_instance(rng, eps, N)).found for _ in range(20))
print(f"torus: {hits}/20 random two-segment instances traced at eps={eps}, gap {N}")

# 3. the depth-1 stage
stage = build_stage(plan_orbits(A, 6), 1)
setup = saddle_setup(stage)
u, _ = periodic_regular_point(stage, setup)
print(f"blown fixed point {stage.blown[0].points[0]}, H^{setup.power} fixes c at angle {setup.theta_s:.4f}")

W = BallRegion(u.xy, clear_radius(stage, setup, u.xy))
starts = PointBatch.concat([sample_regular(stage, rng, 100), sample_near_leaf(stage, setup, rng, 100)])
vf = visit_fraction(stage, starts, 2000, setup.U, W, setup.D, power=setup.power)
print(f"largest share of an excursion spent near c: {vf['max_excursion_fraction']:.3f} (bound 1/2)")

ce = contradiction_experiment(stage, 0.09, u, 2e-4, setup, starts=200, length=500, seed=4)
print(f"measures near (1-a) delta_c + a delta_u: closest rho {ce['min_rho']:.3f}, "
      f"violations {ce['violating_candidates']}, margin {ce['margin']:.3f}")

adv = adversarial_trace(stage, setup, u, length=6, gaps=[3, 5])
for row in adv["gaps"]:
    print(f"stay at c then jump to u, gap {row['gap']}: carpet traced={row['found']} "
          f"(best defect {row['best_defect']:.4f} vs eps {adv['epsilon']:.4f}), sphere traced={row['sphere_control_found']}")
