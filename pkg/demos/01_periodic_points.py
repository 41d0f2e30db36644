"""Periodic points of the cat map, counted two ways, and their images on the sphere.

The cat map A = [[2, 1], [1, 1]] has |trace(A^n) - 2| points of period n.
We list them exactly (as fractions), group them into orbits, and push them
down to the pillowcase sphere, where x and -x are identified.

    python demos/01_periodic_points.py
"""

from carpetdyn import sphere, toral
from carpetdyn.tower import plan_orbits

A = toral.CAT_MAP

print("n   lattice   |tr(A^n)-2|   exact period n")
for n in range(1, 11):
    pts = toral.periodic_points(A, n)
    exact = toral.exact_period_points(A, n)
    print(f"{n:<3} {len(pts):>7}   {toral.lefschetz_count(A, n):>11}   {len(exact):>14}")

# a period-2 torus orbit that folds to a single point of the sphere
p = toral.point_from_str("1/5,2/5")
print("\norbit of 1/5,2/5:", [str(q) for q in toral.orbit(A, p)])
s = sphere.project(p)
print("on the sphere it is a fixed point:", sphere.factor_apply(A, s) == s)

# the tower blows up every other sphere orbit and spares the rest
plan = plan_orbits(A, 6)
print(f"\nsphere orbits up to period 6: {len(plan.orbits)} "
      f"({len(plan.selected_orbits)} to blow up, {len(plan.spared_orbits)} spared, "
      f"{len(plan.excluded)} through branch points)")
for o in plan.orbits[:6]:
    tag = "blow up" if o in plan.selected_orbits else "spare"
    print(f"  period {o.period:<2} base {str(o.base):<10} {tag}")
