"""Finite stages of the blow-up tower over the pillowcase sphere.

Stage ``S_n`` is the sphere with the first ``n`` selected periodic orbits of
the factor map ``G`` blown up.  The model here is metric: each blown point
becomes a closed disc of radius ``R`` whose boundary circle carries the
projective (direction) dynamics of the linear map.  Around every blown point
sits a chart ball of radius ``R' = CHART_FACTOR * R``; the *blow-down*

    Phi(center + r u_theta) = center + R' (r - R) / (R' - R) u_theta,   R <= r < R'

collapses the boundary circle to the orbit point and is the identity outside
the chart balls.  The stage map is ``H_n = Phi^-1 o G o Phi`` off the
circles and the direction map on them, so ``pi_n o H_{n+1} = H_n o pi_n``
holds by construction.  This is a concrete metric realisation of a
topological construction; the Sierpinski carpet itself is the (not
implemented) inverse limit of these stages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import toral
from .sphere import (
    BRANCH_LIFTS,
    SphereChart,
    SpherePoint,
    branch_dist2_exact,
    canonical_array,
    factor_apply_array,
    local_chart,
    local_vectors,
    project,
    sphere_dist2_exact,
    sphere_dist_array,
)
from .toral import IntMatrix2, RationalTorusPoint, ToralAutomorphism, point_from_str, point_to_str

CHART_FACTOR = 1.4
STAGE_FORMAT = "carpetdyn.stage"
STAGE_VERSION = 1
TWO_PI = 2.0 * math.pi


class ScheduleInfeasible(ValueError):
    """No positive radius keeps the discs disjoint."""


class InsufficientOrbits(ValueError):
    """The plan has fewer selected orbits than the requested depth."""


class InvalidPoint(ValueError):
    """A point does not belong to the stage it is used with."""


# ---------------------------------------------------------------------------
# orbit enumeration


@dataclass(frozen=True)
class SphereOrbit:
    """Periodic orbit of G stored as integer numerators over a common ``q``.

    ``num[i] = (X, Y)`` is the canonical lift of the i-th orbit point times
    ``q``; ``num[0]`` is the lexicographically smallest point (the base).
    """

    num: Tuple[Tuple[int, int], ...]
    q: int
    torus_period: int

    @property
    def period(self) -> int:
        return len(self.num)

    @property
    def points(self) -> List[SpherePoint]:
        return [SpherePoint(Fraction(X, self.q), Fraction(Y, self.q), False) for X, Y in self.num]

    @property
    def base(self) -> SpherePoint:
        X, Y = self.num[0]
        return SpherePoint(Fraction(X, self.q), Fraction(Y, self.q), False)

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.num, dtype=float) / self.q

    def sort_key(self):
        X, Y = self.num[0]
        return (self.torus_period, Fraction(X, self.q), Fraction(Y, self.q))


@dataclass(frozen=True)
class OrbitPlan:
    """Enumerated periodic orbits of G, split into blown (selected) and spared."""

    aut: ToralAutomorphism
    max_period: int
    orbits: Tuple[SphereOrbit, ...]
    selected: Tuple[bool, ...]
    excluded: Tuple[SphereOrbit, ...] = ()

    @property
    def selected_orbits(self) -> List[SphereOrbit]:
        return [o for o, s in zip(self.orbits, self.selected) if s]

    @property
    def spared_orbits(self) -> List[SphereOrbit]:
        return [o for o, s in zip(self.orbits, self.selected) if not s]


def _sphere_orbits_of_period(aut: ToralAutomorphism, n: int) -> List[SphereOrbit]:
    X, Y, q = toral._periodic_int(aut, n)
    # keep points of exact torus period n
    keep = np.ones(len(X), dtype=bool)
    for d in range(1, n):
        if n % d:
            continue
        Ad = toral.power(aut, d).matrix
        fixed = ((Ad.a % q * X + Ad.b % q * Y - X) % q == 0) & ((Ad.c % q * X + Ad.d % q * Y - Y) % q == 0)
        keep &= ~fixed
    X = [int(v) for v in X[keep]]
    Y = [int(v) for v in Y[keep]]
    m = aut.matrix

    def canon(a, b):
        na, nb = (-a) % q, (-b) % q
        return min((a, b), (na, nb))

    classes = sorted({canon(a, b) for a, b in zip(X, Y)})
    seen = set()
    out = []
    for start in classes:
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        cur = canon((m.a * start[0] + m.b * start[1]) % q, (m.c * start[0] + m.d * start[1]) % q)
        while cur != start:
            cyc.append(cur)
            seen.add(cur)
            cur = canon((m.a * cur[0] + m.b * cur[1]) % q, (m.c * cur[0] + m.d * cur[1]) % q)
        # classes are visited in sorted order, so `start` is the base point
        out.append(SphereOrbit(tuple(cyc), q, n))
    return out


def _meets_branch(o: SphereOrbit) -> bool:
    q = o.q
    for X, Y in o.num:
        if (2 * X) % q == 0 and (2 * Y) % q == 0:
            return True
    return False


def plan_orbits(aut: ToralAutomorphism, max_period: int) -> OrbitPlan:
    """Enumerate sphere orbits from torus points of period <= ``max_period``.

    Orbits meeting the branch set are excluded; the rest are ordered by
    (torus period, base point) and alternately marked selected (even
    positions) and spared (odd positions).
    """
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    kept, excluded = [], []
    for n in range(1, max_period + 1):
        for o in _sphere_orbits_of_period(aut, n):
            (excluded if _meets_branch(o) else kept).append(o)
    kept.sort(key=SphereOrbit.sort_key)
    selected = tuple(i % 2 == 0 for i in range(len(kept)))
    return OrbitPlan(aut, max_period, tuple(kept), selected, tuple(excluded))


# ---------------------------------------------------------------------------
# direction dynamics


def direction_map(aut: Union[ToralAutomorphism, IntMatrix2], theta, sign: int = 1):
    """Projective action theta -> arg(sign * A (cos theta, sin theta)) in [0, 2 pi).

    Works elementwise on arrays.  ``sign`` is the local deck sign of the
    chart lift (+1 or -1).
    """
    m = aut.matrix if isinstance(aut, ToralAutomorphism) else aut
    c, s = np.cos(theta), np.sin(theta)
    x = sign * (m.a * c + m.b * s)
    y = sign * (m.c * c + m.d * s)
    out = np.mod(np.arctan2(y, x), TWO_PI)
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def direction_fixed_points(aut: ToralAutomorphism, sign: int = 1, samples: int = 4096) -> List[float]:
    """Fixed angles of the direction map, located by sign changes and bisection."""
    from scipy.optimize import brentq

    def g(t):
        d = direction_map(aut, t, sign) - t
        return (d + math.pi) % TWO_PI - math.pi

    grid = np.linspace(0.0, TWO_PI, samples + 1)
    vals = np.array([g(t) for t in grid])
    roots = []
    for t0, t1, v0, v1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if v0 == 0.0:
            roots.append(float(t0))
        elif v0 * v1 < 0 and abs(v0 - v1) < math.pi:
            roots.append(float(brentq(g, t0, t1, xtol=1e-15)))
    return roots


# ---------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class BlownOrbit:
    """One blown-up orbit: discs of radius ``radius`` around every orbit point."""

    orbit_id: int
    orbit: SphereOrbit
    radius: float
    chart_radius: float
    signs: Tuple[int, ...]

    @property
    def period(self) -> int:
        return self.orbit.period

    @property
    def points(self) -> List[SpherePoint]:
        return self.orbit.points

    @property
    def charts(self) -> List[SphereChart]:
        return [local_chart(s, self.chart_radius) for s in self.points]

    @property
    def total_sign(self) -> int:
        return int(np.prod(self.signs))


def _deck_signs(aut: ToralAutomorphism, o: SphereOrbit) -> Tuple[int, ...]:
    """sigma_i with A x_i = sigma_i x_{i+1} (mod 1) for the canonical lifts."""
    m, q, p = aut.matrix, o.q, o.period
    signs = []
    for i in range(p):
        X, Y = o.num[i]
        nX, nY = o.num[(i + 1) % p]
        ax, ay = (m.a * X + m.b * Y) % q, (m.c * X + m.d * Y) % q
        if (ax, ay) == (nX, nY):
            signs.append(1)
        elif (ax, ay) == ((-nX) % q, (-nY) % q):
            signs.append(-1)
        else:
            raise ArithmeticError("orbit points are not consecutive under the map")
    return tuple(signs)


@dataclass(frozen=True)
class CarpetStage:
    """Finite stage S_n: the first ``depth`` selected orbits, blown up."""

    aut: ToralAutomorphism
    blown: Tuple[BlownOrbit, ...]
    r0: float
    max_period: Optional[int] = None
    _arrays: Dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        centers, R, Rc, oid, idx, sgn = [], [], [], [], [], []
        for k, b in enumerate(self.blown):
            xy = b.orbit.xy
            for i in range(b.period):
                centers.append(xy[i])
                R.append(b.radius)
                Rc.append(b.chart_radius)
                oid.append(k)
                idx.append(i)
                sgn.append(b.signs[i])
        arrays = {
            "centers": np.array(centers, dtype=float).reshape(-1, 2),
            "R": np.array(R, dtype=float),
            "Rc": np.array(Rc, dtype=float),
            "orbit": np.array(oid, dtype=int),
            "index": np.array(idx, dtype=int),
            "sign": np.array(sgn, dtype=int),
        }
        starts = np.cumsum([0] + [b.period for b in self.blown])
        arrays["start"] = starts
        object.__setattr__(self, "_arrays", arrays)

    @property
    def depth(self) -> int:
        return len(self.blown)

    @property
    def n_holes(self) -> int:
        return int(self._arrays["centers"].shape[0])

    def truncate(self, depth: int) -> "CarpetStage":
        """The stage S_depth of the same tower (same radii, fewer orbits)."""
        if not 0 <= depth <= self.depth:
            raise ValueError(f"cannot truncate depth {self.depth} stage to {depth}")
        return CarpetStage(self.aut, self.blown[:depth], self.r0, self.max_period)

    def center_index(self, orbit_id: int, index: int) -> int:
        return int(self._arrays["start"][orbit_id] + index)

    def boundary_position(self, orbit_id: int, index: int, angle: float) -> np.ndarray:
        b = self.blown[orbit_id]
        c = self._arrays["centers"][self.center_index(orbit_id, index)]
        p = c + b.radius * np.array([math.cos(angle), math.sin(angle)])
        return canonical_array(p[None, :])[0]

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        m = self.aut.matrix
        return {
            "format": STAGE_FORMAT,
            "version": STAGE_VERSION,
            "matrix": m.rows(),
            "r0": self.r0,
            "chart_factor": CHART_FACTOR,
            "max_period": self.max_period,
            "depth": self.depth,
            "orbits": [
                {
                    "id": k,
                    "torus_period": b.orbit.torus_period,
                    "period": b.period,
                    "points": [point_to_str(RationalTorusPoint(s.x, s.y)) for s in b.points],
                    "radius": b.radius,
                    "chart_radius": b.chart_radius,
                    "signs": list(b.signs),
                }
                for k, b in enumerate(self.blown)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict) -> "CarpetStage":
        if doc.get("format") != STAGE_FORMAT:
            raise ValueError(f"not a stage document (format={doc.get('format')!r})")
        if doc.get("version") != STAGE_VERSION:
            raise ValueError(f"unsupported stage version {doc.get('version')!r}")
        aut = ToralAutomorphism.from_matrix(doc["matrix"])
        blown = []
        for k, od in enumerate(doc["orbits"]):
            pts = [point_from_str(s) for s in od["points"]]
            q = math.lcm(*(p.denominator for p in pts))
            num = tuple((int(p.x * q), int(p.y * q)) for p in pts)
            o = SphereOrbit(num, q, int(od["torus_period"]))
            signs = tuple(int(s) for s in od["signs"])
            if signs != _deck_signs(aut, o):
                raise ValueError(f"orbit {k}: stored deck signs disagree with the matrix")
            blown.append(BlownOrbit(k, o, float(od["radius"]), float(od["chart_radius"]), signs))
        return cls(aut, tuple(blown), float(doc["r0"]), doc.get("max_period"))

    @classmethod
    def loads(cls, text: str) -> "CarpetStage":
        return cls.from_json(json.loads(text))


def build_stage(plan: OrbitPlan, depth: int, r0: float = 0.05) -> CarpetStage:
    """Blow up the first ``depth`` selected orbits of ``plan``.

    Radius of the k-th orbit (k = 1, 2, ...):
    ``r_k = min(r_{k-1}, r0 * 2**-k, s_k / 3)`` where ``s_k`` is the least
    distance from the orbit's points to every other blown point of the stage
    and to the branch set.  Chart balls have radius ``CHART_FACTOR * r_k``.

    Raises:
        InsufficientOrbits: if the plan has fewer than ``depth`` selected orbits.
        ScheduleInfeasible: if some separation is zero.
    """
    sel = plan.selected_orbits
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth > len(sel):
        raise InsufficientOrbits(
            f"depth {depth} requested but the plan (max_period={plan.max_period}) "
            f"has only {len(sel)} selected orbits; short by {depth - len(sel)}"
        )
    orbits = sel[:depth]
    if depth == 0:
        return CarpetStage(plan.aut, (), r0, plan.max_period)
    xy = np.concatenate([o.xy for o in orbits])
    owner = np.concatenate([[k] * o.period for k, o in enumerate(orbits)])
    D = sphere_dist_array(xy, xy)
    np.fill_diagonal(D, np.inf)
    Db = sphere_dist_array(xy, np.array([[float(a), float(b)] for a, b in BRANCH_LIFTS])).min(axis=1)
    sep = np.minimum(D.min(axis=1), Db)
    blown = []
    prev = math.inf
    for k, o in enumerate(orbits):
        s_k = float(sep[owner == k].min())
        if not s_k > 0:
            raise ScheduleInfeasible(f"orbit {k} (base {o.base}) coincides with another blown point")
        r = min(prev, r0 * 2.0 ** -(k + 1), s_k / 3.0)
        if not r > 0:
            raise ScheduleInfeasible(f"orbit {k} (base {o.base}): radius underflow")
        prev = r
        blown.append(BlownOrbit(k, o, r, CHART_FACTOR * r, _deck_signs(plan.aut, o)))
    return CarpetStage(plan.aut, tuple(blown), r0, plan.max_period)


# ---------------------------------------------------------------------------
# extended points


@dataclass(frozen=True)
class Regular:
    """A point of the stage away from the holes (distance >= radius from every blown point)."""

    point: SpherePoint

    @property
    def xy(self) -> Tuple[float, float]:
        return self.point.as_float()


@dataclass(frozen=True)
class Boundary:
    """Point ``angle`` on the boundary circle of blown point ``index`` of orbit ``orbit_id``.

    The angle is measured in the chart of the canonical lift of the orbit point.
    """

    orbit_id: int
    index: int
    angle: float


ExtendedPoint = Union[Regular, Boundary]


@dataclass
class PointBatch:
    """Struct-of-arrays form of many extended points.

    ``xy`` holds canonical lifts for regular points; it is ignored for
    boundary points (use :func:`positions`).
    """

    boundary: np.ndarray
    xy: np.ndarray
    orbit: np.ndarray
    index: np.ndarray
    angle: np.ndarray

    def __len__(self):
        return len(self.boundary)

    @classmethod
    def regular(cls, xy: np.ndarray) -> "PointBatch":
        xy = canonical_array(np.asarray(xy, dtype=float).reshape(-1, 2))
        n = len(xy)
        return cls(np.zeros(n, bool), xy, np.full(n, -1), np.full(n, -1), np.zeros(n))

    @classmethod
    def boundary_points(cls, orbit, index, angle) -> "PointBatch":
        orbit = np.asarray(orbit, dtype=int).ravel()
        n = len(orbit)
        return cls(
            np.ones(n, bool),
            np.zeros((n, 2)),
            orbit,
            np.asarray(index, dtype=int).ravel(),
            np.mod(np.asarray(angle, dtype=float).ravel(), TWO_PI),
        )

    @classmethod
    def from_points(cls, pts: Sequence[ExtendedPoint]) -> "PointBatch":
        n = len(pts)
        b = cls(np.zeros(n, bool), np.zeros((n, 2)), np.full(n, -1), np.full(n, -1), np.zeros(n))
        for j, p in enumerate(pts):
            if isinstance(p, Boundary):
                b.boundary[j] = True
                b.orbit[j], b.index[j], b.angle[j] = p.orbit_id, p.index, p.angle % TWO_PI
            elif isinstance(p, Regular):
                b.xy[j] = p.xy
            else:
                raise InvalidPoint(f"not an extended point: {p!r}")
        b.xy[~b.boundary] = canonical_array(b.xy[~b.boundary])
        return b

    def to_points(self) -> List[ExtendedPoint]:
        out = []
        for j in range(len(self)):
            if self.boundary[j]:
                out.append(Boundary(int(self.orbit[j]), int(self.index[j]), float(self.angle[j])))
            else:
                x, y = self.xy[j]
                out.append(Regular(project((float(x), float(y)))))
        return out

    def take(self, mask) -> "PointBatch":
        return PointBatch(self.boundary[mask], self.xy[mask], self.orbit[mask], self.index[mask], self.angle[mask])

    def copy(self) -> "PointBatch":
        return PointBatch(self.boundary.copy(), self.xy.copy(), self.orbit.copy(), self.index.copy(), self.angle.copy())

    @classmethod
    def concat(cls, batches: Sequence["PointBatch"]) -> "PointBatch":
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in ("boundary", "xy", "orbit", "index", "angle")))


def _nearest_center(stage: CarpetStage, xy: np.ndarray):
    """For each point: nearest blown point, its chart vector and distance."""
    A = stage._arrays
    n = len(xy)
    if stage.n_holes == 0 or n == 0:
        return np.full(n, -1), np.zeros((n, 2)), np.full(n, np.inf)
    best = np.full(n, -1)
    bestd = np.full(n, np.inf)
    bestv = np.zeros((n, 2))
    for ci, c in enumerate(A["centers"]):
        v = local_vectors(xy, c)
        d = np.hypot(v[:, 0], v[:, 1])
        better = d < bestd
        best[better] = ci
        bestd[better] = d[better]
        bestv[better] = v[better]
    return best, bestv, bestd


def positions(stage: CarpetStage, batch: PointBatch) -> np.ndarray:
    """Geometric positions (canonical lifts) of the points of the metric model."""
    out = batch.xy.copy()
    if batch.boundary.any():
        A = stage._arrays
        ci = A["start"][batch.orbit[batch.boundary]] + batch.index[batch.boundary]
        R = A["R"][ci]
        th = batch.angle[batch.boundary]
        p = A["centers"][ci] + R[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
        out[batch.boundary] = canonical_array(p)
    return out


def validate(stage: CarpetStage, batch: PointBatch, tol: float = 1e-12) -> PointBatch:
    """Check stage membership; regular points on a circle become boundary points.

    Raises:
        InvalidPoint: for boundary indices out of range or regular points inside a hole.
    """
    if batch.boundary.any():
        o, i = batch.orbit[batch.boundary], batch.index[batch.boundary]
        periods = np.array([b.period for b in stage.blown] or [0])
        if np.any(o < 0) or np.any(o >= stage.depth):
            raise InvalidPoint("boundary point refers to an orbit not blown in this stage")
        if np.any(i < 0) or np.any(i >= periods[o]):
            raise InvalidPoint("boundary point index out of range")
    reg = ~batch.boundary
    if reg.any() and stage.n_holes:
        ci, v, d = _nearest_center(stage, batch.xy[reg])
        R = stage._arrays["R"][ci]
        if np.any(d < R * (1 - tol)):
            raise InvalidPoint("regular point lies inside an open disc of the stage")
        on = d <= R * (1 + tol)
        if on.any():
            batch = batch.copy()
            ridx = np.flatnonzero(reg)[on]
            A = stage._arrays
            batch.boundary[ridx] = True
            batch.orbit[ridx] = A["orbit"][ci[on]]
            batch.index[ridx] = A["index"][ci[on]]
            batch.angle[ridx] = np.mod(np.arctan2(v[on, 1], v[on, 0]), TWO_PI)
    return batch


def blow_down(stage: CarpetStage, xy: np.ndarray) -> np.ndarray:
    """Phi on regular points: radial collapse inside the chart annuli."""
    xy = np.asarray(xy, dtype=float)
    if stage.n_holes == 0 or len(xy) == 0:
        return xy.copy()
    ci, v, d = _nearest_center(stage, xy)
    A = stage._arrays
    R, Rc = A["R"][ci], A["Rc"][ci]
    inside = d < Rc
    out = xy.copy()
    if inside.any():
        rho = Rc[inside] * (d[inside] - R[inside]) / (Rc[inside] - R[inside])
        rho = np.maximum(rho, 0.0)
        u = v[inside] / d[inside, None]
        out[inside] = canonical_array(A["centers"][ci[inside]] + rho[:, None] * u)
    return out


def blow_up(stage: CarpetStage, xy: np.ndarray) -> np.ndarray:
    """Phi^-1 on sphere points that are not blown orbit points."""
    xy = np.asarray(xy, dtype=float)
    if stage.n_holes == 0 or len(xy) == 0:
        return xy.copy()
    ci, v, d = _nearest_center(stage, xy)
    A = stage._arrays
    R, Rc = A["R"][ci], A["Rc"][ci]
    inside = d < Rc
    if np.any(d[inside] == 0.0):
        raise InvalidPoint("cannot lift a blown orbit point to a regular point")
    out = xy.copy()
    if inside.any():
        r = R[inside] + d[inside] * (Rc[inside] - R[inside]) / Rc[inside]
        u = v[inside] / d[inside, None]
        out[inside] = canonical_array(A["centers"][ci[inside]] + r[:, None] * u)
    return out


def apply_stage_batch(stage: CarpetStage, batch: PointBatch, inverse: bool = False, check: bool = True) -> PointBatch:
    """H_n (or its inverse) on a batch of extended points."""
    if check:
        batch = validate(stage, batch)
    out = batch.copy()
    aut = stage.aut.inverted() if inverse else stage.aut
    reg = ~batch.boundary
    if reg.any():
        y = blow_down(stage, batch.xy[reg])
        z = factor_apply_array(aut, y)
        out.xy[reg] = blow_up(stage, z)
    bd = batch.boundary
    if bd.any():
        A = stage._arrays
        o, i = batch.orbit[bd], batch.index[bd]
        periods = np.array([b.period for b in stage.blown])[o]
        if inverse:
            j = (i - 1) % periods
            sign = A["sign"][A["start"][o] + j]
        else:
            j = (i + 1) % periods
            sign = A["sign"][A["start"][o] + i]
        out.index[bd] = j
        out.angle[bd] = direction_map(aut, batch.angle[bd], sign)
    return out


def apply_stage(stage: CarpetStage, p: ExtendedPoint, inverse: bool = False) -> ExtendedPoint:
    """The stage homeomorphism H_n on one extended point.

    Raises:
        InvalidPoint: if ``p`` is not a point of the stage.
    """
    return apply_stage_batch(stage, PointBatch.from_points([p]), inverse).to_points()[0]


def project_stage_batch(stage: CarpetStage, batch: PointBatch, check: bool = True) -> PointBatch:
    """pi_n : S_n -> S_{n-1}, collapsing the newest orbit's circles.

    The result lives in ``stage.truncate(stage.depth - 1)``.
    """
    if stage.depth < 1:
        raise ValueError("the base stage S_0 has no projection")
    if check:
        batch = validate(stage, batch)
    k = stage.depth - 1
    newest = stage.blown[k]
    A = stage._arrays
    start = int(A["start"][k])
    centers = A["centers"][start:start + newest.period]
    out = batch.copy()
    bd = batch.boundary & (batch.orbit == k)
    if bd.any():
        out.boundary[bd] = False
        out.xy[bd] = centers[batch.index[bd]]
        out.orbit[bd] = -1
        out.index[bd] = -1
        out.angle[bd] = 0.0
    reg = ~batch.boundary
    if reg.any():
        xy = batch.xy[reg]
        R, Rc = newest.radius, newest.chart_radius
        best = np.full(len(xy), -1)
        bestd = np.full(len(xy), np.inf)
        bestv = np.zeros_like(xy)
        for i, c in enumerate(centers):
            v = local_vectors(xy, c)
            d = np.hypot(v[:, 0], v[:, 1])
            better = d < bestd
            best[better], bestd[better], bestv[better] = i, d[better], v[better]
        inside = bestd < Rc
        if inside.any():
            rho = np.maximum(Rc * (bestd[inside] - R) / (Rc - R), 0.0)
            u = bestv[inside] / bestd[inside, None]
            new = xy.copy()
            new[inside] = canonical_array(centers[best[inside]] + rho[:, None] * u)
            out.xy[reg] = new
    return out


def project_stage(stage: CarpetStage, p: ExtendedPoint) -> ExtendedPoint:
    """pi_n on one point of ``stage`` (depth n >= 1)."""
    return project_stage_batch(stage, PointBatch.from_points([p])).to_points()[0]


def stage_distance(stage: CarpetStage, a: PointBatch, b: PointBatch) -> np.ndarray:
    """Row-wise distance between matching points, measured on their positions."""
    from .sphere import sphere_dist_rows

    return sphere_dist_rows(positions(stage, a), positions(stage, b))


# ---------------------------------------------------------------------------
# sampling


def sample_regular(stage: CarpetStage, rng: np.random.Generator, n: int) -> PointBatch:
    """Uniform (sphere-area) samples conditioned to lie outside the holes."""
    chunks, have = [], 0
    while have < n:
        xy = canonical_array(rng.random((max(n - have, 16) * 2, 2)))
        if stage.n_holes:
            ci, _, d = _nearest_center(stage, xy)
            xy = xy[d > stage._arrays["R"][ci]]
        chunks.append(xy)
        have += len(xy)
    return PointBatch.regular(np.concatenate(chunks)[:n])


def sample_annuli(stage: CarpetStage, rng: np.random.Generator, n: int) -> PointBatch:
    """Regular samples placed inside chart annuli R < r < R' of random blown points."""
    if stage.n_holes == 0:
        return sample_regular(stage, rng, n)
    A = stage._arrays
    ci = rng.integers(0, stage.n_holes, n)
    t = rng.random(n)
    r = A["R"][ci] + (A["Rc"][ci] - A["R"][ci]) * (0.001 + 0.998 * t)
    th = rng.random(n) * TWO_PI
    xy = A["centers"][ci] + r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
    return PointBatch.regular(xy)


def sample_boundary(stage: CarpetStage, rng: np.random.Generator, n: int) -> PointBatch:
    if stage.n_holes == 0:
        raise ValueError("stage has no boundary circles")
    A = stage._arrays
    ci = rng.integers(0, stage.n_holes, n)
    return PointBatch.boundary_points(A["orbit"][ci], A["index"][ci], rng.random(n) * TWO_PI)


def sample_mixed(stage: CarpetStage, rng: np.random.Generator, n: int) -> PointBatch:
    """Thirds: uniform regular points, annulus points, boundary points."""
    if stage.n_holes == 0:
        return sample_regular(stage, rng, n)
    a = n // 3
    b = n // 3
    return PointBatch.concat([sample_regular(stage, rng, a), sample_annuli(stage, rng, b), sample_boundary(stage, rng, n - a - b)])


# ---------------------------------------------------------------------------
# Sierpinski-condition proxies


def _disjointness_exact(stage: CarpetStage) -> Tuple[List[bool], bool]:
    """Exact pairwise check of closed discs and branch avoidance, per orbit."""
    pts, radii, owner = [], [], []
    for k, b in enumerate(stage.blown):
        for s in b.points:
            pts.append(s)
            radii.append(Fraction(b.radius))
            owner.append(k)
    ok = [True] * stage.depth
    xy = np.array([s.as_float() for s in pts]).reshape(-1, 2)
    D = sphere_dist_array(xy, xy) if len(pts) else np.zeros((0, 0))
    rad = np.array([float(r) for r in radii])
    for a in range(len(pts)):
        if branch_dist2_exact(pts[a]) <= radii[a] ** 2:
            ok[owner[a]] = False
        # float screen; exact comparison only where the margin is not obvious
        near = np.flatnonzero(D[a, a + 1:] <= (rad[a] + rad[a + 1:]) * (1 + 1e-6) + 1e-300) + a + 1
        for b in near:
            if sphere_dist2_exact(pts[a], pts[b]) <= (radii[a] + radii[b]) ** 2:
                ok[owner[a]] = ok[owner[b]] = False
    return ok, all(ok)


def _torus_grid(grid: int) -> np.ndarray:
    c = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(c, c, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def density_fraction(stage: CarpetStage, grid: int, delta: float) -> float:
    """Fraction of grid cells whose centre is within ``delta`` of some disc."""
    if stage.n_holes == 0:
        return 0.0
    cells = _torus_grid(grid)
    A = stage._arrays
    hit = np.zeros(len(cells), dtype=bool)
    for c, R in zip(A["centers"], A["R"]):
        v = local_vectors(cells, c)
        hit |= np.hypot(v[:, 0], v[:, 1]) < R + delta
    return float(hit.mean())


def complement_components(stage: CarpetStage, grid: int) -> int:
    """Connected components of the complement of the open discs on a cell grid.

    Cells are joined across the torus edges and identified under the
    involution, so the count is for the sphere.
    """
    from scipy import ndimage

    cells = _torus_grid(grid)
    free = np.ones(len(cells), dtype=bool)
    A = stage._arrays
    for c, R in zip(A["centers"], A["R"]):
        v = local_vectors(cells, c)
        free &= np.hypot(v[:, 0], v[:, 1]) >= R
    free = free.reshape(grid, grid)
    labels, n = ndimage.label(free)
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

    for i in range(grid):
        union(labels[i, 0], labels[i, grid - 1])
        union(labels[0, i], labels[grid - 1, i])
    flipped = labels[::-1, ::-1]
    for a, b in zip(labels.ravel(), flipped.ravel()):
        union(int(a), int(b))
    return len({find(a) for a in range(1, n + 1)})


def carpet_invariants(stage: CarpetStage, grid: int = 64, delta: float = 1 / 16, depths: Optional[Sequence[int]] = None) -> dict:
    """(S1)-(S3) proxies for a stage and its truncations.

    ``depths`` lists the truncation depths for the density proxy (default:
    0, 5, 10, 20, 50 clipped to the stage depth, plus the depth itself).
    """
    if grid < 8:
        raise ValueError("grid must be >= 8")
    per_orbit, all_disjoint = _disjointness_exact(stage)
    radii = [b.radius for b in stage.blown]
    non_increasing = all(a >= b for a, b in zip(radii, radii[1:]))
    within_schedule = all(r <= stage.r0 * 2.0 ** -(k + 1) for k, r in enumerate(radii))
    if depths is None:
        depths = sorted({d for d in (0, 5, 10, 20, 50) if d <= stage.depth} | {stage.depth})
    dens = [density_fraction(stage.truncate(d), grid, delta) for d in depths]
    dens_increasing = all(a < b for a, b in zip(dens, dens[1:]))
    components = complement_components(stage, grid)
    report = {
        "depth": stage.depth,
        "holes": stage.n_holes,
        "grid": grid,
        "delta": delta,
        "S1": {"per_orbit_disjoint": per_orbit, "all_disjoint": all_disjoint},
        "S2": {
            "radii": radii,
            "non_increasing": non_increasing,
            "within_schedule": within_schedule,
        },
        "S3": {"depths": list(depths), "density": dens, "strictly_increasing": dens_increasing},
        "complement_components": components,
        "complement_connected": components == 1,
    }
    report["ok"] = bool(all_disjoint and non_increasing and within_schedule and dens_increasing and components == 1)
    return report
