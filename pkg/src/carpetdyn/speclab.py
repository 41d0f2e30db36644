"""Specification-property experiments.

Three pieces:

* a tracing search: given orbit segments, look for one point whose orbit
  stays eps-close to each segment on its time window;
* the linear saddle f(x, y) = (a x, b y) and the number of steps an orbit
  spends on the stable side of a box before it leaves;
* the visit-time experiment on a carpet stage near the first blown saddle,
  and the measure-theoretic experiment built on it.

Carpet-stage results are finite-scale evidence, never proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import toral
from .measure import DiscreteMeasure, MetricSpaceHandle, lp_distance
from .sphere import canonical_array, local_vectors, sphere_dist_rows
from .toral import ToralAutomorphism, wrap01
from .tower import (
    TWO_PI,
    Boundary,
    CarpetStage,
    ExtendedPoint,
    InvalidPoint,
    PointBatch,
    Regular,
    _nearest_center,
    apply_stage_batch,
    blow_down,
    blow_up,
    positions,
    project,
    validate,
)


class DegenerateInput(ValueError):
    """Saddle input outside the lemma's hypotheses."""


class RegionInvalid(ValueError):
    pass


# ---------------------------------------------------------------------------
# linear saddle


@dataclass(frozen=True)
class SaddleModel:
    """f(x, y) = (a x, b y) with 0 < a < 1 < b, a b = 1, and the box D = [-eps, eps]^2."""

    a: Union[Fraction, float]
    b: Union[Fraction, float]
    epsilon_box: Union[Fraction, float]

    def __post_init__(self):
        if not (0 < self.a < 1 < self.b):
            raise ValueError("need 0 < a < 1 < b")
        if abs(float(self.a) * float(self.b) - 1.0) > 1e-12:
            raise ValueError("need a * b = 1")
        if not self.epsilon_box > 0:
            raise ValueError("epsilon_box must be positive")

    @classmethod
    def from_b(cls, b, epsilon_box) -> "SaddleModel":
        if isinstance(b, (int, Fraction)):
            return cls(1 / Fraction(b), Fraction(b), epsilon_box)
        return cls(1.0 / b, b, epsilon_box)

    def contains(self, p, q) -> bool:
        e = self.epsilon_box
        return abs(p) <= e and abs(q) <= e

    def step(self, p, q):
        return self.a * p, self.b * q


def saddle_exit_time(model: SaddleModel, p, q) -> Tuple[int, bool]:
    """Steps the orbit of (p, q) spends with the stable coordinate dominating.

    Returns the least m >= 0 with a^m |p| >= b^m |q| and a^(m+1) |p| < b^(m+1) |q|,
    and whether b^(2m) |q| < epsilon_box.  All comparisons are exact: floats
    are converted to the rationals they represent.

    Raises:
        DegenerateInput: q = 0 (the stable axis never leaves), |p| < |q|, or
            (p, q) outside D.
    """
    a, b, eps = Fraction(model.a), Fraction(model.b), Fraction(model.epsilon_box)
    P, Q = abs(Fraction(p)), abs(Fraction(q))
    if Q == 0:
        raise DegenerateInput("q = 0: the orbit stays on the stable axis")
    if P < Q:
        raise DegenerateInput("need |p| >= |q|")
    if P > eps or Q > eps:
        raise DegenerateInput("(p, q) is not in D")
    m = 0
    am, bm = Fraction(1), Fraction(1)
    while not (am * a * P < bm * b * Q):
        am *= a
        bm *= b
        m += 1
    assert am * P >= bm * Q
    return m, bool(b ** (2 * m) * Q < eps)


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class _PlaneFrame:
    e_s: np.ndarray
    e_u: np.ndarray
    rate_s: float
    rate_u: float


def _frame(aut: ToralAutomorphism, power: int) -> _PlaneFrame:
    ev = toral.eigen(aut)
    return _PlaneFrame(
        np.array(ev.dir_s), np.array(ev.dir_u), abs(ev.lambda_s) ** power, abs(ev.lambda_u) ** power
    )


@dataclass(frozen=True)
class TorusSystem:
    """Iterate ``power`` of a toral automorphism on float points."""

    aut: ToralAutomorphism
    power: int = 1
    kind = "torus"
    domain = (1.0, 1.0)
    slack = 1.0

    def with_power(self, p: int) -> "TorusSystem":
        return TorusSystem(self.aut, self.power * p)

    @property
    def frame(self) -> _PlaneFrame:
        return _frame(self.aut, self.power)

    def state(self, pts) -> np.ndarray:
        return wrap01(np.array([tuple(map(float, _xy(p))) for p in pts], dtype=float).reshape(-1, 2))

    def from_xy(self, xy):
        xy = wrap01(np.asarray(xy, dtype=float))
        return xy, np.ones(len(xy), bool)

    def step(self, s):
        m = toral.power(self.aut, self.power)
        return toral.apply_float(m, s)

    def positions(self, s):
        return s

    def dist(self, P, Q):
        d = P - Q
        d -= np.round(d)
        return np.hypot(d[..., 0], d[..., 1])

    def point(self, s, j):
        return (float(s[j, 0]), float(s[j, 1]))


@dataclass(frozen=True)
class SphereSystem(TorusSystem):
    """The factor map on the pillowcase sphere."""

    kind = "sphere"
    domain = (0.5, 1.0)

    def with_power(self, p: int) -> "SphereSystem":
        return SphereSystem(self.aut, self.power * p)

    def state(self, pts):
        return canonical_array(np.array([tuple(map(float, _xy(p))) for p in pts], dtype=float).reshape(-1, 2))

    def from_xy(self, xy):
        xy = canonical_array(np.asarray(xy, dtype=float))
        return xy, np.ones(len(xy), bool)

    def step(self, s):
        return canonical_array(super().step(s))

    def dist(self, P, Q):
        return sphere_dist_rows(P, Q)

    def point(self, s, j):
        return project((float(s[j, 0]), float(s[j, 1])))


@dataclass(frozen=True)
class StageSystem:
    """A power of the stage homeomorphism H_n acting on extended points."""

    stage: CarpetStage
    power: int = 1
    kind = "stage"
    domain = (0.5, 1.0)
    #: multiplier on the blown-down spread bound; the blown-up map is not
    #: uniformly Lipschitz near the circles, so stage pruning is heuristic
    slack = 4.0

    @property
    def aut(self):
        return self.stage.aut

    def with_power(self, p: int) -> "StageSystem":
        return StageSystem(self.stage, self.power * p)

    @property
    def frame(self) -> _PlaneFrame:
        return _frame(self.stage.aut, self.power)

    def state(self, pts) -> PointBatch:
        return validate(self.stage, PointBatch.from_points([_as_extended(p) for p in pts]))

    def from_xy(self, xy):
        xy = canonical_array(np.asarray(xy, dtype=float))
        ok = np.ones(len(xy), bool)
        if self.stage.n_holes:
            ci, _, d = _nearest_center(self.stage, xy)
            ok = d > self.stage._arrays["R"][ci]
        return PointBatch.regular(xy[ok]), ok

    def step(self, s: PointBatch) -> PointBatch:
        for _ in range(self.power):
            s = apply_stage_batch(self.stage, s, check=False)
        return s

    def positions(self, s: PointBatch):
        return positions(self.stage, s)

    def dist(self, P, Q):
        return sphere_dist_rows(P, Q)

    def point(self, s: PointBatch, j):
        return s.take(np.array([j])).to_points()[0]


System = Union[TorusSystem, SphereSystem, StageSystem]


def _xy(p):
    if isinstance(p, Regular):
        return p.xy
    if hasattr(p, "as_float"):
        return p.as_float()
    if hasattr(p, "x") and hasattr(p, "y"):
        return (float(p.x), float(p.y))
    return p


def _as_extended(p) -> ExtendedPoint:
    if isinstance(p, (Regular, Boundary)):
        return p
    return Regular(project(tuple(map(float, _xy(p)))))


# ---------------------------------------------------------------------------
# specification instances


def gap_for_epsilon(aut: ToralAutomorphism, epsilon: float) -> int:
    """N(eps) = ceil(log(4/eps) / log lambda_u): steps for the expansion to carry eps to diameter scale."""
    lam = abs(toral.eigen(aut).lambda_u)
    return max(1, math.ceil(math.log(4.0 / epsilon) / math.log(lam)))


@dataclass(frozen=True)
class Segment:
    point: object
    j: int
    k: int


@dataclass(frozen=True)
class SpecInstance:
    """eps, the gap N, and segments (y_m, j_m, k_m) with 0 = j_1 <= k_1 < j_2 <= ..."""

    epsilon: float
    gap_N: int
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("need at least one segment")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.segments[0].j != 0:
            raise ValueError("the first segment starts at time 0")
        for s in self.segments:
            if s.k < s.j:
                raise ValueError(f"segment [{s.j}, {s.k}] is empty")
        for s, t in zip(self.segments, self.segments[1:]):
            if t.j - s.k < self.gap_N:
                raise ValueError(f"gap {t.j - s.k} between segments is below N = {self.gap_N}")

    @property
    def horizon(self) -> int:
        return self.segments[-1].k

    def for_power(self, p: int) -> "SpecInstance":
        """The instance seen by the p-th power: time windows divided by p.

        Every window endpoint must be a multiple of p.  A tracing point for
        the original instance under T traces this one under T^p.
        """
        segs = []
        for s in self.segments:
            if s.j % p or s.k % p:
                raise ValueError(f"window [{s.j}, {s.k}] is not aligned to the power {p}")
            segs.append(Segment(s.point, s.j // p, s.k // p))
        gaps = [b.j - a.k for a, b in zip(segs, segs[1:])]
        return SpecInstance(self.epsilon, min(gaps) if gaps else max(1, self.gap_N // p), tuple(segs))

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gap_N": self.gap_N,
            "segments": [{"point": _point_json(s.point), "j": s.j, "k": s.k} for s in self.segments],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpecInstance":
        segs = tuple(Segment(_point_from_json(s["point"]), int(s["j"]), int(s["k"])) for s in doc["segments"])
        return cls(float(doc["epsilon"]), int(doc["gap_N"]), segs)


def _point_json(p):
    if isinstance(p, Boundary):
        return {"boundary": [p.orbit_id, p.index, p.angle]}
    return {"xy": list(map(float, _xy(p)))}


def _point_from_json(d):
    if "boundary" in d:
        k, i, t = d["boundary"]
        return Boundary(int(k), int(i), float(t))
    return tuple(d["xy"])


def random_instance(rng: np.random.Generator, epsilon: float, gap: int, segments: int = 2, max_len: int = 4) -> SpecInstance:
    """Uniform base points, window lengths in [0, max_len], gaps exactly ``gap``."""
    segs, t = [], 0
    for m in range(segments):
        length = int(rng.integers(0, max_len + 1))
        segs.append(Segment(tuple(rng.random(2)), t, t + length))
        t += length + gap
    return SpecInstance(epsilon, gap, tuple(segs))


# ---------------------------------------------------------------------------
# tracing search


@dataclass(frozen=True)
class Traced:
    point: object
    defect: float
    boxes: int

    found = True


@dataclass(frozen=True)
class NotFound:
    """No tracing point was found; ``best_defect`` is the smallest max-distance reached."""

    best_defect: float
    best_point: object
    boxes: int

    found = False


def _constraints(system, instance: SpecInstance):
    """Reference positions per time and the index of the segment constraining it."""
    T = instance.horizon
    ref = np.full((T + 1, 2), np.nan)
    for seg in instance.segments:
        s = system.state([seg.point])
        for i in range(seg.k + 1):
            if i >= seg.j:
                ref[i] = system.positions(s)[0]
            if i < seg.k:
                s = system.step(s)
    return ref, ~np.isnan(ref[:, 0])


def _defects(system, state, ref, active) -> np.ndarray:
    """Distances to the reference at every constrained time, shape (n, n_times)."""
    cols = []
    T = len(ref) - 1
    for i in range(T + 1):
        if active[i]:
            cols.append(system.dist(system.positions(state), ref[i][None, :]))
        if i < T:
            state = system.step(state)
    return np.stack(cols, axis=1)


def tracing_defect(system, instance: SpecInstance, point) -> Tuple[float, np.ndarray]:
    """Max tracing distance of ``point`` and the distance series over constrained times."""
    ref, active = _constraints(system, instance)
    d = _defects(system, system.state([point]), ref, active)[0]
    return float(d.max()), d


def trace_search(system, instance: SpecInstance, grid: int = 32, max_boxes: int = 20000, max_levels: int = 80):
    """Search a tracing point over a grid refined by branch-and-bound.

    Starts from a ``grid``-per-unit lattice of candidate points (plus
    ``grid`` angles on each boundary circle for stages).  Around each
    candidate sits a box in eigen-coordinates; a box is discarded when its
    centre misses some reference point by more than eps plus the spread the
    box can develop by that time.  Survivors are split along whichever
    direction dominates the spread.  Returns :class:`Traced` or
    :class:`NotFound`.
    """
    if grid < 32:
        raise ValueError("grid must be >= 32")
    eps = instance.epsilon
    ref, active = _constraints(system, instance)
    times = np.nonzero(active)[0]
    fr = system.frame
    T = instance.horizon
    grow_u = fr.rate_u ** times.astype(float)
    grow_s = fr.rate_s ** times.astype(float)
    best = (math.inf, None)
    total = 0

    # plane boxes: centre lifts and half-widths along the stable/unstable axes
    wx, wy = system.domain
    nx_, ny_ = max(1, int(round(grid * wx))), int(round(grid * wy))
    gx, gy = np.meshgrid(np.arange(nx_) * (wx / nx_), np.arange(ny_) * (wy / ny_), indexing="ij")
    centres = np.stack([gx.ravel(), gy.ravel()], axis=1)
    h = max(wx / nx_, wy / ny_)
    hs = np.full(len(centres), h / math.sqrt(2))
    hu = hs.copy()

    circ = None
    if system.kind == "stage" and system.stage.n_holes:
        A = system.stage._arrays
        nh = system.stage.n_holes
        th = np.arange(grid) * (TWO_PI / grid)
        circ = {
            "ci": np.repeat(np.arange(nh), grid),
            "theta": np.tile(th, nh),
            "h": np.full(nh * grid, math.pi / grid),
        }
        # direction maps expand angles by at most lambda_u^2 per step of A
        circ_rate = fr.rate_u**2
        Rmax = A["R"].max()

    for level in range(max_levels):
        n_plane = len(centres)
        parts, idx_plane = [], None
        st, ok = system.from_xy(centres)
        idx_plane = np.nonzero(ok)[0]
        if len(idx_plane):
            parts.append(st)
        if circ is not None and len(circ["ci"]):
            A = system.stage._arrays
            parts.append(PointBatch.boundary_points(A["orbit"][circ["ci"]], A["index"][circ["ci"]], circ["theta"]))
        if not parts:
            break
        if system.kind == "stage":
            state = PointBatch.concat(parts) if len(parts) > 1 else parts[0]
        else:
            state = parts[0]
        D = _defects(system, state, ref, active)
        total += len(D)
        dmax = D.max(axis=1)
        j = int(np.argmin(dmax))
        if dmax[j] < best[0]:
            best = (float(dmax[j]), system.point(state, j))
        if dmax[j] < eps:
            return Traced(system.point(state, j), float(dmax[j]), total)

        npl = len(idx_plane)
        # plane boxes: slack per constrained time
        lb_plane = np.full(n_plane, -np.inf)
        if npl:
            spread = system.slack * (hs[idx_plane, None] * grow_s[None, :] + hu[idx_plane, None] * grow_u[None, :])
            lb_plane[idx_plane] = (D[:npl] - spread - eps).max(axis=1)
        if system.kind == "stage" and system.stage.n_holes:
            # centres inside a hole: keep unless the whole box is inside it
            bad = np.setdiff1d(np.arange(n_plane), idx_plane)
            if len(bad):
                ci, _, d = _nearest_center(system.stage, canonical_array(centres[bad]))
                inside = d + np.maximum(hs[bad], hu[bad]) * math.sqrt(2) < system.stage._arrays["R"][ci]
                lb_plane[bad[inside]] = np.inf
        keep = lb_plane < 0
        if keep.sum() > max_boxes:
            order = np.argsort(lb_plane)[:max_boxes]
            keep = np.zeros(n_plane, bool)
            keep[order] = True
        centres, hs, hu = centres[keep], hs[keep], hu[keep]

        if circ is not None and len(circ["ci"]):
            Dc = D[npl:]
            spread = system.slack * Rmax * circ["h"][:, None] * circ_rate ** times[None, :].astype(float)
            lb = (Dc - spread - eps).max(axis=1)
            kc = lb < 0
            if kc.sum() > max_boxes:
                order = np.argsort(lb)[:max_boxes]
                kc = np.zeros(len(lb), bool)
                kc[order] = True
            ci, th, hh = circ["ci"][kc], circ["theta"][kc], circ["h"][kc] / 3
            circ = {
                "ci": np.repeat(ci, 3),
                "theta": np.mod((th[:, None] + np.array([-2, 0, 2]) * hh[:, None]).ravel(), TWO_PI),
                "h": np.repeat(hh, 3),
            }

        if len(centres) == 0 and (circ is None or len(circ["ci"]) == 0):
            break
        # split plane boxes into thirds along the dominant direction
        if len(centres):
            split_u = hu * grow_u.max() >= hs * grow_s.max()
            axis = np.where(split_u[:, None], fr.e_u[None, :], fr.e_s[None, :])
            width = np.where(split_u, hu, hs) / 3
            offs = np.array([-2.0, 0.0, 2.0])
            centres = (centres[:, None, :] + offs[None, :, None] * width[:, None, None] * axis[:, None, :]).reshape(-1, 2)
            hs = np.repeat(np.where(split_u, hs, hs / 3), 3)
            hu = np.repeat(np.where(split_u, hu / 3, hu), 3)
    return NotFound(best[0], best[1], total)


# ---------------------------------------------------------------------------
# regions near the first blown saddle


@dataclass(frozen=True)
class SectorRegion:
    """Points of a chart annulus within ``half_width`` of one of ``angles``, at most ``depth`` off the circle."""

    center: int
    angles: Tuple[float, ...]
    half_width: float
    depth: float

    def contains(self, stage: CarpetStage, batch: PointBatch, pos: Optional[np.ndarray] = None) -> np.ndarray:
        A = stage._arrays
        c = A["centers"][self.center]
        R = A["R"][self.center]
        pos = positions(stage, batch) if pos is None else pos
        v = local_vectors(pos, c)
        d = np.hypot(v[:, 0], v[:, 1])
        th = np.arctan2(v[:, 1], v[:, 0])
        own = batch.boundary & (A["start"][np.maximum(batch.orbit, 0)] + batch.index == self.center)
        th = np.where(own, batch.angle, th)
        d = np.where(own, R, d)
        dev = np.full(len(pos), np.inf)
        for a in self.angles:
            dev = np.minimum(dev, np.abs((th - a + math.pi) % TWO_PI - math.pi))
        on_circle = own | ~batch.boundary
        return on_circle & (d >= R - 1e-12) & (d <= R + self.depth) & (dev <= self.half_width)


@dataclass(frozen=True)
class BallRegion:
    center: Tuple[float, float]
    radius: float

    def contains(self, stage: CarpetStage, batch: PointBatch, pos: Optional[np.ndarray] = None) -> np.ndarray:
        pos = positions(stage, batch) if pos is None else pos
        return sphere_dist_rows(pos, np.array(self.center)[None, :]) < self.radius


@dataclass(frozen=True)
class EigenBox:
    """D: a box |p|, |q| <= half in eigen-coordinates around a blown point, seen after blowing down."""

    center: int
    half: float
    e_s: Tuple[float, float]
    e_u: Tuple[float, float]

    def contains(self, stage: CarpetStage, batch: PointBatch, pos: Optional[np.ndarray] = None) -> np.ndarray:
        A = stage._arrays
        c = A["centers"][self.center]
        pos = positions(stage, batch) if pos is None else pos
        down = pos.copy()
        reg = ~batch.boundary
        down[reg] = blow_down(stage, pos[reg])
        bd = batch.boundary
        if bd.any():
            ci = A["start"][batch.orbit[bd]] + batch.index[bd]
            down[bd] = A["centers"][ci]
        v = local_vectors(down, c)
        p = v @ np.array(self.e_s)
        q = v @ np.array(self.e_u)
        return (np.abs(p) <= self.half) & (np.abs(q) <= self.half)


@dataclass(frozen=True)
class SaddleSetup:
    """Everything the visit-time experiments need around the first blown orbit.

    ``power`` is the iterate fixing the boundary point ``c`` at the stable
    angle: the orbit period, doubled when the chart is carried back with a
    reversed orientation.
    """

    stage: CarpetStage
    orbit_id: int
    power: int
    theta_s: float
    c: Boundary
    U: SectorRegion
    V: SectorRegion
    D: EigenBox
    a: float
    b: float

    def to_json(self) -> dict:
        return {
            "orbit_id": self.orbit_id,
            "power": self.power,
            "theta_s": self.theta_s,
            "c": [self.c.orbit_id, self.c.index, self.c.angle],
            "U": {"half_width": self.U.half_width, "depth": self.U.depth},
            "V": {"half_width": self.V.half_width, "depth": self.V.depth},
            "D": {"half": self.D.half, "e_s": list(self.D.e_s), "e_u": list(self.D.e_u)},
            "a": self.a,
            "b": self.b,
        }


def saddle_setup(stage: CarpetStage, orbit_id: int = 0, half_width: float = math.pi / 36) -> SaddleSetup:
    """Regions U, V, D at the first point of blown orbit ``orbit_id``."""
    if not 0 <= orbit_id < stage.depth:
        raise ValueError(f"stage has no blown orbit {orbit_id}")
    b = stage.blown[orbit_id]
    power = b.period * (1 if b.total_sign == 1 else 2)
    ev = toral.eigen(stage.aut)
    theta_s = math.atan2(ev.dir_s[1], ev.dir_s[0]) % TWO_PI
    ci = stage.center_index(orbit_id, 0)
    R, Rc = b.radius, b.chart_radius
    ann = Rc - R
    angles = (theta_s, (theta_s + math.pi) % TWO_PI)
    U = SectorRegion(ci, angles, half_width, float(ann / 2))
    V = SectorRegion(ci, angles, half_width / 2, float(ann / 4))
    # the chart basis is orthonormal for symmetric matrices; otherwise shrink to fit
    es, eu = np.array(ev.dir_s), np.array(ev.dir_u)
    sin_angle = abs(es[0] * eu[1] - es[1] * eu[0])
    half = float(0.99 * Rc * sin_angle / math.sqrt(2))
    D = EigenBox(ci, half, tuple(map(float, es)), tuple(map(float, eu)))
    lam_u, lam_s = abs(ev.lambda_u) ** power, abs(ev.lambda_s) ** power
    return SaddleSetup(stage, orbit_id, power, theta_s, Boundary(orbit_id, 0, theta_s), U, V, D, float(lam_s), float(lam_u))


def periodic_regular_point(stage: CarpetStage, setup: SaddleSetup, max_period: int = 6) -> Tuple[Regular, int]:
    """A regular periodic point of H^power far from the saddle chart, and its period."""
    from .tower import plan_orbits

    A = stage._arrays
    c = A["centers"][setup.D.center]
    best = None
    for o in plan_orbits(stage.aut, max_period).spared_orbits:
        xy = o.xy
        # must stay outside every chart so that H acts as G along the orbit
        ci, _, d = _nearest_center(stage, xy)
        if stage.n_holes and np.any(d <= A["Rc"][ci]):
            continue
        gap = float(sphere_dist_rows(xy, c[None, :]).min())
        key = (o.period, -round(gap, 9))
        if best is None or key < best[0]:
            best = (key, o)
    if best is None:
        raise RegionInvalid("no spared periodic orbit clear of the charts")
    o = best[1]
    s_period = o.period // math.gcd(o.period, setup.power)
    return Regular(o.points[0]), s_period


def clear_radius(stage: CarpetStage, setup: SaddleSetup, center, cap: float = 0.1) -> float:
    """Largest ball radius (at most ``cap``) around ``center`` that keeps clear of D's chart."""
    A = stage._arrays
    c = A["centers"][setup.D.center]
    gap = float(sphere_dist_rows(np.asarray(center, float)[None, :], c[None, :])[0])
    r = min(cap, 0.5 * (gap - A["Rc"][setup.D.center]))
    if r <= 0:
        raise RegionInvalid("the point lies in the chart containing D")
    return float(r)


def _check_w(stage: CarpetStage, D: EigenBox, W: BallRegion):
    A = stage._arrays
    c = A["centers"][D.center]
    Rc = A["Rc"][D.center]
    gap = float(sphere_dist_rows(np.array(W.center)[None, :], c[None, :])[0])
    # D sits inside the closed chart disc, which blowing down maps to itself
    if gap < Rc + W.radius:
        raise RegionInvalid(f"W (radius {W.radius:.3g}) meets the chart disc containing D (gap {gap:.3g})")


def _orbit_masks(stage, batch, n, power, regions):
    """Boolean membership arrays (n, len(batch)) per region along the orbit."""
    out = [np.zeros((n, len(batch)), bool) for _ in regions]
    for j in range(n):
        pos = positions(stage, batch)
        for r, m in zip(regions, out):
            m[j] = r.contains(stage, batch, pos)
        if j < n - 1:
            for _ in range(power):
                batch = apply_stage_batch(stage, batch, check=False)
    return out


def _excursions(inU: np.ndarray, inW: np.ndarray, inD: np.ndarray):
    """Per-excursion U-fractions over visits j = k_i + 1 .. k_{i+1}."""
    k = np.nonzero(inW)[0]
    cum = np.concatenate([[0], np.cumsum(inU)])
    fr = []
    for a, b in zip(k[:-1], k[1:]):
        if inD[a] or inD[b]:
            continue
        fr.append((cum[b + 1] - cum[a + 1]) / (b - a))
    return k, np.array(fr)


def visit_fraction(stage: CarpetStage, start, n: int, U, W: BallRegion, D: Optional[EigenBox] = None, power: int = 1, tol: float = 0.05) -> dict:
    """Visits of H^power orbits to U, returns to W, and per-excursion U-fractions.

    ``start`` is one extended point or a PointBatch of starts.  The verdict
    ``ok`` holds when every excursion between consecutive W-returns (both
    ends outside D) spends at most 1/2 + tol of its steps in U.

    Raises:
        RegionInvalid: when W can meet the box D.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    if D is not None:
        _check_w(stage, D, W)
    batch = start if isinstance(start, PointBatch) else PointBatch.from_points([start])
    batch = validate(stage, batch)
    regions = [U, W] + ([D] if D is not None else [])
    masks = _orbit_masks(stage, batch, n, power, regions)
    inU, inW = masks[0], masks[1]
    inD = masks[2] if D is not None else np.zeros_like(inU)
    per_start = []
    worst = 0.0
    for s in range(len(batch)):
        k, fr = _excursions(inU[:, s], inW[:, s], inD[:, s])
        mx = float(fr.max()) if len(fr) else 0.0
        worst = max(worst, mx)
        long_run = float(inU[: k[-1], s].sum() / k[-1]) if len(k) and k[-1] > 0 else None
        per_start.append(
            {
                "fraction": float(inU[:, s].mean()),
                "returns": int(len(k)),
                "excursions": int(len(fr)),
                "max_excursion_fraction": mx,
                "long_run_fraction": long_run,
            }
        )
    return {
        "n": n,
        "power": power,
        "starts": len(batch),
        "tolerance": tol,
        "max_excursion_fraction": worst,
        "total_excursions": int(sum(p["excursions"] for p in per_start)),
        "per_start": per_start,
        "ok": bool(worst <= 0.5 + tol),
    }


def sample_near_leaf(stage: CarpetStage, setup: SaddleSetup, rng: np.random.Generator, n: int) -> PointBatch:
    """Regular points inside V, i.e. hugging the compactified stable leaf."""
    A = stage._arrays
    c = A["centers"][setup.V.center]
    R = A["R"][setup.V.center]
    side = rng.integers(0, 2, n)
    th = np.array(setup.V.angles)[side] + (rng.random(n) * 2 - 1) * setup.V.half_width
    r = R + setup.V.depth * (1e-6 + (1 - 2e-6) * rng.random(n))
    return PointBatch.regular(c + r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1))


def contradiction_experiment(
    stage: CarpetStage,
    alpha: float,
    u: ExtendedPoint,
    delta: float,
    setup: Optional[SaddleSetup] = None,
    starts: int = 1000,
    length: int = 1000,
    seed: int = 0,
    wide_radius: Optional[float] = None,
) -> dict:
    """Empirical orbit measures near mu_hat = (1 - alpha) delta_c + (alpha/s) sum delta_{H^i u}.

    The approximation of invariant measures by ergodic ones is not
    constructed; the candidates are the empirical measures of ``starts``
    seeded orbits of ``length`` steps (half uniform, half started in V).
    For each, the report records rho(nu_hat, mu_hat), nu_hat(U) and
    nu_hat(W) with W = B(u, 2 delta).  W is usually too small for any
    finite orbit to visit, so the margin is also taken against a wider ball
    around u that still avoids D; it contains W, so the margin bounds the
    one for W from below.  Parameter checks are reported one by one rather
    than raised.
    """
    setup = setup or saddle_setup(stage)
    P = setup.power
    A = stage._arrays
    ub = validate(stage, PointBatch.from_points([u]))
    orbit = [ub]
    for _ in range(10_000):
        nxt = orbit[-1]
        for _ in range(P):
            nxt = apply_stage_batch(stage, nxt, check=False)
        if float(sphere_dist_rows(positions(stage, nxt), positions(stage, ub))[0]) < 1e-9:
            break
        orbit.append(nxt)
    s = len(orbit)
    u_pos = np.concatenate([positions(stage, b) for b in orbit])
    c_pos = positions(stage, PointBatch.from_points([setup.c]))
    space = MetricSpaceHandle.for_stage(stage)
    weights = [1 - alpha] + [alpha / s] * s
    mu_hat = DiscreteMeasure.from_atoms(np.concatenate([c_pos, u_pos]), weights, space)

    W = BallRegion(tuple(map(float, u_pos[0])), 2 * delta)
    if wide_radius is None:
        wide_radius = clear_radius(stage, setup, u_pos[0])
    W_wide = BallRegion(W.center, max(wide_radius, W.radius))
    c_ball = float(sphere_dist_rows(u_pos, c_pos).min())
    ang_margin = A["R"][setup.U.center] * math.sin(setup.U.half_width - setup.V.half_width)
    rad_margin = setup.U.depth - setup.V.depth
    d_down = blow_down(stage, u_pos)
    checks = {
        "alpha_lt_one_tenth": alpha < 0.1,
        "u_outside_D": not bool(setup.D.contains(stage, PointBatch.regular(d_down)).any()),
        "delta_lt_2s_alpha": delta < 2 * s * alpha,
        "delta_lt_alpha_over_s": delta < alpha / s,
        "mu_V_minus_delta_ge_4_5": (1 - alpha) - delta >= 0.8,
        "orbit_far_from_c": c_ball > 3 * setup.D.half,
        "V_2delta_inside_U": 2 * delta <= min(ang_margin, rad_margin),
    }
    try:
        _check_w(stage, setup.D, W)
        checks["W_misses_D"] = True
    except RegionInvalid:
        checks["W_misses_D"] = False

    rng = np.random.default_rng(seed)
    from .tower import sample_regular

    half = starts // 2
    batch = PointBatch.concat([sample_regular(stage, rng, starts - half), sample_near_leaf(stage, setup, rng, half)])
    pos_hist = np.zeros((length, starts, 2))
    inU = np.zeros((length, starts), bool)
    inW = np.zeros((length, starts), bool)
    inWw = np.zeros((length, starts), bool)
    for j in range(length):
        pos = positions(stage, batch)
        pos_hist[j] = pos
        inU[j] = setup.U.contains(stage, batch, pos)
        inW[j] = W.contains(stage, batch, pos)
        inWw[j] = W_wide.contains(stage, batch, pos)
        for _ in range(P):
            batch = apply_stage_batch(stage, batch, check=False)
    nuU = inU.mean(axis=0)
    nuW = inW.mean(axis=0)
    rho = np.empty(starts)
    for t in range(starts):
        nu = DiscreteMeasure.from_atoms(pos_hist[:, t], np.full(length, 1.0 / length), space, tol=1e-9)
        rho[t] = lp_distance(nu, mu_hat)
    both = (nuU >= 0.8) & (nuW > 0)
    withW = nuW > 0
    best_u_w = float(nuU[withW].max()) if withW.any() else None
    withWw = inWw.any(axis=0)
    best_u_ww = float(nuU[withWw].max()) if withWw.any() else None
    known = [v for v in (best_u_w, best_u_ww) if v is not None]
    order = np.argsort(rho)[:10]
    return {
        "seed": seed,
        "alpha": alpha,
        "delta": delta,
        "period_s": s,
        "power": P,
        "mu_hat": {"c_weight": 1 - alpha, "orbit_weight": alpha / s, "mu_hat_V": 1 - alpha},
        "implied_nu_U_lower": (1 - alpha) - delta,
        "checks": {k: bool(v) for k, v in checks.items()},
        "parameters_ok": bool(all(checks.values())),
        "starts": starts,
        "length": length,
        "min_rho": float(rho.min()),
        "candidates_within_delta": int((rho < delta).sum()),
        "best_nu_U": float(nuU.max()),
        "best_nu_U_given_W": best_u_w,
        "wide_radius": W_wide.radius,
        "best_nu_U_given_W_wide": best_u_ww,
        "margin": 0.8 - max(known) if known else None,
        "violating_candidates": int(both.sum()),
        "closest": [
            {"rho": float(rho[t]), "nu_U": float(nuU[t]), "nu_W": float(nuW[t])} for t in order
        ],
        "note": "candidates are empirical orbit measures; ergodic approximation is searched, not constructed",
        "ok": bool(not both.any()),
    }


def adversarial_trace(stage: CarpetStage, setup: SaddleSetup, u: Regular, length: int = 6, gaps: Optional[Sequence[int]] = None, grid: int = 32) -> dict:
    """Trace c for ``length`` steps of H^power, then u, with every gap below ``length``.

    eps is a quarter of the first hole radius.  Leaving c's eps-neighbourhood
    along the unstable arc takes about as long as the stay, so the carpet
    search is expected to fail at every gap < length.  The blown-down sphere
    map is searched on the same instance as a control.
    """
    P = setup.power
    eps = stage.blown[setup.orbit_id].radius / 4
    gaps = list(range(1, length)) if gaps is None else list(gaps)
    system = StageSystem(stage, P)
    sphere = SphereSystem(stage.aut, P)
    c_sphere = stage.blown[setup.orbit_id].points[0]
    rows = []
    for g in gaps:
        segs = (Segment(setup.c, 0, length), Segment(u, length + g, 2 * length + g))
        inst = SpecInstance(eps, g, segs)
        res = trace_search(system, inst, grid)
        ctrl = trace_search(sphere, SpecInstance(eps, g, (Segment(c_sphere, 0, length), Segment(u.point, length + g, 2 * length + g))), grid)
        best = res.point if res.found else res.best_point
        defect, series = tracing_defect(system, inst, best)
        rows.append(
            {
                "gap": g,
                "found": res.found,
                "best_defect": defect,
                "defect_series": [float(v) for v in series],
                "boxes": res.boxes,
                "sphere_control_found": ctrl.found,
            }
        )
    return {
        "epsilon": eps,
        "length": length,
        "power": P,
        "gaps": rows,
        "ok": bool(not any(r["found"] for r in rows)),
    }
