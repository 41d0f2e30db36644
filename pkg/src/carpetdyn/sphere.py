"""The pillowcase sphere: T^2 modulo the involution (x, y) ~ (-x, -y).

A sphere point is stored through a canonical lift in [0, 1)^2, the
lexicographically smaller of the two class members.  Exact (Fraction) and
float coordinates are both supported; the array helpers at the bottom work on
``(N, 2)`` float arrays of lifts and are what the heavier modules use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple, Union

import numpy as np

from .toral import RationalTorusPoint, ToralAutomorphism, apply_float, point_to_str, wrap01

BRANCH_LIFTS: Tuple[Tuple[Fraction, Fraction], ...] = (
    (Fraction(0), Fraction(0)),
    (Fraction(1, 2), Fraction(0)),
    (Fraction(0), Fraction(1, 2)),
    (Fraction(1, 2), Fraction(1, 2)),
)
BRANCH_ARRAY = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])

#: Float tolerance used to decide membership of the branch set.
BRANCH_TOL = 1e-12


class BranchPointError(ValueError):
    """No isometric chart exists around a branch point."""


def _mod1(v):
    if isinstance(v, Fraction):
        return v - math.floor(v)
    r = float(v) % 1.0
    return 0.0 if r >= 1.0 else r


def _is_exact(v) -> bool:
    return isinstance(v, (Fraction, int)) and not isinstance(v, bool)


@dataclass(frozen=True)
class SpherePoint:
    """Class {(x, y), (-x, -y)} represented by its canonical lift."""

    x: Union[Fraction, float]
    y: Union[Fraction, float]
    is_branch: bool

    @property
    def rep(self) -> Tuple:
        return (self.x, self.y)

    @property
    def exact(self) -> bool:
        return isinstance(self.x, Fraction) and isinstance(self.y, Fraction)

    def as_float(self) -> Tuple[float, float]:
        return float(self.x), float(self.y)

    def to_json(self) -> dict:
        if self.exact:
            rep = point_to_str(RationalTorusPoint(self.x, self.y))
        else:
            rep = [float(self.x), float(self.y)]
        return {"rep": rep, "branch": bool(self.is_branch)}

    def __str__(self):
        if self.exact:
            return point_to_str(RationalTorusPoint(self.x, self.y))
        return f"{float(self.x):.12g},{float(self.y):.12g}"


def project(p) -> SpherePoint:
    """Canonical sphere point of a torus point (RationalTorusPoint or pair)."""
    if isinstance(p, SpherePoint):
        return p
    if isinstance(p, RationalTorusPoint):
        x, y = p.x, p.y
    else:
        x, y = p
    if _is_exact(x) and _is_exact(y):
        a = (_mod1(Fraction(x)), _mod1(Fraction(y)))
        b = (_mod1(-Fraction(x)), _mod1(-Fraction(y)))
        rep = min(a, b)
        return SpherePoint(rep[0], rep[1], a == b)
    a = (_mod1(x), _mod1(y))
    b = (_mod1(-float(x)), _mod1(-float(y)))
    rep = min(a, b)
    return SpherePoint(rep[0], rep[1], _torus_dist_float(a, b) < 2 * BRANCH_TOL)


def lifts(s: SpherePoint) -> List[Tuple]:
    """Distinct torus preimages of ``s`` (one at a branch point, else two)."""
    if s.is_branch:
        return [s.rep]
    if s.exact:
        neg = (_mod1(-s.x), _mod1(-s.y))
    else:
        neg = (_mod1(-float(s.x)), _mod1(-float(s.y)))
    return [s.rep, neg]


def factor_apply(aut: ToralAutomorphism, s: SpherePoint) -> SpherePoint:
    """The induced sphere map G, with G(project(p)) = project(F(p))."""
    if s.exact:
        x, y = aut.matrix.mul_vec(s.x, s.y)
        return project((x, y))
    out = apply_float(aut, np.array([s.as_float()]))[0]
    return project((float(out[0]), float(out[1])))


def _torus_dist_float(p, q) -> float:
    dx = float(p[0]) - float(q[0])
    dy = float(p[1]) - float(q[1])
    dx -= round(dx)
    dy -= round(dy)
    return math.hypot(dx, dy)


def torus_dist2_exact(p, q) -> Fraction:
    """Exact squared flat distance between two rational torus points."""
    dx = Fraction(p[0]) - Fraction(q[0])
    dy = Fraction(p[1]) - Fraction(q[1])
    dx -= round(dx)
    dy -= round(dy)
    return dx * dx + dy * dy


def torus_metric(p, q) -> float:
    return _torus_dist_float(p, q)


def sphere_metric(s1: SpherePoint, s2: SpherePoint) -> float:
    """Quotient metric: minimum flat distance over lifts."""
    p, q = s1.rep, s2.rep
    nq = (-float(q[0]), -float(q[1]))
    return min(_torus_dist_float(p, q), _torus_dist_float(p, nq))


def sphere_dist2_exact(s1: SpherePoint, s2: SpherePoint) -> Fraction:
    p, q = s1.rep, s2.rep
    return min(torus_dist2_exact(p, q), torus_dist2_exact(p, (-Fraction(q[0]), -Fraction(q[1]))))


def branch_distance(s: SpherePoint) -> float:
    """Distance from ``s`` to the branch set (equals the distance of a lift to (1/2)Z^2)."""
    return min(_torus_dist_float(s.rep, c) for c in BRANCH_LIFTS)


def branch_dist2_exact(s: SpherePoint) -> Fraction:
    return min(torus_dist2_exact(s.rep, c) for c in BRANCH_LIFTS)


@dataclass(frozen=True)
class SphereChart:
    """A ball on the sphere on which the projection from the torus is an isometry."""

    center: SpherePoint
    radius: float
    lift: Tuple[float, float]

    def to_local(self, s) -> np.ndarray:
        """Chart vector from the lift to the nearest lift of ``s``."""
        p = s.as_float() if isinstance(s, SpherePoint) else s
        return local_vectors(np.array([p], dtype=float), np.array(self.lift))[0]

    def from_local(self, v) -> SpherePoint:
        x = self.lift[0] + float(v[0])
        y = self.lift[1] + float(v[1])
        return project((x, y))

    def contains(self, s: SpherePoint) -> bool:
        return sphere_metric(self.center, s) < self.radius


def safe_chart_radius(s: SpherePoint) -> float:
    """Half the smaller of: distance to the branch set, distance to the antipodal lift."""
    p = s.as_float()
    anti = _torus_dist_float(p, (-p[0], -p[1]))
    return min(branch_distance(s), anti) / 2.0


def local_chart(s: SpherePoint, r: float) -> SphereChart:
    """Isometric chart of radius ``min(r, safe radius)`` around a non-branch point.

    Raises:
        BranchPointError: if ``s`` is one of the four branch points.
    """
    if s.is_branch:
        raise BranchPointError(f"{s} is a branch point")
    if not r > 0:
        raise ValueError("chart radius must be positive")
    return SphereChart(s, min(float(r), safe_chart_radius(s)), s.as_float())


# ---------------------------------------------------------------------------
# array helpers on (N, 2) float lifts


def canonical_array(xy: np.ndarray) -> np.ndarray:
    """Canonical lifts of an ``(N, 2)`` array of torus points."""
    a = wrap01(np.asarray(xy, dtype=float))
    b = wrap01(-a)
    take_b = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
    out = a.copy()
    out[take_b] = b[take_b]
    return out


def _wrap_sym(d: np.ndarray) -> np.ndarray:
    return d - np.round(d)


def local_vectors(xy: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Shortest vector from ``center`` to a lift of each sphere point in ``xy``."""
    xy = np.asarray(xy, dtype=float)
    v1 = _wrap_sym(xy - center)
    v2 = _wrap_sym(-xy - center)
    n1 = np.einsum("...i,...i->...", v1, v1)
    n2 = np.einsum("...i,...i->...", v2, v2)
    return np.where((n2 < n1)[..., None], v2, v1)


def sphere_dist_array(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Pairwise sphere distances, shape ``(len(P), len(Q))``."""
    P = np.asarray(P, dtype=float)[:, None, :]
    Q = np.asarray(Q, dtype=float)[None, :, :]
    d1 = _wrap_sym(P - Q)
    d2 = _wrap_sym(P + Q)
    return np.sqrt(np.minimum((d1**2).sum(-1), (d2**2).sum(-1)))


def torus_dist_array(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)[:, None, :]
    Q = np.asarray(Q, dtype=float)[None, :, :]
    d = _wrap_sym(P - Q)
    return np.sqrt((d**2).sum(-1))


def sphere_dist_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise sphere distance between matching points of two ``(N, 2)`` arrays."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    d1 = _wrap_sym(P - Q)
    d2 = _wrap_sym(P + Q)
    return np.sqrt(np.minimum((d1**2).sum(-1), (d2**2).sum(-1)))


def factor_apply_array(aut: ToralAutomorphism, xy: np.ndarray) -> np.ndarray:
    return canonical_array(apply_float(aut, xy))
