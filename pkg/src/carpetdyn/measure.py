"""Finite-support measures, the Levy-Prokhorov distance, and ergodic statistics.

The Levy-Prokhorov distance between finitely supported measures is computed
through Strassen's theorem: ``rho(mu, nu) <= eps`` iff a sub-coupling using
only pairs at distance ``< eps`` moves mass ``>= 1 - eps``.  The transported
mass is a max-flow on the bipartite support graph; it only changes at the
pairwise distances, so for moderate supports the search runs over the
sorted candidate distances and the result is exact up to the flow arithmetic.
Large supports fall back to bisection on eps with neighbour search.  Both
searches gallop up from small eps, so the flow graphs stay close to the size
of the answer's neighbourhood graph.

Flows use scipy's integer max-flow when all weights are multiples of a
common 1/L with L < 2^31 (empirical and grid measures), which is exact;
other weights go through networkx in floating point.
"""

from __future__ import annotations

import bisect
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree

from . import toral
from .sphere import canonical_array, sphere_dist_array, torus_dist_array
from .toral import ToralAutomorphism, wrap01

#: Above this many atom pairs the solver switches to eps-bisection.
DENSE_PAIR_LIMIT = 4_000_000
LP_TOL = 1e-9
# distances and mass defects below this are rounding noise, treated as 0
ZERO_TOL = 1e-12
_INT32_MAX = 2**31 - 1


class SpaceMismatch(ValueError):
    """The two measures live on different metric spaces."""


class EmptyOrbit(ValueError):
    pass


@dataclass(frozen=True)
class MetricSpaceHandle:
    """Metric space for measure atoms.

    ``kind`` is ``"torus"`` (flat metric on R^2/Z^2), ``"sphere"`` (quotient
    metric on canonical lifts) or ``"stage"`` (positions of extended points of
    a carpet stage, with the sphere metric).  ``"custom"`` takes a pairwise
    distance function on arbitrary point arrays.
    """

    kind: str
    stage: object = field(default=None, compare=False)
    distance: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("torus", "sphere", "stage", "custom"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind == "custom" and self.distance is None:
            raise ValueError("custom spaces need a distance function")

    @classmethod
    def torus(cls):
        return cls("torus")

    @classmethod
    def sphere(cls):
        return cls("sphere")

    @classmethod
    def for_stage(cls, stage):
        return cls("stage", stage=stage)

    def same_as(self, other: "MetricSpaceHandle") -> bool:
        if self.kind != other.kind:
            return False
        if self.kind == "stage":
            return self.stage is other.stage or self.stage == other.stage
        if self.kind == "custom":
            return self.distance is other.distance
        return True

    def canonical(self, pts):
        if self.kind == "torus":
            return wrap01(np.asarray(pts, dtype=float).reshape(-1, 2))
        if self.kind in ("sphere", "stage"):
            return canonical_array(np.asarray(pts, dtype=float).reshape(-1, 2))
        return np.asarray(pts)

    def dist(self, P, Q) -> np.ndarray:
        if self.kind == "torus":
            return torus_dist_array(P, Q)
        if self.kind in ("sphere", "stage"):
            return sphere_dist_array(P, Q)
        return np.asarray(self.distance(P, Q), dtype=float)

    def pairs_within(self, P, Q, eps: float):
        """Index pairs (i, j) with d(P_i, Q_j) < eps."""
        if self.kind == "custom":
            rows, cols = [], []
            for s in range(0, len(P), 2048):
                D = self.dist(P[s:s + 2048], Q)
                r, c = np.nonzero(D < eps)
                rows.append(r + s)
                cols.append(c)
            return np.concatenate(rows), np.concatenate(cols)
        Qs = np.asarray(Q, dtype=float)
        owner = np.arange(len(Qs))
        if self.kind != "torus":
            Qs = np.concatenate([Qs, wrap01(-Qs)])
            owner = np.concatenate([owner, owner])
        tree_q = cKDTree(wrap01(Qs), boxsize=1.0)
        tree_p = cKDTree(wrap01(np.asarray(P, dtype=float)), boxsize=1.0)
        sdm = tree_p.sparse_distance_matrix(tree_q, max_distance=eps, output_type="ndarray")
        keep = sdm["v"] < eps
        rows, cols = sdm["i"][keep], owner[sdm["j"][keep]]
        if len(rows):
            key = np.unique(rows.astype(np.int64) * len(Q) + cols)
            rows, cols = key // len(Q), key % len(Q)
        return rows, cols

    def check_axioms(self, pts, rng: np.random.Generator, trials: int = 200, tol: float = 1e-12) -> bool:
        """Spot-test symmetry, identity and the triangle inequality."""
        pts = np.asarray(pts)
        n = len(pts)
        for _ in range(trials):
            i, j, k = rng.integers(0, n, 3)
            a, b, c = pts[i:i + 1], pts[j:j + 1], pts[k:k + 1]
            dab = self.dist(a, b)[0, 0]
            if abs(dab - self.dist(b, a)[0, 0]) > tol or self.dist(a, a)[0, 0] > tol:
                return False
            if dab > self.dist(a, c)[0, 0] + self.dist(c, b)[0, 0] + tol:
                return False
        return True


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finitely many atoms; weights sum to 1."""

    points: np.ndarray
    weights: np.ndarray
    space: MetricSpaceHandle

    @classmethod
    def from_atoms(cls, points, weights, space: MetricSpaceHandle, tol: float = 1e-12) -> "DiscreteMeasure":
        w = np.asarray([float(x) for x in weights], dtype=float)
        if len(w) == 0:
            raise ValueError("a measure needs at least one atom")
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if abs(math.fsum(w) - 1.0) > tol:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        pts = space.canonical(points)
        if space.kind == "custom":
            return cls(pts, w, space)
        # the two lifts of a sphere point can canonicalise to floats a few ulps apart
        keys = np.mod(np.round(pts, 12), 1.0)
        _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        merged = np.zeros(len(first))
        np.add.at(merged, inv.ravel(), w)
        return cls(pts[first], merged, space)

    @classmethod
    def dirac(cls, point, space: MetricSpaceHandle) -> "DiscreteMeasure":
        return cls.from_atoms(np.asarray(point, dtype=float).reshape(1, -1), [1.0], space)

    def __len__(self):
        return len(self.weights)

    def mass(self, mask) -> float:
        """Mass of the atoms selected by a boolean mask or predicate on points."""
        if callable(mask):
            mask = mask(self.points)
        return float(math.fsum(self.weights[np.asarray(mask, dtype=bool)]))

    def to_json(self) -> dict:
        return {
            "space": self.space.kind,
            "atoms": [[list(map(float, p)), float(w)] for p, w in zip(self.points, self.weights)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict, space: Optional[MetricSpaceHandle] = None) -> "DiscreteMeasure":
        space = space or MetricSpaceHandle(doc["space"])
        pts = np.array([a[0] for a in doc["atoms"]], dtype=float)
        w = [a[1] for a in doc["atoms"]]
        return cls.from_atoms(pts, w, space, tol=1e-9)


def _merge_identical(adj: np.ndarray, w: np.ndarray):
    """Merge rows of a boolean adjacency with identical neighbourhoods (flow-preserving)."""
    if adj.shape[0] == 0:
        return adj, w
    packed = np.packbits(adj, axis=1)
    uniq, inv = np.unique(packed, axis=0, return_inverse=True)
    merged_w = np.zeros(len(uniq))
    np.add.at(merged_w, inv.ravel(), w)
    first = np.zeros(len(uniq), dtype=int)
    first[inv.ravel()[::-1]] = np.arange(len(inv))[::-1]
    return adj[first], merged_w


def _integer_scale(w: np.ndarray, limit: int = _INT32_MAX) -> Optional[int]:
    """Least L with every weight an integer multiple of 1/L (to 1e-12), or None above ``limit``."""
    L = 1
    for v in np.unique(w):
        L = math.lcm(L, Fraction(float(v)).limit_denominator(10**7).denominator)
        if L > limit:
            return None
    if np.max(np.abs(w * L - np.round(w * L))) > 1e-12 * L:
        return None
    return L


def _flow_value(wa: np.ndarray, wb: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> float:
    """Max-flow source -> a-atoms -> b-atoms -> sink with uncapacitated middle edges."""
    if len(rows) == 0:
        return 0.0
    ra = np.unique(rows)
    cb = np.unique(cols)
    if len(ra) * len(cb) <= 4_000_000:
        adj = np.zeros((len(ra), len(cb)), dtype=bool)
        adj[np.searchsorted(ra, rows), np.searchsorted(cb, cols)] = True
        adj, wa2 = _merge_identical(adj, wa[ra])
        adjT, wb2 = _merge_identical(adj.T.copy(), wb[cb])
        r2, c2 = np.nonzero(adjT.T)
        wa_, wb_ = wa2, wb2
    else:
        r2, c2 = np.searchsorted(ra, rows), np.searchsorted(cb, cols)
        wa_, wb_ = wa[ra], wb[cb]
    na, nb = len(wa_), len(wb_)
    L = _integer_scale(np.concatenate([wa_, wb_]))
    if L is not None:
        # nodes: 0 source, 1..na a-atoms, na+1..na+nb b-atoms, na+nb+1 sink
        sink = na + nb + 1
        src_idx = np.concatenate([np.zeros(na, int), 1 + r2, na + 1 + np.arange(nb)])
        dst_idx = np.concatenate([1 + np.arange(na), na + 1 + c2, np.full(nb, sink)])
        cap = np.concatenate([np.round(wa_ * L), np.full(len(r2), L), np.round(wb_ * L)]).astype(np.int32)
        G = csr_matrix((cap, (src_idx, dst_idx)), shape=(sink + 1, sink + 1))
        return maximum_flow(G, 0, sink, method="dinic").flow_value / L
    G = nx.DiGraph()
    src, sink = -1, -2
    G.add_edges_from((src, i, {"capacity": float(wa_[i])}) for i in range(na))
    G.add_edges_from((na + j, sink, {"capacity": float(wb_[j])}) for j in range(nb))
    G.add_edges_from((int(i), na + int(j)) for i, j in zip(r2, c2))
    return float(nx.maximum_flow_value(G, src, sink))


def transported_mass(mu: DiscreteMeasure, nu: DiscreteMeasure, eps: float) -> float:
    """Largest mass a sub-coupling of (mu, nu) moves along pairs at distance < eps."""
    rows, cols = mu.space.pairs_within(mu.points, nu.points, eps)
    return _flow_value(mu.weights, nu.weights, rows, cols)


def lp_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Levy-Prokhorov distance between two finitely supported measures.

    Raises:
        SpaceMismatch: if the measures live on different spaces.
    """
    if not mu.space.same_as(nu.space):
        raise SpaceMismatch(f"{mu.space.kind} vs {nu.space.kind}")
    if len(mu) * len(nu) > DENSE_PAIR_LIMIT:
        return _lp_bisect(mu, nu)
    D = mu.space.dist(mu.points, nu.points)
    D = np.where(D < ZERO_TOL, 0.0, D)
    cand = np.unique(np.concatenate([[0.0], D[D < 1.0]]))

    cache = {}

    def flow(k):
        # mass movable with eps just above cand[k]: pairs at distance <= cand[k]
        if k not in cache:
            r, c = np.nonzero(D <= cand[k])
            cache[k] = _flow_value(mu.weights, nu.weights, r, c)
        return cache[k]

    def defect(k):
        d = 1.0 - flow(k)
        return 0.0 if d < ZERO_TOL else d

    def crossed(k):
        return cand[k] >= defect(k)

    # first candidate index where the distance term dominates the defect term;
    # gallop from the small end, then bisect the bracket
    if crossed(0):
        return 0.0
    lo, step = 1, 1
    while lo < len(cand) and not crossed(min(lo + step - 1, len(cand) - 1)):
        lo += step
        step *= 2
    hi = min(lo + step - 1, len(cand) - 1) + 1 if lo < len(cand) else len(cand)
    while lo < hi:
        mid = (lo + hi) // 2
        if crossed(mid):
            hi = mid
        else:
            lo = mid + 1
    k = lo
    if k == len(cand):
        val = defect(len(cand) - 1)
    elif k == 0:
        val = 0.0
    else:
        val = min(float(cand[k]), defect(k - 1))
    return float(min(1.0, max(0.0, val)))


def _lp_bisect(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = LP_TOL) -> float:
    lo, hi = 0.0, 1e-3
    while hi < 1.0 and transported_mass(mu, nu, hi) < 1.0 - hi:
        lo, hi = hi, min(1.0, 2 * hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if transported_mass(mu, nu, mid) >= 1.0 - mid:
            hi = mid
        else:
            lo = mid
    return hi


def empirical_measure(orbit, space: MetricSpaceHandle) -> DiscreteMeasure:
    """Uniform weights 1/n on orbit points; repeated points merge their weights.

    ``orbit`` is an ``(n, 2)`` array of positions or a sequence of
    ``RationalTorusPoint``/``SpherePoint``.
    """
    if orbit is None or len(orbit) == 0:
        raise EmptyOrbit("empirical measure of an empty orbit")
    first = orbit[0]
    if hasattr(first, "as_float"):
        pts = np.array([p.as_float() for p in orbit], dtype=float)
    else:
        pts = np.asarray(orbit, dtype=float)
    n = len(pts)
    return DiscreteMeasure.from_atoms(pts, np.full(n, 1.0 / n), space)


def grid_measure(space: MetricSpaceHandle, q: int) -> DiscreteMeasure:
    """Lebesgue measure discretised on the cell centres of a q x q grid."""
    c = (np.arange(q) + 0.5) / q
    X, Y = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return DiscreteMeasure.from_atoms(pts, np.full(len(pts), 1.0 / len(pts)), space)


# ---------------------------------------------------------------------------
# Birkhoff averages and correlations


def torus_step(aut: ToralAutomorphism) -> Callable:
    """Scalar float map (x, y) -> A(x, y) mod 1, cheap enough for 10^6-step loops."""
    m = aut.matrix
    a, b, c, d = m.a, m.b, m.c, m.d

    def step(p):
        x, y = p
        u = (a * x + b * y) % 1.0
        v = (c * x + d * y) % 1.0
        return (0.0 if u >= 1.0 else u, 0.0 if v >= 1.0 else v)

    return step


def birkhoff_average(system: Callable, observable: Callable, start, n: int):
    """(1/n) sum_{j<n} f(T^j x).

    Float values use compensated summation; exact values (Fraction/int) are
    summed exactly and the average is returned as a Fraction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    step = system.step if hasattr(system, "step") else system
    x = start
    first = observable(x)
    if isinstance(first, (Fraction, int)) and not isinstance(first, bool):
        total = Fraction(first)
        for _ in range(n - 1):
            x = step(x)
            total += observable(x)
        return total / n

    def values():
        nonlocal x
        yield first
        for _ in range(n - 1):
            x = step(x)
            yield observable(x)

    return math.fsum(values()) / n


def character_correlation(aut: ToralAutomorphism, k: Sequence[int], l: Sequence[int], n: int) -> complex:
    """Exact correlation of the characters e_k o F^n and e_l under Lebesgue measure.

    Equals 1 if (A^T)^n k = l and 0 otherwise.
    """
    k = tuple(int(v) for v in k)
    l = tuple(int(v) for v in l)
    if k == (0, 0) or l == (0, 0):
        raise ValueError("characters must be non-trivial")
    P = toral.power(aut, n).matrix.transpose()
    image = P.mul_vec(*k)
    return complex(1.0) if image == l else complex(0.0)


def correlation_quadrature(aut: ToralAutomorphism, k, l, n: int, grid: int = 512) -> complex:
    """Midpoint-rule value of the same correlation on a ``grid`` x ``grid`` mesh."""
    c = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(c, c, indexing="ij")
    xy = np.stack([X.ravel(), Y.ravel()], axis=1)
    img = xy
    Pn = toral.power(aut, n)
    img = toral.apply_float(Pn, xy)
    f = np.exp(2j * np.pi * (k[0] * img[:, 0] + k[1] * img[:, 1]))
    g = np.exp(-2j * np.pi * (l[0] * xy[:, 0] + l[1] * xy[:, 1]))
    return complex(np.mean(f * g))


# ---------------------------------------------------------------------------
# full support of the lifted measure


def _chunk_counts(stage, seq: np.random.SeedSequence, n: int, cells: int):
    from .tower import blow_up

    rng = np.random.default_rng(seq)
    xy = canonical_array(rng.random((n, 2)))
    pos = blow_up(stage, xy)
    ix = np.clip((pos[:, 0] * 2 * cells).astype(int), 0, cells - 1)
    iy = np.clip((pos[:, 1] * cells).astype(int), 0, cells - 1)
    counts = np.zeros((cells, cells), dtype=np.int64)
    np.add.at(counts, (ix, iy), 1)
    return counts


def nu_support_evidence(stage, samples: int = 100_000, depth_grid: int = 3, seed: int = 0, chunks: int = 8, workers: int = 1) -> dict:
    """Monte Carlo masses of a mesh of open cells of a stage under the lifted measure.

    Lebesgue samples on the sphere are carried into the stage by the inverse
    blow-down, so every sample lands on a regular point.  The mesh has
    ``2**depth_grid`` cells per side over the fundamental half-domain
    [0, 1/2] x [0, 1).  Streams are split from ``seed`` per chunk, so the
    result does not depend on ``workers``.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    cells = 2**depth_grid
    seqs = np.random.SeedSequence(seed).spawn(chunks)
    sizes = [samples // chunks + (1 if i < samples % chunks else 0) for i in range(chunks)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda a: _chunk_counts(stage, *a, cells), zip(seqs, sizes)))
    else:
        parts = [_chunk_counts(stage, s, n, cells) for s, n in zip(seqs, sizes)]
    counts = sum(parts)
    masses = counts / samples
    return {
        "seed": seed,
        "samples": samples,
        "depth": stage.depth,
        "mesh": [cells, cells],
        "min_cell_mass": float(masses.min()),
        "max_cell_mass": float(masses.max()),
        "total_mass": float(counts.sum() / samples),
        "mass_in_holes": 0.0,
        "all_positive": bool((counts > 0).all()),
        "counts": counts.tolist(),
    }
