"""Integer-matrix automorphisms of the 2-torus with exact rational points.

The torus is R^2/Z^2.  Points with rational coordinates are exactly the
periodic points of a hyperbolic automorphism, so the exact machinery here
(``RationalTorusPoint``, ``periodic_points``, ``orbit``) never touches floats.
Vectorised float helpers (``apply_float``) live alongside for statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from .surd import QuadSurd

#: Matrix entries and lattice indices must stay inside signed 128-bit range.
INT128_MAX = 2**127 - 1


class MatrixOverflowError(OverflowError):
    """An exact matrix computation left the signed 128-bit range."""


class NotHyperbolicError(ValueError):
    """The automorphism has an eigenvalue on the unit circle."""


def _check_width(*values: int) -> None:
    for v in values:
        if abs(v) > INT128_MAX:
            raise MatrixOverflowError(f"integer {v} exceeds the signed 128-bit range")


@dataclass(frozen=True)
class IntMatrix2:
    """Row-major 2x2 integer matrix ``[[a, b], [c, d]]``."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                if isinstance(v, float) and v.is_integer():
                    object.__setattr__(self, name, int(v))
                    continue
                raise TypeError(f"matrix entry {name}={v!r} is not an integer")
            object.__setattr__(self, name, int(v))
        _check_width(self.a, self.b, self.c, self.d)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "IntMatrix2":
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    @classmethod
    def identity(cls) -> "IntMatrix2":
        return cls(1, 0, 0, 1)

    def rows(self) -> List[List[int]]:
        return [[self.a, self.b], [self.c, self.d]]

    def to_numpy(self) -> np.ndarray:
        return np.array(self.rows(), dtype=float)

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> int:
        return self.a + self.d

    def adjugate(self) -> "IntMatrix2":
        return IntMatrix2(self.d, -self.b, -self.c, self.a)

    def transpose(self) -> "IntMatrix2":
        return IntMatrix2(self.a, self.c, self.b, self.d)

    def __matmul__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __sub__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(self.a - other.a, self.b - other.b, self.c - other.c, self.d - other.d)

    def __add__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)

    def mul_vec(self, x, y):
        return self.a * x + self.b * y, self.c * x + self.d * y


@dataclass(frozen=True)
class ToralAutomorphism:
    """The map x -> Ax (mod 1) for an integer matrix with |det A| = 1."""

    matrix: IntMatrix2
    inverse: IntMatrix2

    @classmethod
    def from_matrix(cls, m: Union[IntMatrix2, Sequence[Sequence[int]]]) -> "ToralAutomorphism":
        if not isinstance(m, IntMatrix2):
            m = IntMatrix2.from_rows(m)
        det = m.det
        if abs(det) != 1:
            raise ValueError(f"|det| must be 1 for a toral automorphism, got det={det}")
        adj = m.adjugate()
        inv = IntMatrix2(adj.a * det, adj.b * det, adj.c * det, adj.d * det)
        return cls(m, inv)

    @property
    def det(self) -> int:
        return self.matrix.det

    @property
    def trace(self) -> int:
        return self.matrix.trace

    @property
    def is_hyperbolic(self) -> bool:
        t = self.trace
        if self.det == 1:
            return abs(t) > 2
        # det = -1: eigenvalues (t +- sqrt(t^2+4))/2 sit on the unit circle only for t = 0
        return t != 0

    def inverted(self) -> "ToralAutomorphism":
        return ToralAutomorphism(self.inverse, self.matrix)


CAT_MAP = ToralAutomorphism.from_matrix([[2, 1], [1, 1]])


def _frac_mod1(v) -> Fraction:
    v = Fraction(v)
    return v - math.floor(v)


@dataclass(frozen=True, order=True)
class RationalTorusPoint:
    """Exact point of R^2/Z^2; coordinates are reduced fractions in [0, 1)."""

    x: Fraction
    y: Fraction

    def __post_init__(self):
        object.__setattr__(self, "x", _frac_mod1(self.x))
        object.__setattr__(self, "y", _frac_mod1(self.y))

    @property
    def denominator(self) -> int:
        return math.lcm(self.x.denominator, self.y.denominator)

    def __neg__(self) -> "RationalTorusPoint":
        return RationalTorusPoint(-self.x, -self.y)

    def as_float(self) -> Tuple[float, float]:
        return float(self.x), float(self.y)

    def __str__(self) -> str:
        return point_to_str(self)


def point_to_str(p: RationalTorusPoint) -> str:
    """Serialise as ``"p1/q1,p2/q2"`` (canonical reduced form)."""
    return f"{p.x.numerator}/{p.x.denominator},{p.y.numerator}/{p.y.denominator}"


def point_from_str(s: str) -> RationalTorusPoint:
    parts = s.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'p1/q1,p2/q2', got {s!r}")
    x, y = (Fraction(part.strip()) for part in parts)
    if x.denominator < 1 or y.denominator < 1:
        raise ValueError(f"bad denominator in {s!r}")
    return RationalTorusPoint(x, y)


def apply(aut: ToralAutomorphism, p: RationalTorusPoint) -> RationalTorusPoint:
    """Image of ``p`` under the automorphism, computed exactly."""
    x, y = aut.matrix.mul_vec(p.x, p.y)
    return RationalTorusPoint(x, y)


def apply_float(m: Union[ToralAutomorphism, IntMatrix2], xy: np.ndarray) -> np.ndarray:
    """Vectorised float version on an ``(N, 2)`` array; result in [0, 1)."""
    if isinstance(m, ToralAutomorphism):
        m = m.matrix
    xy = np.asarray(xy, dtype=float)
    out = np.empty_like(xy)
    out[..., 0] = m.a * xy[..., 0] + m.b * xy[..., 1]
    out[..., 1] = m.c * xy[..., 0] + m.d * xy[..., 1]
    return wrap01(out)


def wrap01(a: np.ndarray) -> np.ndarray:
    """Reduce mod 1 into [0, 1); guards the ``-tiny % 1 == 1.0`` rounding case."""
    r = np.mod(a, 1.0)
    return np.where(r >= 1.0, 0.0, r)


def _mat_power(m: IntMatrix2, n: int) -> IntMatrix2:
    result = IntMatrix2.identity()
    base = m
    while n:
        if n & 1:
            result = result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


def power(aut: ToralAutomorphism, n: int) -> ToralAutomorphism:
    """Exact ``n``-th power; negative ``n`` uses the inverse matrix.

    Raises:
        MatrixOverflowError: if an entry leaves the signed 128-bit range.
    """
    if n >= 0:
        return ToralAutomorphism(_mat_power(aut.matrix, n), _mat_power(aut.inverse, n))
    return ToralAutomorphism(_mat_power(aut.inverse, -n), _mat_power(aut.matrix, -n))


@dataclass(frozen=True)
class EigenData:
    """Eigenvalues and eigendirections, exact and numeric.

    ``dir_u_exact``/``dir_s_exact`` are (unnormalised) surd vectors with
    ``A v = lambda v`` exactly; ``dir_u``/``dir_s`` are float unit vectors.
    """

    lambda_u: float
    lambda_s: float
    dir_u: Tuple[float, float]
    dir_s: Tuple[float, float]
    lambda_u_exact: QuadSurd
    lambda_s_exact: QuadSurd
    dir_u_exact: Tuple[QuadSurd, QuadSurd]
    dir_s_exact: Tuple[QuadSurd, QuadSurd]

    @property
    def slope_u(self) -> QuadSurd:
        return self.dir_u_exact[1] / self.dir_u_exact[0]

    @property
    def slope_s(self) -> QuadSurd:
        return self.dir_s_exact[1] / self.dir_s_exact[0]

    @property
    def angle_u(self) -> float:
        return math.atan2(self.dir_u[1], self.dir_u[0])

    @property
    def angle_s(self) -> float:
        return math.atan2(self.dir_s[1], self.dir_s[0])


def _eigvec(m: IntMatrix2, lam: QuadSurd) -> Tuple[QuadSurd, QuadSurd]:
    D = lam.D
    if m.b != 0:
        return QuadSurd.rational(m.b, D), lam - m.a
    return lam - m.d, QuadSurd.rational(m.c, D)


def eigen(aut: ToralAutomorphism) -> EigenData:
    """Eigen-data from the characteristic polynomial t^2 - tr t + det.

    Raises:
        NotHyperbolicError: for |trace| <= 2 with det = 1.
    """
    if not aut.is_hyperbolic:
        raise NotHyperbolicError(f"trace {aut.trace}, det {aut.det}: eigenvalues on the unit circle")
    m = aut.matrix
    t, det = m.trace, m.det
    disc = t * t - 4 * det
    root = math.isqrt(disc)
    if root * root == disc:
        # only possible for non-hyperbolic matrices in dimension 2, kept for safety
        raise NotHyperbolicError("rational eigenvalues")
    half = Fraction(1, 2)
    plus = QuadSurd(Fraction(t, 2), half, disc)
    minus = QuadSurd(Fraction(t, 2), -half, disc)
    lam_u, lam_s = (plus, minus) if abs(plus) > 1 else (minus, plus)
    vu = _eigvec(m, lam_u)
    vs = _eigvec(m, lam_s)

    def unit(v):
        fx, fy = float(v[0]), float(v[1])
        n = math.hypot(fx, fy)
        if fx < 0 or (fx == 0 and fy < 0):
            n = -n
        return fx / n, fy / n

    return EigenData(
        lambda_u=float(lam_u),
        lambda_s=float(lam_s),
        dir_u=unit(vu),
        dir_s=unit(vs),
        lambda_u_exact=lam_u,
        lambda_s_exact=lam_s,
        dir_u_exact=vu,
        dir_s_exact=vs,
    )


def lefschetz_count(aut: ToralAutomorphism, n: int) -> int:
    """|det(A^n - I)|, the number of points fixed by the n-th iterate."""
    m = power(aut, n).matrix - IntMatrix2.identity()
    return abs(m.det)


def lefschetz_count_surd(aut: ToralAutomorphism, n: int) -> int:
    """Same count from the eigenvalues: |(lu^n - 1)(ls^n - 1)| in exact surds."""
    e = eigen(aut)
    val = (e.lambda_u_exact**n - 1) * (e.lambda_s_exact**n - 1)
    if val.q != 0 or val.p.denominator != 1:
        raise ArithmeticError(f"Lefschetz number is not an integer: {val}")
    return abs(int(val.p))


def _xgcd(a: int, b: int) -> Tuple[int, int, int]:
    """Return (g, s, t) with s*a + t*b = g = gcd(a, b) >= 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a - (a // b) * b
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if a < 0:
        a, s0, t0 = -a, -s0, -t0
    return a, s0, t0


def lattice_cosets(m: IntMatrix2) -> Tuple[int, int]:
    """Triangular basis of the column lattice of ``m``.

    Returns ``(h11, h22)`` such that the lattice has a basis
    ``{(h11, *), (0, h22)}``; coset representatives of Z^2 / mZ^2 are then
    ``{(i, j) : 0 <= i < h11, 0 <= j < h22}``.
    """
    if m.det == 0:
        raise ValueError("singular matrix has infinite cokernel")
    g, s, t = _xgcd(m.a, m.b)
    # second column of m @ [[s, b/g], [t, -a/g]] has zero first entry
    y2 = m.c * (m.b // g) - m.d * (m.a // g)
    h11, h22 = g, abs(y2)
    assert h11 * h22 == abs(m.det)
    return h11, h22


def _periodic_int(aut: ToralAutomorphism, period: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Fixed points of A^period as integer numerators over a common q.

    Solves (A^n - I) x in Z^2 by inverting on coset representatives of the
    image lattice: x = adj(M) k / det(M) (mod 1).
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    An = power(aut, period).matrix
    M = An - IntMatrix2.identity()
    det = M.det
    if det == 0:
        raise NotHyperbolicError(f"A^{period} - I is singular")
    q = abs(det)
    _check_width(q * q)
    h11, h22 = lattice_cosets(M)
    adj = M.adjugate()
    sign = 1 if det > 0 else -1
    ii, jj = np.meshgrid(np.arange(h11, dtype=object), np.arange(h22, dtype=object), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    fast = max(abs(adj.a), abs(adj.b), abs(adj.c), abs(adj.d)) * q < 2**61
    if fast:
        ii, jj = ii.astype(np.int64), jj.astype(np.int64)
    X = (sign * (adj.a * ii + adj.b * jj)) % q
    Y = (sign * (adj.c * ii + adj.d * jj)) % q
    # exact verification that A^n fixes every point: A^n x = x (mod 1) <=> A^n X = X (mod q)
    An_mod = IntMatrix2(An.a % q, An.b % q, An.c % q, An.d % q)
    if fast and q < 2**30:
        X, Y = X.astype(np.int64), Y.astype(np.int64)
    else:
        X, Y = X.astype(object), Y.astype(object)
    ok = ((An_mod.a * X + An_mod.b * Y - X) % q == 0) & ((An_mod.c * X + An_mod.d * Y - Y) % q == 0)
    if not np.all(ok):
        raise ArithmeticError("lattice solve produced a non-periodic point")
    if len(np.unique(np.asarray(X, dtype=object) * q + np.asarray(Y, dtype=object))) != q:
        raise ArithmeticError("lattice solve produced duplicate points")
    return X, Y, q


def _points_from_ints(X: np.ndarray, Y: np.ndarray, q: int) -> List[RationalTorusPoint]:
    # numerators already lie in [0, q), so the mod-1 normalisation is skipped
    order = np.lexsort((Y, X))
    out = []
    new = object.__new__
    for a, b in zip(X[order].tolist(), Y[order].tolist()):
        p = new(RationalTorusPoint)
        object.__setattr__(p, "x", Fraction(a, q))
        object.__setattr__(p, "y", Fraction(b, q))
        out.append(p)
    return out


def periodic_points(aut: ToralAutomorphism, period: int) -> List[RationalTorusPoint]:
    """All points with F^period(x) = x, sorted.

    The count equals |det(A^period - I)|.
    """
    X, Y, q = _periodic_int(aut, period)
    return _points_from_ints(X, Y, q)


def _divisors(n: int) -> List[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def exact_period_points(aut: ToralAutomorphism, period: int) -> List[RationalTorusPoint]:
    """Points whose least period is exactly ``period``."""
    X, Y, q = _periodic_int(aut, period)
    keep = np.ones(len(X), dtype=bool)
    for d in _divisors(period)[:-1]:
        Ad = power(aut, d).matrix
        Ad = IntMatrix2(Ad.a % q, Ad.b % q, Ad.c % q, Ad.d % q)
        fixed = ((Ad.a * X + Ad.b * Y - X) % q == 0) & ((Ad.c * X + Ad.d * Y - Y) % q == 0)
        keep &= ~fixed
    return _points_from_ints(X[keep], Y[keep], q)


def orbit(aut: ToralAutomorphism, p: RationalTorusPoint, max_len: int = 10**7) -> List[RationalTorusPoint]:
    """Forward orbit of a rational point up to (not including) its first return."""
    out = [p]
    cur = apply(aut, p)
    while cur != p:
        out.append(cur)
        if len(out) > max_len:
            raise RuntimeError("orbit did not close; is the point rational?")
        cur = apply(aut, cur)
    return out


def minimal_period(aut: ToralAutomorphism, p: RationalTorusPoint) -> int:
    return len(orbit(aut, p))


def grid_points(q: int) -> Iterable[RationalTorusPoint]:
    """The uniform grid {0..q-1}^2 / q."""
    for i in range(q):
        for j in range(q):
            yield RationalTorusPoint(Fraction(i, q), Fraction(j, q))
