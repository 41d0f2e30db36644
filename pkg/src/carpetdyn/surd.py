"""Exact arithmetic in Q(sqrt(D)) for a fixed non-square integer D."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, Rational)):
        return Fraction(v)
    raise TypeError(f"expected an exact rational, got {type(v).__name__}")


@dataclass(frozen=True)
class QuadSurd:
    """The number ``p + q*sqrt(D)`` with rational ``p, q``."""

    p: Fraction
    q: Fraction
    D: int

    def __post_init__(self):
        object.__setattr__(self, "p", _as_fraction(self.p))
        object.__setattr__(self, "q", _as_fraction(self.q))
        if self.D < 0:
            raise ValueError("D must be non-negative")

    @classmethod
    def rational(cls, v, D: int) -> "QuadSurd":
        return cls(_as_fraction(v), Fraction(0), D)

    def _coerce(self, other) -> "QuadSurd":
        if isinstance(other, QuadSurd):
            if other.D != self.D and other.q != 0 and self.q != 0:
                raise ValueError(f"mixing Q(sqrt({self.D})) and Q(sqrt({other.D}))")
            if other.D != self.D:
                D = self.D if other.q == 0 else other.D
                return QuadSurd(other.p, other.q, D)
            return other
        return QuadSurd.rational(other, self.D)

    def __add__(self, other):
        o = self._coerce(other)
        D = o.D if self.q == 0 else self.D
        return QuadSurd(self.p + o.p, self.q + o.q, D)

    __radd__ = __add__

    def __neg__(self):
        return QuadSurd(-self.p, -self.q, self.D)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        D = o.D if self.q == 0 else self.D
        return QuadSurd(self.p * o.p + self.q * o.q * D, self.p * o.q + self.q * o.p, D)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadSurd":
        return QuadSurd(self.p, -self.q, self.D)

    def norm(self) -> Fraction:
        return self.p * self.p - self.q * self.q * self.D

    def __truediv__(self, other):
        o = self._coerce(other)
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by a zero surd")
        num = self * o.conjugate()
        return QuadSurd(num.p / n, num.q / n, num.D)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k: int):
        if k < 0:
            return QuadSurd.rational(1, self.D) / (self ** (-k))
        result = QuadSurd.rational(1, self.D)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def sign(self) -> int:
        """Exact sign of ``p + q*sqrt(D)``."""
        sp = (self.p > 0) - (self.p < 0)
        sq = (self.q > 0) - (self.q < 0)
        if sq == 0 or self.D == 0:
            return sp
        if sp == 0:
            return sq
        if sp == sq:
            return sp
        # opposite signs: compare p^2 against q^2 D
        diff = self.p * self.p - self.q * self.q * self.D
        if diff == 0:
            return 0
        return sp if diff > 0 else sq

    def __eq__(self, other):
        try:
            return (self - other).sign() == 0
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash((self.p, self.q if self.D else 0, self.D if self.q else 0))

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __gt__(self, other):
        return (self - other).sign() > 0

    def __ge__(self, other):
        return (self - other).sign() >= 0

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __float__(self):
        return float(self.p) + float(self.q) * math.sqrt(self.D)

    def __repr__(self):
        return f"QuadSurd({self.p} + {self.q}*sqrt({self.D}))"

    def __str__(self):
        if self.q == 0:
            return str(self.p)
        return f"{self.p} + {self.q}*sqrt({self.D})"
