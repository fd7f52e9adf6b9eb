"""Coefficient rings for the exterior algebra.

Three rings are provided: exact rationals (:data:`QQ`), machine reals with a
comparison tolerance (:class:`RealRing`), and sparse multivariate polynomials
with rational coefficients over named commuting symbols (:class:`PolyRing`).
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Number, Rational


class Poly:
    """Sparse polynomial in commuting named symbols with rational coefficients.

    Monomials are keys of the form ``(("Y1", 2), ("tau", 1))`` (symbol names
    sorted, positive exponents); the empty tuple is the constant monomial.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for mono, c in terms.items():
                c = Fraction(c)
                if c:
                    self.terms[mono] = self.terms.get(mono, 0) + c
            self.terms = {m: c for m, c in self.terms.items() if c}

    @classmethod
    def symbol(cls, name: str) -> "Poly":
        return cls({((name, 1),): 1})

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(): c})

    @staticmethod
    def _coerce(other):
        if isinstance(other, Poly):
            return other
        if isinstance(other, (Rational, int)):
            return Poly.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        p = Poly()
        p.terms = out
        return p

    __radd__ = __add__

    def __neg__(self):
        p = Poly()
        p.terms = {m: -c for m, c in self.terms.items()}
        return p

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m, 0) + c1 * c2
                if s:
                    out[m] = s
                else:
                    out.pop(m, None)
        p = Poly()
        p.terms = out
        return p

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Rational, int)):
            inv = Fraction(1) / Fraction(other)
            return self * inv
        return NotImplemented

    def __pow__(self, k: int):
        out = Poly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def diff(self, name: str) -> "Poly":
        """Partial derivative with respect to the symbol ``name``."""
        out: dict = {}
        for mono, c in self.terms.items():
            d = dict(mono)
            k = d.get(name, 0)
            if not k:
                continue
            if k == 1:
                del d[name]
            else:
                d[name] = k - 1
            key = tuple(sorted(d.items()))
            out[key] = out.get(key, 0) + c * k
        return Poly(out)

    def subs(self, values: dict):
        """Evaluate (fully or partially) by substituting numbers for symbols."""
        scalar = 0
        rest: dict = {}
        for mono, c in self.terms.items():
            coeff = c
            left = []
            for name, k in mono:
                if name in values:
                    coeff = coeff * values[name] ** k
                else:
                    left.append((name, k))
            if left:
                key = tuple(left)
                rest[key] = rest.get(key, 0) + coeff
            else:
                scalar = scalar + coeff
        if not rest:
            return scalar
        return Poly(rest) + Poly.const(scalar)

    def symbols(self) -> set[str]:
        return {name for mono in self.terms for name, _ in mono}

    def degree(self) -> int:
        return max((sum(k for _, k in m) for m in self.terms), default=0)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items()):
            mon = "*".join(n if k == 1 else f"{n}^{k}" for n, k in mono)
            if not mon:
                parts.append(str(c))
            elif c == 1:
                parts.append(mon)
            else:
                parts.append(f"{c}*{mon}")
        return " + ".join(parts)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for name, k in m2:
        d[name] = d.get(name, 0) + k
    return tuple(sorted(d.items()))


class Ring:
    """Minimal commutative-ring interface used by :mod:`susygci.exterior`."""

    name = "ring"

    def coerce(self, x):
        raise NotImplementedError

    def zero(self):
        return self.coerce(0)

    def one(self):
        return self.coerce(1)

    def is_zero(self, x) -> bool:
        return not x

    def eq(self, a, b) -> bool:
        return a == b

    def __repr__(self):
        return f"{type(self).__name__}()"


class RationalRing(Ring):
    name = "QQ"

    def coerce(self, x):
        if isinstance(x, Fraction):
            return x
        if isinstance(x, (int, Rational)):
            return Fraction(x)
        if isinstance(x, float):
            return Fraction(x)
        raise TypeError(f"cannot coerce {type(x).__name__} into QQ")


class RealRing(Ring):
    """Machine floats; :meth:`eq` compares with an absolute/relative tolerance."""

    name = "RR"

    def __init__(self, tol: float = 1e-10):
        self.tol = tol

    def coerce(self, x):
        if isinstance(x, Number):
            return float(x)
        raise TypeError(f"cannot coerce {type(x).__name__} into RR")

    def eq(self, a, b) -> bool:
        return abs(a - b) <= self.tol * max(1.0, abs(a), abs(b))

    def __repr__(self):
        return f"RealRing(tol={self.tol})"


class PolyRing(Ring):
    """Polynomials over QQ in commuting symbols (tau, Y_i, Z_i, ...)."""

    name = "QQ[...]"

    def __init__(self, symbols=()):
        self.symbols = tuple(symbols)

    def coerce(self, x):
        if isinstance(x, Poly):
            return x
        if isinstance(x, (int, Rational)):
            return Poly.const(x)
        raise TypeError(f"cannot coerce {type(x).__name__} into a polynomial ring")

    def gen(self, name: str) -> Poly:
        return Poly.symbol(name)

    def __repr__(self):
        return f"PolyRing({', '.join(self.symbols)})"


QQ = RationalRing()
RR = RealRing()
