"""Exact arithmetic in the Grassmann algebra on 2n generators.

Generators are indexed ``0..n-1`` for ``xi_1..xi_n`` and ``n..2n-1`` for
``eta_1..eta_n``. A monomial is a bitmask; its stored coefficient refers to
the product of its generators in ascending index order.
"""

from __future__ import annotations

from math import factorial

from .errors import UsageError
from .rings import QQ, Ring

MAX_PAIRS = 32


def _parity_before(mask: int, g: int) -> int:
    return (mask & ((1 << g) - 1)).bit_count() & 1


def _merge_sign(a: int, b: int) -> int:
    """Sign of reordering (sorted a)(sorted b) into ascending order."""
    swaps = 0
    while b:
        low = b & -b
        j = low.bit_length() - 1
        swaps += (a >> (j + 1)).bit_count()
        b ^= low
    return -1 if swaps & 1 else 1


class GeneratorRegistry:
    """Names and indices of the generators ``xi_1..xi_n, eta_1..eta_n``."""

    def __init__(self, n: int, symbols=()):
        if not isinstance(n, int) or n < 1:
            raise UsageError(f"need n >= 1 generator pairs, got {n!r}")
        if n > MAX_PAIRS:
            raise UsageError(f"at most {MAX_PAIRS} generator pairs supported")
        self.n = n
        self.symbols = tuple(symbols)
        self.names = tuple(f"xi{i}" for i in range(1, n + 1)) + tuple(
            f"eta{i}" for i in range(1, n + 1)
        )

    def xi_index(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise UsageError(f"xi_{i} not in registry of size {self.n}")
        return i - 1

    def eta_index(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise UsageError(f"eta_{i} not in registry of size {self.n}")
        return self.n + i - 1

    def pair(self, i: int) -> tuple[int, int]:
        return self.xi_index(i), self.eta_index(i)

    def default_order(self) -> list[int]:
        """Operator product d_xi1 d_eta1 ... d_xin d_etan, written left to right."""
        out = []
        for i in range(1, self.n + 1):
            out.extend(self.pair(i))
        return out

    def monomial_name(self, mask: int) -> str:
        names = [self.names[g] for g in range(2 * self.n) if mask >> g & 1]
        return "*".join(names) if names else "1"

    def __eq__(self, other):
        return (
            isinstance(other, GeneratorRegistry)
            and self.n == other.n
            and self.symbols == other.symbols
        )

    def __hash__(self):
        return hash((self.n, self.symbols))

    def __repr__(self):
        return f"GeneratorRegistry(n={self.n})"


class GrassmannAlgebra:
    """Factory binding a registry to a coefficient ring."""

    def __init__(self, n, ring: Ring = QQ, symbols=()):
        self.registry = n if isinstance(n, GeneratorRegistry) else GeneratorRegistry(n, symbols)
        self.ring = ring

    @property
    def n(self) -> int:
        return self.registry.n

    def element(self, terms=None) -> "GrassmannElement":
        return GrassmannElement(self, terms or {})

    def scalar(self, c) -> "GrassmannElement":
        return GrassmannElement(self, {0: c})

    def zero(self) -> "GrassmannElement":
        return GrassmannElement(self, {})

    def one(self) -> "GrassmannElement":
        return self.scalar(1)

    def gen(self, index: int) -> "GrassmannElement":
        if not 0 <= index < 2 * self.n:
            raise UsageError(f"generator index {index} out of range")
        return GrassmannElement(self, {1 << index: 1})

    def xi(self, i: int) -> "GrassmannElement":
        return self.gen(self.registry.xi_index(i))

    def eta(self, i: int) -> "GrassmannElement":
        return self.gen(self.registry.eta_index(i))

    def bilinear(self, M, left="xi", right="eta") -> "GrassmannElement":
        """The even element sum_ij left_i M_ij right_j (e.g. xi^t M eta)."""
        lidx = self.registry.xi_index if left == "xi" else self.registry.eta_index
        ridx = self.registry.xi_index if right == "xi" else self.registry.eta_index
        out = self.zero()
        for i, row in enumerate(M, start=1):
            for j, c in enumerate(row, start=1):
                if c:
                    out = out + self.gen(lidx(i)) * self.gen(ridx(j)) * c
        return out

    def compatible(self, other: "GrassmannAlgebra") -> bool:
        return self is other or (self.registry == other.registry and self.ring is other.ring)

    def __repr__(self):
        return f"GrassmannAlgebra(n={self.n}, ring={self.ring!r})"


class GrassmannElement:
    """Immutable sparse element: ``{bitmask: coefficient}`` with no zero entries."""

    __slots__ = ("algebra", "terms")

    def __init__(self, algebra: GrassmannAlgebra, terms: dict):
        ring = algebra.ring
        clean = {}
        for mask, c in terms.items():
            c = ring.coerce(c)
            if not ring.is_zero(c):
                clean[mask] = c
        self.algebra = algebra
        self.terms = clean

    @classmethod
    def _raw(cls, algebra, terms):
        obj = cls.__new__(cls)
        obj.algebra = algebra
        obj.terms = terms
        return obj

    def _check(self, other: "GrassmannElement"):
        if not self.algebra.compatible(other.algebra):
            raise UsageError("elements belong to different registries or rings")

    def _lift(self, other):
        if isinstance(other, GrassmannElement):
            self._check(other)
            return other
        try:
            return self.algebra.scalar(other)
        except TypeError:
            return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        ring = self.algebra.ring
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out[m] + c if m in out else c
            if ring.is_zero(s):
                out.pop(m, None)
            else:
                out[m] = s
        return GrassmannElement._raw(self.algebra, out)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement._raw(self.algebra, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            try:
                c = self.algebra.ring.coerce(other)
            except TypeError:
                return NotImplemented
            return GrassmannElement(self.algebra, {m: v * c for m, v in self.terms.items()})
        return ext_mul(self, other)

    def __rmul__(self, other):
        # scalars are central
        return self.__mul__(other)

    def __truediv__(self, other):
        c = self.algebra.ring.coerce(other)
        return GrassmannElement(self.algebra, {m: v / c for m, v in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, GrassmannElement):
            other = self._lift(other)
            if other is NotImplemented:
                return False
        if not self.algebra.compatible(other.algebra):
            return False
        ring = self.algebra.ring
        keys = set(self.terms) | set(other.terms)
        zero = ring.zero()
        return all(ring.eq(self.terms.get(k, zero), other.terms.get(k, zero)) for k in keys)

    __hash__ = None

    def coefficient(self, mask: int):
        return self.terms.get(mask, self.algebra.ring.zero())

    def scalar_part(self):
        return self.coefficient(0)

    def top_coefficient(self):
        return self.coefficient((1 << 2 * self.algebra.n) - 1)

    def is_even(self) -> bool:
        return all(m.bit_count() % 2 == 0 for m in self.terms)

    def is_homogeneous(self) -> bool:
        return len({m.bit_count() for m in self.terms}) <= 1

    def degree(self) -> int:
        return max((m.bit_count() for m in self.terms), default=0)

    def map_coefficients(self, fn) -> "GrassmannElement":
        return GrassmannElement(self.algebra, {m: fn(c) for m, c in self.terms.items()})

    def __repr__(self):
        if not self.terms:
            return "0"
        reg = self.algebra.registry
        parts = []
        for m in sorted(self.terms, key=lambda k: (k.bit_count(), k)):
            c = self.terms[m]
            parts.append(f"({c})" if not m else f"({c})*{reg.monomial_name(m)}")
        return " + ".join(parts)


def ext_mul(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    """Exterior product; overlapping generators annihilate the term."""
    a._check(b)
    ring = a.algebra.ring
    out: dict = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            if ma & mb:
                continue
            c = ca * cb
            if _merge_sign(ma, mb) < 0:
                c = -c
            key = ma | mb
            if key in out:
                s = out[key] + c
                if ring.is_zero(s):
                    del out[key]
                else:
                    out[key] = s
            elif not ring.is_zero(c):
                out[key] = c
    return GrassmannElement._raw(a.algebra, out)


def _resolve_generator(a: GrassmannElement, g) -> int:
    if isinstance(g, GrassmannElement):
        if len(g.terms) != 1:
            raise UsageError("generator argument must be a single generator")
        (mask,) = g.terms
        if mask.bit_count() != 1:
            raise UsageError("generator argument must be a single generator")
        g._check(a)
        return mask.bit_length() - 1
    if not isinstance(g, int) or not 0 <= g < 2 * a.algebra.n:
        raise UsageError(f"generator {g!r} not in registry")
    return g


def fermi_derive(a: GrassmannElement, g) -> GrassmannElement:
    """Left derivative: move ``g`` to the front of each monomial, then drop it."""
    g = _resolve_generator(a, g)
    bit = 1 << g
    out = {}
    for m, c in a.terms.items():
        if m & bit:
            out[m ^ bit] = -c if _parity_before(m, g) else c
    return GrassmannElement._raw(a.algebra, out)


def berezin_integrate(a: GrassmannElement, order=None):
    """Berezin integral with measure ``d_{order[0]} d_{order[1]} ...``.

    ``order`` is the written operator product; as with composition of
    derivatives, the rightmost factor acts first. Default order is
    ``d_xi1 d_eta1 ... d_xin d_etan``. Returns a ring element.
    """
    n = a.algebra.n
    if order is None:
        order = a.algebra.registry.default_order()
    idx = [_resolve_generator(a, g) for g in order]
    if sorted(idx) != list(range(2 * n)):
        raise UsageError("Berezin order must list every generator exactly once")
    full = (1 << 2 * n) - 1
    c = a.terms.get(full)
    if c is None:
        return a.algebra.ring.zero()
    # Only the top monomial survives; track its sign through the derivatives.
    mask = full
    sign = 1
    for g in reversed(idx):
        if _parity_before(mask, g):
            sign = -sign
        mask ^= 1 << g
    return c if sign > 0 else -c


def ext_exp(e: GrassmannElement) -> GrassmannElement:
    """Exponential of an even, nilpotent element.

    Even monomials commute and each squares to zero, so
    ``exp(sum_k t_k) = prod_k (1 + t_k)`` exactly.
    """
    if not e.is_even():
        raise UsageError("ext_exp requires an even element")
    ring = e.algebra.ring
    if not ring.is_zero(e.scalar_part()):
        raise UsageError("ext_exp requires zero scalar part; factor the scalar out")
    out = {0: ring.one()}
    for mt, ct in e.terms.items():
        new = dict(out)
        for m, c in out.items():
            if m & mt:
                continue
            v = c * ct
            if _merge_sign(m, mt) < 0:
                v = -v
            key = m | mt
            if key in new:
                s = new[key] + v
                if ring.is_zero(s):
                    del new[key]
                else:
                    new[key] = s
            elif not ring.is_zero(v):
                new[key] = v
        out = new
    return GrassmannElement._raw(e.algebra, out)


def ext_exp_series(e: GrassmannElement) -> GrassmannElement:
    """Truncated power series sum_k e^k / k!; slow reference for :func:`ext_exp`."""
    if not e.is_even():
        raise UsageError("ext_exp requires an even element")
    out = e.algebra.one()
    power = e.algebra.one()
    for k in range(1, e.algebra.n + 1):
        power = power * e
        if not power.terms:
            break
        out = out + power / factorial(k)
    return out


def gaussian_fermionic_integral(Sigma, ring: Ring = QQ):
    """``int prod_i d_xi_i d_eta_i exp(-xi^t Sigma eta)``, which equals det(Sigma)."""
    N = len(Sigma)
    if N < 1 or any(len(row) != N for row in Sigma):
        raise UsageError("Sigma must be a non-empty square matrix")
    alg = GrassmannAlgebra(N, ring)
    action = alg.bilinear(Sigma)
    return berezin_integrate(ext_exp(-action))
