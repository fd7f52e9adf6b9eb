"""Body/soul calculus: nilpotent Taylor expansion, the Heaviside boundary
rule, the super-hypercube indicator expansion, the supersymmetry derivation Q,
and desk-scale checks of localization and dimensional reduction (n = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import DegenerateBoundaryError, NumericError, UsageError
from .exterior import GrassmannAlgebra, GrassmannElement, berezin_integrate, ext_exp
from .rings import Poly, PolyRing, RR


@dataclass(frozen=True)
class TestFunction:
    """A scalar function of s >= 0 with a closed-form first derivative.

    Families: ``exponential`` (e^{-lam s}), ``polynomial`` (sum c_k s^k) and
    ``bump`` (exp(1 - 1/(1 - (s/w)^2)) on [0, w), zero beyond).
    """

    __test__ = False  # not a pytest class

    family: str
    params: tuple = ()

    @classmethod
    def exponential(cls, lam: float) -> "TestFunction":
        if lam < 0:
            raise UsageError("exponential family needs lam >= 0")
        return cls("exponential", (lam,))

    @classmethod
    def polynomial(cls, *coeffs) -> "TestFunction":
        return cls("polynomial", tuple(coeffs))

    @classmethod
    def bump(cls, width: float = 1.0) -> "TestFunction":
        return cls("bump", (width,))

    def __call__(self, s):
        return self.value(s)

    def value(self, s):
        if self.family == "exponential":
            return np.exp(-self.params[0] * np.asarray(s, dtype=float))
        if self.family == "polynomial":
            return sum(c * np.asarray(s, dtype=float) ** k for k, c in enumerate(self.params))
        if self.family == "bump":
            (w,) = self.params
            u = np.asarray(s, dtype=float) / w
            inside = np.abs(u) < 1
            safe = np.where(inside, u, 0.0)
            return np.where(inside, np.exp(1 - 1 / (1 - safe**2)), 0.0)
        raise UsageError(f"unknown family {self.family!r}")

    def deriv(self, s):
        if self.family == "exponential":
            lam = self.params[0]
            return -lam * np.exp(-lam * np.asarray(s, dtype=float))
        if self.family == "polynomial":
            s = np.asarray(s, dtype=float)
            return sum(k * c * s ** (k - 1) for k, c in enumerate(self.params) if k)
        if self.family == "bump":
            (w,) = self.params
            u = np.asarray(s, dtype=float) / w
            inside = np.abs(u) < 1
            safe = np.where(inside, u, 0.0)
            val = np.exp(1 - 1 / (1 - safe**2)) * (-2 * safe / (1 - safe**2) ** 2) / w
            return np.where(inside, val, 0.0)
        raise UsageError(f"unknown family {self.family!r}")

    def decays(self) -> bool:
        if self.family == "exponential":
            return self.params[0] > 0
        if self.family == "bump":
            return True
        return False


class SymbolicFunction:
    """Stand-in whose value and derivative are the polynomial symbols F0, F1."""

    def value(self, s):
        return Poly.symbol("F0")

    def deriv(self, s):
        return Poly.symbol("F1")


def soul_taylor(F, x, coeff, pair: int, algebra: GrassmannAlgebra) -> GrassmannElement:
    """F(x + coeff * xi_pair eta_pair) = F(x) + F'(x) coeff xi eta; no further terms."""
    body = algebra.scalar(_scalar(F.value(x), algebra))
    if not coeff:
        return body
    soul = algebra.xi(pair) * algebra.eta(pair) * (_scalar(F.deriv(x), algebra) * coeff)
    return body + soul


def _scalar(v, algebra):
    if isinstance(v, np.ndarray):
        v = float(v)
    if isinstance(algebra.ring, PolyRing) and isinstance(v, float):
        v = Fraction(v)
    return v


# -- Heaviside / delta ---------------------------------------------------------


@dataclass(frozen=True)
class DeltaMarker:
    """Formal delta(argument); never evaluated inside this module."""

    argument: object

    def __repr__(self):
        return f"delta({self.argument})"


@dataclass(frozen=True)
class Indicator:
    """Formal Theta(argument), e.g. the indicator 1{B_i^2 <= 1} for '1-B_i^2'."""

    argument: object

    def __repr__(self):
        return f"Theta({self.argument})"


@dataclass(frozen=True)
class HeavisideSplit:
    """Theta(a + b xi eta) = theta + b xi eta delta(a)."""

    theta: object
    delta_coeff: object
    delta: DeltaMarker | None
    pair: int


def heaviside_expand(a, b, pair: int) -> HeavisideSplit:
    """Split Theta(a + b xi_pair eta_pair) into body and boundary parts.

    A numeric ``a`` gives a numeric body Theta(a); ``a == 0`` is refused since
    the result would depend on the convention for Theta(0). A string ``a``
    (such as ``"1-B1^2"``) keeps both the body and the delta formal.
    """
    if isinstance(a, str):
        return HeavisideSplit(Indicator(a), b, DeltaMarker(a) if b else None, pair)
    if a == 0:
        raise DegenerateBoundaryError("Heaviside expansion at a == 0 is convention dependent")
    theta = 1 if a > 0 else 0
    if not b:
        return HeavisideSplit(theta, 0, None, pair)
    return HeavisideSplit(theta, b, DeltaMarker(a), pair)


def smooth_theta(x, eps: float):
    return ndtr(np.asarray(x, dtype=float) / eps)


def smooth_delta(x, eps: float):
    x = np.asarray(x, dtype=float) / eps
    return np.exp(-0.5 * x * x) / (math.sqrt(2 * math.pi) * eps)


@dataclass
class BoundaryTerm:
    """One J-term of the expansion of prod_i 1{R_i^2 <= 1}."""

    J: int
    fermion_monomial: GrassmannElement
    deltas: tuple = field(default=())
    indicators: tuple = field(default=())

    @property
    def measure_spec(self) -> str:
        parts = [f"delta(1-B{j}^2)" for j in self.deltas]
        parts += [f"1{{B{i}^2<=1}}" for i in self.indicators]
        return " * ".join(parts) if parts else "1"

    def body_weight(self, B2, eps: float | None = None, smooth_indicators=False):
        """Evaluate the bosonic factor at body radii ``B2`` (shape (..., n)).

        Deltas are replaced by the derivative of a Gaussian-smoothed step of
        bandwidth ``eps``; indicators stay sharp unless ``smooth_indicators``.
        """
        B2 = np.asarray(B2, dtype=float)
        w = np.ones(B2.shape[:-1])
        for j in self.deltas:
            if eps is None:
                raise UsageError("delta markers need a smoothing bandwidth")
            w = w * smooth_delta(1 - B2[..., j - 1], eps)
        for i in self.indicators:
            arg = 1 - B2[..., i - 1]
            w = w * (smooth_theta(arg, eps) if smooth_indicators else (arg >= 0))
        return w


def indicator_expand(n: int, algebra: GrassmannAlgebra | None = None) -> list[BoundaryTerm]:
    """All 2^n terms prod_{j in J} (-2 xi_j eta_j delta(1-B_j^2)) prod_{i not in J} 1{B_i^2<=1}."""
    if n < 1:
        raise UsageError("n >= 1 required")
    algebra = algebra or GrassmannAlgebra(n)
    splits = [heaviside_expand(f"1-B{i}^2", -2, i) for i in range(1, n + 1)]
    terms = []
    for J in range(1 << n):
        mono = algebra.one()
        deltas, inds = [], []
        for i, sp in enumerate(splits, start=1):
            if J >> (i - 1) & 1:
                mono = mono * (algebra.xi(i) * algebra.eta(i) * sp.delta_coeff)
                deltas.append(i)
            else:
                inds.append(i)
        terms.append(BoundaryTerm(J, mono, tuple(deltas), tuple(inds)))
    return terms


# -- the derivation Q -----------------------------------------------------------


def apply_Q(e: GrassmannElement, sectors=None, bosons=("Y", "Z")) -> GrassmannElement:
    """Q = sum_i xi_i d/dY_i + eta_i d/dZ_i + Y_i d/deta_i - Z_i d/dxi_i.

    Coefficients must be polynomials (:class:`Poly`) or rationals in the
    commuting symbols ``Y1, Z1, ...``; ``bosons`` renames the pair (e.g. to
    ("X", "Y")). ``sectors`` restricts the sum to some i (default all).
    """
    alg = e.algebra
    if not isinstance(alg.ring, PolyRing):
        raise UsageError("apply_Q needs polynomial coefficients (PolyRing)")
    n = alg.n
    sectors = range(1, n + 1) if sectors is None else sectors
    ybase, zbase = bosons
    out: dict = {}

    def add(mask, c):
        if not c:
            return
        s = out.get(mask, 0) + c
        if s:
            out[mask] = s
        else:
            out.pop(mask, None)

    for mask, c in e.terms.items():
        if not isinstance(c, (Poly, Rational)):
            raise UsageError(f"unsupported coefficient type {type(c).__name__}")
        c = c if isinstance(c, Poly) else Poly.const(c)
        for i in sectors:
            xi, eta = alg.registry.pair(i)
            Y, Z = Poly.symbol(f"{ybase}{i}"), Poly.symbol(f"{zbase}{i}")
            # bosonic part: left multiplication by xi_i / eta_i
            for g, sym in ((xi, f"{ybase}{i}"), (eta, f"{zbase}{i}")):
                dc = c.diff(sym)
                if dc and not mask >> g & 1:
                    sign = -1 if (mask & ((1 << g) - 1)).bit_count() & 1 else 1
                    add(mask | 1 << g, dc * sign)
            # fermionic part: left derivatives
            for g, factor in ((eta, Y), (xi, -Z)):
                if mask >> g & 1:
                    sign = -1 if (mask & ((1 << g) - 1)).bit_count() & 1 else 1
                    add(mask ^ 1 << g, c * factor * sign)
    return GrassmannElement(alg, out)


def super_radius_sq(algebra: GrassmannAlgebra, i: int, bosons=("Y", "Z")) -> GrassmannElement:
    """Y_i^2 + Z_i^2 + 2 xi_i eta_i as a polynomial-coefficient element."""
    y, z = (Poly.symbol(f"{b}{i}") for b in bosons)
    return algebra.scalar(y * y + z * z) + algebra.xi(i) * algebra.eta(i) * 2


# -- localization and dimensional reduction (n = 1) -----------------------------


def _fermionic_reduction(c, soul_coeff=2, with_weight=True):
    """Berezin integral over (xi, eta) of exp(-xi eta / c) F(s + 2 xi eta).

    Returns (alpha, beta) with result alpha F(s) + beta F'(s), computed
    symbolically with F(s), F'(s) as polynomial symbols F0, F1.
    """
    alg = GrassmannAlgebra(1, PolyRing(("F0", "F1")))
    expansion = soul_taylor(SymbolicFunction(), None, soul_coeff, 1, alg)
    if with_weight:
        cf = Fraction(c)
        weight = ext_exp(alg.xi(1) * alg.eta(1) * (-1 / cf))
        expansion = weight * expansion
    res = berezin_integrate(expansion)
    res = res if isinstance(res, Poly) else Poly.const(res)
    alpha = res.terms.get((("F0", 1),), 0)
    beta = res.terms.get((("F1", 1),), 0)
    return float(alpha), float(beta)


def _quad(fn, a, b, what, epsabs=1e-13, epsrel=1e-12):
    val, err = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=epsrel, limit=500)
    if not np.isfinite(val) or err > 1e-9:
        raise NumericError(f"{what}: quadrature did not converge", {"value": val, "error": err})
    return val, err


@dataclass
class LocalizationReport:
    passed: bool
    value: float
    expected: float
    residual: float
    quad_error: float


def localization_check(F: TestFunction, c: float | None = None, tol: float = 1e-8) -> LocalizationReport:
    """Integrate f = G(Y^2 + Z^2 + 2 xi eta) over R^{2|2} and compare to G(0) = F(0).

    With ``c`` given, G(s) = exp(-s / 2c) F(s), i.e. the integrand carries the
    Q-closed Gaussian weight of variance c; otherwise G = F and F must decay.
    Bosonic variables carry the (2 pi)^{-1/2} normalization.
    """
    if c is None:
        if not F.decays():
            raise UsageError(f"{F.family} test function does not decay; localization needs decay")
        G, dG = F.value, F.deriv
    else:
        if c <= 0:
            raise UsageError("variance c must be positive")
        G = lambda s: np.exp(-s / (2 * c)) * F.value(s)
        dG = lambda s: np.exp(-s / (2 * c)) * (F.deriv(s) - F.value(s) / (2 * c))
    alpha, beta = _fermionic_reduction(1, with_weight=False)
    # (2 pi)^{-1} * 2 pi r dr on the (Y, Z) plane
    integrand = lambda r: r * (alpha * G(r * r) + beta * dG(r * r))
    upper = np.inf if F.family != "bump" else math.sqrt(F.params[0])
    val, err = _quad(integrand, 0, upper, "localization")
    expected = float(F.value(0.0))
    residual = abs(val - expected)
    return LocalizationReport(residual <= tol, val, expected, residual, err)


@dataclass
class ReductionReport:
    passed: bool
    lhs: float
    rhs: float
    analytic: float
    residual: float


def reduction_check(F: TestFunction, c: float, tol: float = 1e-8, k: int = 1) -> ReductionReport:
    """Dimensional reduction R^{k+2|2} -> R^{k|0} for one variable of variance c.

    lhs = E[F(|X|^2)], X ~ N(0, c I_k); rhs = c^{-k/2} times the superintegral
    of exp(-(|X|^2+Y^2+Z^2)/2c - xi eta / c) F(R^2), whose Berezin part is
    done symbolically and whose bosonic part is a (k+2)-dimensional radial
    quadrature. Both are compared with (1 + 2 lam c)^{-k/2}.
    """
    if F.family != "exponential":
        raise UsageError("reduction_check supports the exponential family only")
    if c <= 0:
        raise UsageError("variance c must be positive")
    lam = F.params[0]
    analytic = (1 + 2 * lam * c) ** (-k / 2)

    def sphere_area(d):
        return 2 * math.pi ** (d / 2) / math.gamma(d / 2)

    def radial(d, g):
        norm = (2 * math.pi) ** (-d / 2) * sphere_area(d)
        return lambda r: norm * r ** (d - 1) * math.exp(-r * r / (2 * c)) * g(r * r)

    lhs, _ = _quad(radial(k, lambda s: float(F.value(s))), 0, np.inf, "reduction lhs")
    lhs /= c ** (k / 2)
    alpha, beta = _fermionic_reduction(c)
    g = lambda s: alpha * float(F.value(s)) + beta * float(F.deriv(s))
    rhs, _ = _quad(radial(k + 2, g), 0, np.inf, "reduction rhs")
    rhs /= c ** (k / 2)
    residual = max(abs(lhs - analytic), abs(rhs - analytic))
    return ReductionReport(residual <= tol, lhs, rhs, analytic, residual)
