import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from susygci.errors import DegenerateBoundaryError, UsageError
from susygci.exterior import GrassmannAlgebra, ext_mul
from susygci.rings import Poly, PolyRing, RR
from susygci.supercalc import (
    DeltaMarker,
    TestFunction,
    apply_Q,
    heaviside_expand,
    indicator_expand,
    localization_check,
    reduction_check,
    smooth_delta,
    smooth_theta,
    soul_taylor,
    super_radius_sq,
)

from oracles import random_fraction_matrix


def test_soul_taylor_examples():
    A = GrassmannAlgebra(1, RR)
    xe = A.xi(1) * A.eta(1)
    got = soul_taylor(TestFunction.polynomial(0, 0, 1), 2.0, 1, 1, A)
    assert got == A.scalar(4.0) + xe * 4.0
    assert soul_taylor(TestFunction.polynomial(0, 0, 1), 2.0, 0, 1, A) == A.scalar(4.0)
    exp_plus = TestFunction("exponential", (-1.0,))
    assert soul_taylor(exp_plus, 0.0, 2, 1, A) == A.one() + xe * 2.0


def test_soul_part_is_nilpotent():
    A = GrassmannAlgebra(2, RR)
    e = soul_taylor(TestFunction.exponential(0.7), 0.3, 2, 2, A)
    soul = e - A.scalar(e.scalar_part())
    assert ext_mul(soul, soul) == A.zero()


@pytest.mark.parametrize("F", [TestFunction.exponential(0.8), TestFunction.polynomial(1, -2, 0.5, 0.1), TestFunction.bump(2.0)])
@pytest.mark.parametrize("x", [0.1, 0.6, 1.3])
def test_soul_taylor_matches_finite_difference(F, x):
    h = 1e-5
    fd = (F.value(x + h) - F.value(x - h)) / (2 * h)
    A = GrassmannAlgebra(1, RR)
    got = soul_taylor(F, x, 1, 1, A).coefficient(0b11)
    assert abs(got - fd) < 1e-6


def test_heaviside_examples():
    sp = heaviside_expand(0.5, -2, 1)
    assert sp.theta == 1 and sp.delta_coeff == -2 and sp.delta == DeltaMarker(0.5)
    sp = heaviside_expand(-0.5, 0, 1)
    assert sp.theta == 0 and sp.delta_coeff == 0 and sp.delta is None
    sp = heaviside_expand("1-B1^2", -2, 1)
    assert sp.delta == DeltaMarker("1-B1^2")
    with pytest.raises(DegenerateBoundaryError):
        heaviside_expand(0, -2, 1)


def test_indicator_expand_small():
    terms = indicator_expand(1)
    A = terms[0].fermion_monomial.algebra
    assert len(terms) == 2
    assert terms[0].fermion_monomial == A.one() and terms[0].measure_spec == "1{B1^2<=1}"
    assert terms[1].fermion_monomial == A.xi(1) * A.eta(1) * -2
    assert terms[1].measure_spec == "delta(1-B1^2)"
    terms = indicator_expand(2)
    A = terms[0].fermion_monomial.algebra
    x1, x2 = A.xi(1) * A.eta(1), A.xi(2) * A.eta(2)
    assert [t.fermion_monomial for t in terms] == [A.one(), x1 * -2, x2 * -2, x1 * x2 * 4]
    keys = [next(iter(t.fermion_monomial.terms)) for t in terms]
    assert len(set(keys)) == len(keys)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_indicator_reconstruction_converges(n):
    """Replace each xi_j eta_j by a small commuting s: the J-sum must match
    prod_i Theta_eps(1 - B_i^2 - 2s) to first order, and tend to the sharp
    indicator off the boundary as eps -> 0."""
    rng = np.random.default_rng(n)
    terms = indicator_expand(n)
    B2 = rng.uniform(0.2, 1.8, size=(400, n))
    B2 = B2[np.all(np.abs(B2 - 1) > 0.15, axis=1)]
    s = 1e-6
    sharp = np.prod(B2 <= 1, axis=1)
    gaps = []
    for eps in (1e-1, 1e-2, 1e-3):
        approx = sum(t.body_weight(B2, eps, smooth_indicators=True) * (-2 * s) ** len(t.deltas) for t in terms)
        smoothed = np.prod(smooth_theta(1 - B2 - 2 * s, eps), axis=1)
        assert np.max(np.abs(approx - smoothed)) < 1e-9
        gaps.append(np.max(np.abs(approx - sharp)))
    assert gaps[0] >= gaps[1] >= gaps[2]
    assert gaps[2] < 1e-12


def test_apply_Q_examples():
    A = GrassmannAlgebra(1, PolyRing())
    assert apply_Q(A.scalar(Poly.symbol("Y1"))) == A.xi(1)
    assert apply_Q(A.scalar(Poly.symbol("Z1"))) == A.eta(1)
    assert apply_Q(A.xi(1)) == A.scalar(-Poly.symbol("Z1"))
    assert apply_Q(A.eta(1)) == A.scalar(Poly.symbol("Y1"))
    assert apply_Q(A.scalar(Fraction(3))) == A.zero()
    assert apply_Q(super_radius_sq(A, 1)) == A.zero()


def test_apply_Q_needs_polynomial_ring():
    with pytest.raises(UsageError):
        apply_Q(GrassmannAlgebra(1).xi(1))


def _ward_sides(S):
    n = len(S)
    A = GrassmannAlgebra(n, PolyRing())
    Y = [Poly.symbol(f"Y{i}") for i in range(1, n + 1)]
    seed = A.zero()
    rhs = A.bilinear(S)
    for i in range(n):
        for j in range(n):
            seed = seed + A.eta(j + 1) * (Y[i] * S[i][j])
            rhs = rhs + A.scalar(Y[i] * Y[j] * S[i][j])
    return apply_Q(seed), rhs


def test_ward_seed_2x2():
    lhs, rhs = _ward_sides([[Fraction(2), Fraction(1, 3)], [Fraction(1, 3), Fraction(-1)]])
    assert lhs == rhs


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_ward_seed_random(n, seed):
    M = random_fraction_matrix(np.random.default_rng(seed), n)
    S = [[(M[i][j] + M[j][i]) / 2 for j in range(n)] for i in range(n)]
    lhs, rhs = _ward_sides(S)
    assert lhs == rhs


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_q_closed_every_sector(n):
    A = GrassmannAlgebra(n, PolyRing())
    for i in range(1, n + 1):
        assert apply_Q(super_radius_sq(A, i)) == A.zero()


def test_Q_is_linear_and_a_derivation():
    A = GrassmannAlgebra(2, PolyRing())
    Y1, Z2 = Poly.symbol("Y1"), Poly.symbol("Z2")
    a = A.xi(1) * Y1 + A.scalar(Z2 * Z2)
    b = A.eta(2) * Z2 + A.xi(2) * A.eta(1)
    assert apply_Q(a + b) == apply_Q(a) + apply_Q(b)
    # a is odd+even mixed; check the graded rule on homogeneous pieces
    odd, even = A.xi(1) * Y1, A.scalar(Z2 * Z2)
    assert apply_Q(odd * b) == apply_Q(odd) * b - odd * apply_Q(b)
    assert apply_Q(even * b) == apply_Q(even) * b + even * apply_Q(b)


@pytest.mark.parametrize("lam,expected", [(1.0, 1.0), (2.0, 1.0)])
def test_localization_examples(lam, expected):
    rep = localization_check(TestFunction.exponential(lam))
    assert rep.passed and abs(rep.value - expected) < 1e-10


def test_localization_bump_and_rejects_constant():
    assert localization_check(TestFunction.bump(1.5)).passed
    with pytest.raises(UsageError):
        localization_check(TestFunction.polynomial(1.0))


@pytest.mark.parametrize("lam,c,expected", [(0.5, 1.0, 2**-0.5), (0.0, 1.0, 1.0), (1.0, 2.0, 5**-0.5)])
def test_reduction_examples(lam, c, expected):
    rep = reduction_check(TestFunction.exponential(lam), c)
    assert rep.passed
    assert rep.lhs == pytest.approx(expected, abs=1e-10)
    assert rep.rhs == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_reduction_higher_copies(k):
    rep = reduction_check(TestFunction.exponential(0.7), 1.3, k=k)
    assert rep.passed
    assert rep.analytic == pytest.approx((1 + 2 * 0.7 * 1.3) ** (-k / 2))


def test_smoothing_normalized():
    x = np.linspace(-1, 1, 200001)
    assert np.trapezoid(smooth_delta(x, 0.01), x) == pytest.approx(1.0, abs=1e-9)
    assert smooth_theta(0.5, 1e-3) == pytest.approx(1.0)
