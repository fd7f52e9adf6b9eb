from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from susygci.errors import UsageError
from susygci.exterior import (
    GeneratorRegistry,
    GrassmannAlgebra,
    berezin_integrate,
    ext_exp,
    ext_exp_series,
    ext_mul,
    fermi_derive,
    gaussian_fermionic_integral,
)
from susygci.linalg import bareiss_det
from susygci.rings import RR, PolyRing, Poly

from oracles import cofactor_det, permutation_det, random_fraction_matrix

A1 = GrassmannAlgebra(1)
A2 = GrassmannAlgebra(2)


def test_registry_naming():
    reg = GeneratorRegistry(3)
    assert reg.xi_index(1) == 0 and reg.eta_index(1) == 3
    assert reg.pair(2) == (1, 4)
    assert reg.default_order() == [0, 3, 1, 4, 2, 5]
    with pytest.raises(UsageError):
        GeneratorRegistry(0)


def test_mul_examples():
    xi, eta = A1.xi(1), A1.eta(1)
    assert ext_mul(xi, eta).terms == {0b11: 1}
    assert ext_mul(eta, xi) == -ext_mul(xi, eta)
    assert ext_mul(xi, xi) == A1.zero()
    a = A2.one() + A2.xi(1) * A2.eta(1)
    b = A2.one() + A2.xi(2) * A2.eta(2)
    x1e1, x2e2 = A2.xi(1) * A2.eta(1), A2.xi(2) * A2.eta(2)
    assert ext_mul(a, b) == A2.one() + x1e1 + x2e2 + x1e1 * x2e2


def test_registry_mismatch():
    with pytest.raises(UsageError):
        ext_mul(A1.xi(1), A2.xi(1))


def test_derivative_examples():
    xi, eta = A1.xi(1), A1.eta(1)
    assert fermi_derive(xi * eta, xi) == eta
    assert fermi_derive(xi * eta, eta) == -xi
    assert fermi_derive(A2.eta(2), A2.xi(1)) == A2.zero()


def test_berezin_examples():
    xi, eta = A1.xi(1), A1.eta(1)
    assert berezin_integrate(xi * eta, [xi, eta]) == -1
    assert berezin_integrate(xi * eta, [eta, xi]) == 1
    assert berezin_integrate(A1.one()) == 0
    assert berezin_integrate(ext_exp(-(xi * eta)), [xi, eta]) == 1


def test_berezin_bad_order():
    with pytest.raises(UsageError):
        berezin_integrate(A2.one(), [0, 1, 2])
    with pytest.raises(UsageError):
        berezin_integrate(A2.one(), [0, 0, 1, 2])


def test_exp_examples():
    assert ext_exp(A1.zero()) == A1.one()
    xe = A1.xi(1) * A1.eta(1)
    assert ext_exp(xe) == A1.one() + xe
    n = 3
    A = GrassmannAlgebra(n)
    pairs = [A.xi(l) * A.eta(l) for l in range(1, n + 1)]
    expected = A.zero()
    for mask in range(1 << n):
        term = A.one()
        for l in range(n):
            if mask >> l & 1:
                term = term * -pairs[l]
        expected = expected + term
    assert ext_exp(-sum(pairs[1:], pairs[0])) == expected


def test_exp_rejects_odd_and_scalar():
    with pytest.raises(UsageError):
        ext_exp(A1.xi(1))
    with pytest.raises(UsageError):
        ext_exp(A1.one())


def test_gaussian_integral_examples():
    assert gaussian_fermionic_integral([[1, 0], [0, 1]]) == 1
    assert gaussian_fermionic_integral([[2, 1], [1, 2]]) == 3
    rng = np.random.default_rng(4)
    M = random_fraction_matrix(rng, 4)
    assert gaussian_fermionic_integral(M) == cofactor_det(M)
    with pytest.raises(UsageError):
        gaussian_fermionic_integral([[1, 2]])


def test_gaussian_integral_real_ring():
    M = [[2.0, 0.5, 0.1], [0.3, 1.5, -0.2], [0.0, 0.4, 1.0]]
    assert gaussian_fermionic_integral(M, ring=RR) == pytest.approx(np.linalg.det(M), abs=1e-12)


def test_gaussian_integral_polynomial_entries():
    tau = Poly.symbol("tau")
    ring = PolyRing(("tau",))
    M = [[Poly.const(1), tau * Fraction(1, 2)], [tau * Fraction(1, 2), Poly.const(1)]]
    got = gaussian_fermionic_integral(M, ring=ring)
    assert got == Poly.const(1) - tau * tau * Fraction(1, 4)


# -- randomized laws ----------------------------------------------------------------

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def elements(draw, n):
    A = GrassmannAlgebra(n)
    masks = draw(st.lists(st.integers(0, (1 << 2 * n) - 1), max_size=5))
    coeffs = draw(st.lists(fractions, min_size=len(masks), max_size=len(masks)))
    return A.element(dict(zip(masks, coeffs)))


@given(st.integers(1, 6), st.data())
def test_anticommutativity(n, data):
    A = GrassmannAlgebra(n)
    g = data.draw(st.integers(0, 2 * n - 1))
    h = data.draw(st.integers(0, 2 * n - 1))
    if g == h:
        assert ext_mul(A.gen(g), A.gen(g)) == A.zero()
    else:
        assert ext_mul(A.gen(g), A.gen(h)) == -ext_mul(A.gen(h), A.gen(g))


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(elements(n), elements(n), elements(n))), fractions)
def test_associativity_and_bilinearity(abc, s):
    a, b, c = abc
    assert ext_mul(ext_mul(a, b), c) == ext_mul(a, ext_mul(b, c))
    assert ext_mul(a + b * s, c) == ext_mul(a, c) + ext_mul(b, c) * s
    assert ext_mul(c, a + b * s) == ext_mul(c, a) + ext_mul(c, b) * s


@st.composite
def homogeneous(draw, n):
    A = GrassmannAlgebra(n)
    d = draw(st.integers(0, 2 * n))
    masks = [m for m in range(1 << 2 * n) if m.bit_count() == d]
    chosen = draw(st.lists(st.sampled_from(masks), max_size=4))
    coeffs = draw(st.lists(fractions, min_size=len(chosen), max_size=len(chosen)))
    return A.element(dict(zip(chosen, coeffs))), d


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(homogeneous(n), elements(n), st.integers(0, 2 * n - 1))))
def test_leibniz_sign_rule(args):
    (a, deg), b, g = args
    lhs = fermi_derive(ext_mul(a, b), g)
    rhs = ext_mul(fermi_derive(a, g), b) + ext_mul(a, fermi_derive(b, g)) * (-1) ** deg
    assert lhs == rhs


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_det_identity(N, seed):
    M = random_fraction_matrix(np.random.default_rng(seed), N)
    expected = permutation_det(M) if N <= 5 else bareiss_det(M)
    assert gaussian_fermionic_integral(M) == expected


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(elements(n), elements(n))), fractions)
def test_berezin_is_linear_top_extractor(ab, s):
    a, b = ab
    assert berezin_integrate(a + b * s) == berezin_integrate(a) + berezin_integrate(b) * s
    n = a.algebra.n
    top = (1 << 2 * n) - 1
    missing = a.algebra.element({m: c for m, c in a.terms.items() if m != top})
    assert berezin_integrate(missing) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(elements))
def test_exp_matches_series(e):
    even = e.algebra.element({m: c for m, c in e.terms.items() if m and m.bit_count() % 2 == 0})
    assert ext_exp(even) == ext_exp_series(even)
