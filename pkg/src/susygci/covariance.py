"""Interpolated covariance C(tau), principal minors and their tau-derivatives.

Rational inputs (ints / Fractions) are kept exact throughout; float inputs
use numpy and accept a 1-d array of tau values for batched evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from . import linalg
from .errors import UsageError
from .exterior import GrassmannAlgebra, berezin_integrate, ext_exp
from .rings import QQ, RealRing

DEFAULT_EPS = 1e-10


class SubsetIndex:
    """Nonempty-or-empty subset J of {1..n}, stored as a bitmask (bit i-1 <-> i)."""

    __slots__ = ("mask", "n")

    def __init__(self, J, n: int):
        if isinstance(J, SubsetIndex):
            mask = J.mask
        elif isinstance(J, (int, np.integer)):
            mask = int(J)
        else:
            mask = 0
            for i in J:
                if not 1 <= i <= n:
                    raise UsageError(f"index {i} outside 1..{n}")
                mask |= 1 << (i - 1)
        if mask < 0 or mask >> n:
            raise UsageError(f"subset mask {mask:#b} not contained in 1..{n}")
        self.mask = mask
        self.n = n

    @property
    def indices(self) -> list[int]:
        """Zero-based positions, ascending."""
        return [i for i in range(self.n) if self.mask >> i & 1]

    def split(self, n1: int) -> tuple[list[int], list[int]]:
        idx = self.indices
        return [i for i in idx if i < n1], [i for i in idx if i >= n1]

    def __len__(self):
        return self.mask.bit_count()

    def __iter__(self):
        return (i + 1 for i in self.indices)

    def __repr__(self):
        return "{" + ",".join(str(i) for i in self) + "}"


def all_subsets(n: int, include_empty=False):
    start = 0 if include_empty else 1
    return [SubsetIndex(m, n) for m in range(start, 1 << n)]


class CovarianceInterpolation:
    """C with block split n = n1 + n2; ``eval(tau)`` scales the off-diagonal blocks.

    n2 = 0 is allowed (then C(tau) = C); a missing regularization is added
    automatically only when C itself fails the positive-definiteness test.
    """

    def __init__(self, C, n1: int, eps=0):
        exact = linalg.is_exact(C)
        if exact:
            M = linalg.as_fraction_matrix(C)
        else:
            M = np.array(C, dtype=float)
        n = len(M)
        if n < 1 or any(len(row) != n for row in M):
            raise UsageError("C must be a non-empty square matrix")
        if not 1 <= n1 <= n:
            raise UsageError(f"split n1={n1} must satisfy 1 <= n1 <= n={n}")
        if exact:
            if any(M[i][j] != M[j][i] for i in range(n) for j in range(n)):
                raise UsageError("C must be symmetric")
        elif not np.allclose(M, M.T, atol=1e-12, rtol=0):
            raise UsageError("C must be symmetric within 1e-12")
        else:
            M = (M + M.T) / 2
        self.exact = exact
        self.n = n
        self.n1 = n1
        self.eps = self._regularize(M, eps)
        if self.eps:
            if exact:
                M = [[M[i][j] + (self.eps if i == j else 0) for j in range(n)] for i in range(n)]
            else:
                M = M + self.eps * np.eye(n)
        self.C = M

    def _regularize(self, M, eps):
        if eps:
            eps = Fraction(eps) if self.exact else float(eps)
            shifted = (
                [[M[i][j] + (eps if i == j else 0) for j in range(len(M))] for i in range(len(M))]
                if self.exact
                else M + eps * np.eye(len(M))
            )
            linalg.require_pd(shifted, "C + eps*I")
            return eps
        if linalg.ldl_check(M):
            return Fraction(0) if self.exact else 0.0
        eps = Fraction(1, 10**10) if self.exact else DEFAULT_EPS
        shifted = (
            [[M[i][j] + (eps if i == j else 0) for j in range(len(M))] for i in range(len(M))]
            if self.exact
            else M + eps * np.eye(len(M))
        )
        linalg.require_pd(shifted, f"C + {float(eps):g}*I")
        return eps

    @property
    def n2(self) -> int:
        return self.n - self.n1

    def block_mask(self):
        """Boolean n x n mask of the off-diagonal (cross-block) entries."""
        b = np.arange(self.n) >= self.n1
        return b[:, None] != b[None, :]

    def eval(self, tau):
        if self.exact and not isinstance(tau, np.ndarray):
            tau = Fraction(tau)
            n1 = self.n1
            return [
                [c * tau if (i < n1) != (j < n1) else c for j, c in enumerate(row)]
                for i, row in enumerate(self.C)
            ]
        C = np.asarray(self.C, dtype=float)
        cross = self.block_mask()
        t = np.asarray(tau, dtype=float)
        if t.ndim == 0:
            return np.where(cross, C * float(t), C)
        return np.where(cross[None], C[None] * t[:, None, None], C[None])

    def derivative_pattern(self):
        """d C(tau) / d tau: the cross-block entries of C, zeros elsewhere."""
        if self.exact:
            n1 = self.n1
            return [
                [c if (i < n1) != (j < n1) else Fraction(0) for j, c in enumerate(row)]
                for i, row in enumerate(self.C)
            ]
        return np.where(self.block_mask(), np.asarray(self.C, dtype=float), 0.0)

    def marginals(self):
        """(C11, C22) as plain matrices."""
        idx1, idx2 = list(range(self.n1)), list(range(self.n1, self.n))
        return linalg.submatrix(self.C, idx1), linalg.submatrix(self.C, idx2)

    def __repr__(self):
        return f"CovarianceInterpolation(n={self.n}, n1={self.n1}, exact={self.exact})"


def _check_tau(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0) or np.any(t > 1):
        raise UsageError(f"tau must lie in [0, 1], got {tau!r}")


def interpolate(ci: CovarianceInterpolation, tau):
    _check_tau(tau)
    M = ci.eval(tau)
    if np.ndim(tau) == 0:
        linalg.require_pd(M, f"C({tau})")
    return M


def principal_minor_det(M, J):
    n = len(M) if not isinstance(M, np.ndarray) else M.shape[-1]
    J = SubsetIndex(J, n)
    if not len(J):
        raise UsageError("principal_minor_det needs a nonempty J (det over the empty set is 1 by convention)")
    idx = J.indices
    if isinstance(M, np.ndarray) and M.ndim == 3:
        return np.linalg.det(M[:, idx][:, :, idx])
    return linalg.det(linalg.submatrix(M, idx))


@dataclass
class LeibnizReport:
    passed: bool
    lhs: object
    rhs: object


def leibniz_check(A, tol=1e-9) -> LeibnizReport:
    """det(I + A) against 1 + sum over nonempty J of det(A_J)."""
    n = len(A)
    if n > 12:
        raise UsageError("leibniz_check enumerates 2^n subsets; n <= 12")
    exact = linalg.is_exact(A)
    if exact:
        A = linalg.as_fraction_matrix(A)
        IA = [[a + (1 if i == j else 0) for j, a in enumerate(row)] for i, row in enumerate(A)]
        lhs = linalg.bareiss_det(IA)
        rhs = Fraction(1)
    else:
        A = np.asarray(A, dtype=float)
        lhs = float(np.linalg.det(np.eye(n) + A))
        rhs = 1.0
    for size in range(1, n + 1):
        for idx in combinations(range(n), size):
            rhs += linalg.det(linalg.submatrix(A, list(idx)))
    passed = lhs == rhs if exact else abs(lhs - rhs) <= tol * max(1.0, abs(lhs))
    return LeibnizReport(passed, lhs, rhs)


def a_J_analytic(ci: CovarianceInterpolation, J, tau):
    """-d/dtau det(C(tau)_J) via d det M = det M * tr(M^-1 dM)."""
    J = SubsetIndex(J, ci.n)
    if not len(J):
        raise UsageError("J must be nonempty")
    _check_tau(tau)
    J1, J2 = J.split(ci.n1)
    batched = isinstance(tau, np.ndarray)
    if not J1 or not J2:
        return np.zeros(np.shape(tau)) if batched else (Fraction(0) if ci.exact else 0.0)
    idx = J.indices
    D = linalg.submatrix(ci.derivative_pattern(), idx)
    if ci.exact and not batched:
        M = linalg.submatrix(ci.eval(tau), idx)
        d = linalg.bareiss_det(M)
        if d == 0:
            raise UsageError(f"C(tau)_J is singular for J={J}")
        Minv = linalg.inverse(M)
        return -d * linalg.trace(linalg.matmul(Minv, D))
    M = np.asarray(ci.eval(np.atleast_1d(np.asarray(tau, dtype=float))), dtype=float)[:, idx][:, :, idx]
    d = np.linalg.det(M)
    if np.any(np.abs(d) < 1e-300):
        raise UsageError(f"C(tau)_J is singular for J={J}")
    tr = np.einsum("kij,ji->k", np.linalg.inv(M), np.asarray(D, dtype=float))
    out = -d * tr
    return out if batched else float(out[0])


@dataclass
class FermionicRoute:
    """Intermediate objects of the effective-action computation of a_J."""

    value: object
    det_C22: object
    det_schur: object
    bosonic_expectation: object
    fermionic_expectation: object = None
    change_of_variables_ok: bool | None = None


def _schur_parts(ci, J1, J2):
    C = ci.C
    C11 = linalg.submatrix(C, J1)
    C22 = linalg.submatrix(C, J2)
    C12 = linalg.submatrix(C, J1, J2)
    C21 = linalg.submatrix(C, J2, J1)
    C22inv = linalg.inverse(C22)
    K = linalg.matmul(linalg.matmul(C12, C22inv), C21)
    return C11, C22, C22inv, C21, K


def a_J_fermionic(ci: CovarianceInterpolation, J, tau, engine=False, details=False):
    """a_J(tau) through the effective action on the J1 block.

    det C(tau)_J = det(C22) det(S), S = C11 - tau^2 K, K = C12 C22^-1 C21,
    so a_J = 2 tau det(C22) det(S) <x^t K x>, the bosonic expectation taken
    under N(0, S^-1). With ``engine=True`` (scalar tau only) the fermionic
    expectation <xi^t K eta> under exp(-xi^t S eta) is also computed with the
    Grassmann engine, the switching relation <xi^t K eta> = -<x^t K x> is
    enforced, and the change of variables xi2' = xi2 + tau C22^-1 C21 xi1 is
    verified to split the action.
    """
    J = SubsetIndex(J, ci.n)
    if not len(J):
        raise UsageError("J must be nonempty")
    _check_tau(tau)
    J1, J2 = J.split(ci.n1)
    batched = isinstance(tau, np.ndarray)
    if not J1 or not J2:
        zero = np.zeros(np.shape(tau)) if batched else (Fraction(0) if ci.exact else 0.0)
        return FermionicRoute(zero, None, None, zero) if details else zero

    C11, C22, C22inv, C21, K = _schur_parts(ci, J1, J2)
    det22 = linalg.det(C22)
    if (det22 == 0) if ci.exact else abs(det22) < 1e-300:
        raise UsageError("C22 block of the J-submatrix is singular; use a_J_analytic")

    if ci.exact and not batched:
        t = Fraction(tau)
        S = [[a - t * t * k for a, k in zip(ra, rk)] for ra, rk in zip(C11, K)]
        det_s = linalg.bareiss_det(S)
        bos = linalg.trace(linalg.matmul(K, linalg.inverse(S)))
        value = 2 * t * det22 * det_s * bos
    else:
        t = np.atleast_1d(np.asarray(tau, dtype=float))
        K = np.asarray(K, dtype=float)
        S = np.asarray(C11, dtype=float)[None] - (t**2)[:, None, None] * K[None]
        det_s = np.linalg.det(S)
        bos = np.einsum("ij,kji->k", K, np.linalg.inv(S))
        value = 2 * t * det22 * det_s * bos
        if not batched:
            value, det_s, bos = float(value[0]), float(det_s[0]), float(bos[0])
            S = S[0]

    route = FermionicRoute(value, det22, det_s, bos)
    if engine:
        if batched:
            raise UsageError("engine route evaluates one tau at a time")
        _engine_route(ci, J, J1, J2, tau, S, K, C22, C22inv, C21, route)
    return route if details else route.value


def _engine_route(ci, J, J1, J2, tau, S, K, C22, C22inv, C21, route):
    ring = QQ if ci.exact else RealRing()
    t = Fraction(tau) if ci.exact else float(tau)
    to_list = (lambda A: A) if ci.exact else (lambda A: np.asarray(A, dtype=float).tolist())
    S, K = to_list(S), to_list(K)

    # <xi1^t K eta1> under the effective action exp(-xi1^t S eta1)
    alg = GrassmannAlgebra(len(J1), ring)
    weight = ext_exp(-alg.bilinear(S))
    z = berezin_integrate(weight)
    num = berezin_integrate(weight * alg.bilinear(K))
    ferm = num / z
    route.fermionic_expectation = ferm
    if not ring.eq(ferm, -route.bosonic_expectation):
        raise ArithmeticError(
            f"switching relation failed: <xi K eta>={ferm} vs -<x K x>={-route.bosonic_expectation}"
        )
    route.value = -2 * t * route.det_C22 * route.det_schur * ferm

    # Change of variables: S(xi, eta) = S_eff(xi1, eta1) + xi2'^t C22 eta2'.
    m1, m2 = len(J1), len(J2)
    full = GrassmannAlgebra(m1 + m2, ring)
    CJ = to_list(linalg.submatrix(ci.eval(tau), J.indices))
    action = full.bilinear(CJ)
    xi1 = [full.xi(i + 1) for i in range(m1)]
    eta1 = [full.eta(i + 1) for i in range(m1)]
    shift = to_list(linalg.matmul(C22inv, C21))
    xi2p, eta2p = [], []
    for a in range(m2):
        x = full.xi(m1 + a + 1)
        e = full.eta(m1 + a + 1)
        for b in range(m1):
            x = x + xi1[b] * (t * shift[a][b])
            e = e + eta1[b] * (t * shift[a][b])
        xi2p.append(x)
        eta2p.append(e)
    C22l = to_list(C22)
    split = full.zero()
    for i in range(m1):
        for j in range(m1):
            split = split + xi1[i] * eta1[j] * S[i][j]
    for a in range(m2):
        for b in range(m2):
            split = split + xi2p[a] * eta2p[b] * C22l[a][b]
    route.change_of_variables_ok = split == action
    if not route.change_of_variables_ok:
        raise ArithmeticError("change of variables does not decouple the action")


def wick_expectations(ci: CovarianceInterpolation, tau, subsets=None) -> dict[int, object]:
    """E_f[prod_{j in J} (-2 xi_j eta_j)] for many J, keyed by bitmask.

    The expectation is normalized: det(C(tau)) * int dmu_f exp(-xi^t C(tau)^-1 eta) (...).
    """
    _check_tau(tau)
    Ct = interpolate(ci, tau)
    ring = QQ if ci.exact else RealRing()
    A = linalg.inverse(Ct)
    if not ci.exact:
        A = np.asarray(A).tolist()
    alg = GrassmannAlgebra(ci.n, ring)
    weight = ext_exp(-alg.bilinear(A))
    norm = linalg.det(Ct)
    subsets = all_subsets(ci.n, include_empty=True) if subsets is None else [SubsetIndex(J, ci.n) for J in subsets]
    out = {}
    for J in subsets:
        obs = alg.one()
        for j in J:
            obs = obs * (alg.xi(j) * alg.eta(j) * -2)
        out[J.mask] = norm * berezin_integrate(weight * obs)
    return out


def wick_subset_expectation(ci: CovarianceInterpolation, J, tau):
    J = SubsetIndex(J, ci.n)
    return wick_expectations(ci, tau, [J])[J.mask]


def random_correlation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Normalized Gram matrix of a standard normal n x n matrix."""
    G = rng.standard_normal((n, n))
    S = G @ G.T
    d = np.sqrt(np.diag(S))
    C = S / np.outer(d, d)
    C = (C + C.T) / 2
    np.fill_diagonal(C, 1.0)
    return C


def random_rational_pd(n: int, rng: np.random.Generator, bound: int = 3) -> list[list[Fraction]]:
    """Exact positive-definite matrix G G^t + I with small integer G, scaled by 1/den."""
    G = rng.integers(-bound, bound + 1, size=(n, n))
    den = int(rng.integers(1, 4))
    M = G @ G.T + np.eye(n, dtype=int)
    return [[Fraction(int(M[i, j]), den) for j in range(n)] for i in range(n)]
