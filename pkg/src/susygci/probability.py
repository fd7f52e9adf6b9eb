"""Gaussian cube probabilities, their tau-derivatives, the correlation
inequality checks (Gaussian and half-integer Gamma), delta-slice estimates of
the body density and the Ward-identity decomposition of d/dtau P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln, ndtr, ndtri
from scipy.stats import ncx2, qmc

from .covariance import CovarianceInterpolation, SubsetIndex, a_J_analytic, all_subsets, interpolate
from .errors import UsageError
from .seeding import derive_seed

QUAD_MAX_N = 3
QMC_MAX_N = 12
QMC_RANDOMIZATIONS = 32
SLICE_METHODS = ("bandwidth", "counting", "sphere")


@dataclass
class ProbabilityEstimate:
    """A probability with its uncertainty.

    For ``quadrature`` the error is a convergence bound; for ``quasi-MC`` and
    ``MC`` it is one standard error (checks use 3 of them).
    """

    value: float
    abs_error: float
    method: str
    seed: int | None = None
    n_samples: int | None = None
    flagged: bool = False
    replicates: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def stochastic(self) -> bool:
        return self.method != "quadrature"


@dataclass
class DerivativeEstimate:
    value: float
    abs_error: float
    method: str
    seed: int | None = None
    flagged: bool = False


@dataclass
class GammaConfig:
    k: int
    ci: CovarianceInterpolation

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise UsageError("Gamma shape doubling k must be an integer >= 1")


# -- rectangle probabilities ----------------------------------------------------


def _genz_integrand(L: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Separation-of-variables integrand for P[|X_i| <= 1], X = L W.

    ``U`` has shape (points, n - 1); returns one value per point.
    """
    n = L.shape[0]
    npts = U.shape[0]
    W = np.zeros((npts, n))
    d = ndtr(-1.0 / L[0, 0])
    e = ndtr(1.0 / L[0, 0])
    f = np.full(npts, e - d)
    for i in range(1, n):
        u = U[:, i - 1]
        W[:, i - 1] = ndtri(np.clip(d + u * (e - d), 1e-300, 1 - 1e-16))
        s = W[:, :i] @ L[i, :i]
        d = ndtr((-1.0 - s) / L[i, i])
        e = ndtr((1.0 - s) / L[i, i])
        f = f * (e - d)
    return f


def _cholesky(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        from .errors import NotPositiveDefiniteError

        raise NotPositiveDefiniteError("covariance is not positive definite") from exc


def _tensor_rule(L, m):
    n = L.shape[0]
    if n == 1:
        return float(ndtr(1.0 / L[0, 0]) - ndtr(-1.0 / L[0, 0]))
    x, w = np.polynomial.legendre.leggauss(m)
    x = (x + 1) / 2
    w = w / 2
    dim = n - 1
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = np.ones(U.shape[0])
    for wg in np.meshgrid(*([w] * dim), indexing="ij"):
        W = W * wg.ravel()
    return float(W @ _genz_integrand(L, U))


def _quadrature(Sigma, tol=1e-8, max_nodes=None) -> ProbabilityEstimate:
    L = _cholesky(Sigma)
    n = L.shape[0]
    if n == 1:
        return ProbabilityEstimate(_tensor_rule(L, 0), 1e-16, "quadrature")
    max_nodes = max_nodes or (4096 if n == 2 else 1024)
    m = 16
    prev = _tensor_rule(L, m)
    while True:
        m2 = 2 * m
        cur = _tensor_rule(L, m2)
        err = abs(cur - prev)
        if err <= tol or m2 >= max_nodes:
            # the finer rule is far more accurate than the difference suggests
            return ProbabilityEstimate(cur, max(err, 1e-15), "quadrature", n_samples=m2 ** (n - 1), flagged=err > tol)
        prev, m = cur, m2


def _qmc(Sigma, seed: int, m_log2: int = 12, reps: int = QMC_RANDOMIZATIONS) -> ProbabilityEstimate:
    L = _cholesky(Sigma)
    n = L.shape[0]
    if n == 1:
        return ProbabilityEstimate(_tensor_rule(L, 0), 1e-16, "quadrature")
    ss = np.random.SeedSequence(seed)
    means = []
    for child in ss.spawn(reps):
        engine = qmc.Sobol(d=n - 1, scramble=True, seed=np.random.default_rng(child))
        U = engine.random_base2(m_log2)
        means.append(_genz_integrand(L, U).mean())
    means = np.asarray(means)
    return ProbabilityEstimate(
        float(means.mean()),
        float(means.std(ddof=1) / math.sqrt(reps)),
        "quasi-MC",
        seed=seed,
        n_samples=reps * 2**m_log2,
        replicates=means,
    )


def rectangle_probability(Sigma, method="auto", tol=1e-8, budget=None, seed=0) -> ProbabilityEstimate:
    """P[max_i |X_i| <= 1] for X ~ N(0, Sigma)."""
    n = np.shape(Sigma)[0]
    if method == "auto":
        method = "quadrature" if n <= QUAD_MAX_N else "quasi-MC"
    if method == "quadrature":
        if n > QUAD_MAX_N:
            raise UsageError(f"tensor quadrature supports n <= {QUAD_MAX_N}")
        return _quadrature(Sigma, tol=tol, max_nodes=budget)
    if method == "quasi-MC":
        if n > QMC_MAX_N:
            raise UsageError(f"quasi-MC supports n <= {QMC_MAX_N}")
        return _qmc(Sigma, seed, m_log2=budget or 12)
    raise UsageError(f"unknown method {method!r}")


def cube_probability(ci: CovarianceInterpolation, tau, method="auto", budget=None, seed=0, tol=1e-8):
    return rectangle_probability(interpolate(ci, tau), method, tol=tol, budget=budget, seed=seed)


def marginal_probabilities(ci, method="auto", budget=None, seed=0, tol=1e-8):
    C11, C22 = ci.marginals()
    if ci.n2 == 0:
        p1 = rectangle_probability(C11, method, tol=tol, budget=budget, seed=derive_seed(seed, "marginal", 1))
        return p1, ProbabilityEstimate(1.0, 0.0, "quadrature")
    p1 = rectangle_probability(C11, method if ci.n1 > 1 else "auto", tol=tol, budget=budget, seed=derive_seed(seed, "marginal", 1))
    p2 = rectangle_probability(C22, method if ci.n2 > 1 else "auto", tol=tol, budget=budget, seed=derive_seed(seed, "marginal", 2))
    return p1, p2


def tau_derivative(ci, tau, h_step=1e-3, method="auto", budget=None, seed=0, tol=None) -> DerivativeEstimate:
    """Finite-difference d/dtau P[max |X_i| <= 1] with common grids/seeds.

    Central differences inside (0, 1), second-order one-sided stencils at the
    endpoints. The error bound adds the propagated integration error to a
    truncation estimate from the step-2h stencil.
    """
    if not 0 <= tau <= 1:
        raise UsageError("tau must lie in [0, 1]")
    qtol = 1e-13 if tol is None else tol

    def P(t):
        return cube_probability(ci, min(max(t, 0.0), 1.0), method, budget=budget, seed=seed, tol=qtol)

    def combine(ests, weights, h):
        val = sum(w * e.value for w, e in zip(weights, ests)) / h
        reps = [e.replicates for e in ests]
        if all(r is not None for r in reps):
            # common random numbers: the error of the paired replicates
            d = sum(w * r for w, r in zip(weights, reps)) / h
            return val, float(d.std(ddof=1) / math.sqrt(len(d)))
        return val, sum(abs(w) * e.abs_error for w, e in zip(weights, ests)) / h

    def stencil(h):
        if tau - h >= 0 and tau + h <= 1:
            ests = [P(tau + h), P(tau - h)]
            return (*combine(ests, (0.5, -0.5), h), ests)
        sgn = 1 if tau - h < 0 else -1
        ests = [P(tau), P(tau + sgn * h), P(tau + 2 * sgn * h)]
        return (*combine(ests, (-1.5 * sgn, 2.0 * sgn, -0.5 * sgn), h), ests)

    if tau - h_step < 0 and tau + h_step > 1:
        raise UsageError("h_step too large for [0, 1]")
    d1, e1, ests = stencil(h_step)
    stochastic = any(e.stochastic for e in ests)
    if tau - 4 * h_step >= 0 or tau + 4 * h_step <= 1:
        d2, _, _ = stencil(2 * h_step)
        trunc = abs(d2 - d1) / 3
    else:
        trunc = 0.0
    err = e1 + trunc
    flagged = any(e.flagged for e in ests) or (tol is not None and err > tol)
    return DerivativeEstimate(d1, err, ests[0].method, seed if stochastic else None, flagged)


# -- correlation inequality -----------------------------------------------------


@dataclass
class GCIReport:
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    passed: bool
    method: str
    endpoint_residual: float
    profile: list = field(default_factory=list)
    monotone: bool = True
    violations: list = field(default_factory=list)
    seed: int | None = None


def _tolerance(est: ProbabilityEstimate) -> float:
    return 3 * est.abs_error if est.stochastic else 2 * est.abs_error


def gci_check(ci, method="auto", budget=None, seed=0, n_grid=21, tol=1e-8) -> GCIReport:
    """P_joint(tau=1) >= P_1 P_2, plus the tau-profile of P and its monotonicity.

    Quadrature counts a violation only beyond twice the error bound;
    quasi-MC beyond three standard errors. The whole profile shares one seed.
    """
    joint = cube_probability(ci, 1.0, method, budget=budget, seed=seed, tol=tol)
    p1, p2 = marginal_probabilities(ci, method, budget=budget, seed=seed, tol=tol)
    rhs = p1.value * p2.value
    rhs_err = p1.abs_error * p2.value + p2.abs_error * p1.value
    if joint.stochastic or p1.stochastic or p2.stochastic:
        sig = math.sqrt(joint.abs_error**2 + (p1.abs_error * p2.value) ** 2 + (p2.abs_error * p1.value) ** 2)
        tolerance = 3 * sig
    else:
        tolerance = 2 * (joint.abs_error + rhs_err)
    gap = joint.value - rhs

    profile = []
    for t in np.linspace(0, 1, n_grid):
        est = cube_probability(ci, float(t), method, budget=budget, seed=seed, tol=tol)
        profile.append((float(t), est.value, est.abs_error))
    violations = []
    for (t0, v0, e0), (t1, v1, e1) in zip(profile, profile[1:]):
        stoch = joint.stochastic
        thr = 3 * math.hypot(e0, e1) if stoch else 2 * (e0 + e1)
        if v1 - v0 < -thr:
            violations.append((t0, t1, v1 - v0))
    endpoint = abs(profile[0][1] - rhs)
    return GCIReport(
        lhs=joint.value,
        rhs=rhs,
        gap=gap,
        tolerance=tolerance,
        passed=gap >= -tolerance and not violations,
        method=joint.method,
        endpoint_residual=endpoint,
        profile=profile,
        monotone=not violations,
        violations=violations,
        seed=seed if joint.stochastic else None,
    )


# -- half-integer Gamma -----------------------------------------------------------


def _gaussian_copies(L, k, N, rng):
    W = rng.standard_normal((N, k, L.shape[0]))
    return W @ L.T


def _chunks(N, size=1_000_000):
    while N > 0:
        yield min(N, size)
        N -= size


def gamma_probability(gc: GammaConfig, tau, budget=10**6, seed=0) -> ProbabilityEstimate:
    """P[max_i Gamma_i <= 1/2], Gamma_i = 1/2 sum_m (X_i^(m))^2 (Monte Carlo)."""
    L = _cholesky(interpolate(gc.ci, tau))
    rng = np.random.default_rng(seed)
    hits = 0
    for N in _chunks(budget):
        X = _gaussian_copies(L, gc.k, N, rng)
        hits += int(np.all((X**2).sum(axis=1) <= 1.0, axis=1).sum())
    p = hits / budget
    return ProbabilityEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / budget), "MC", seed=seed, n_samples=budget)


@dataclass
class GammaGCIReport:
    k: int
    lhs: float
    rhs: float
    gap: float
    sigma: float
    passed: bool
    p1: float
    p2: float
    n_samples: int
    seed: int


def gamma_gci_check(gc: GammaConfig, budget=10**6, seed=0, tau=1.0) -> GammaGCIReport:
    """Gamma correlation inequality at 3 sigma.

    Joint and marginal events come from the same draws (the block marginals of
    N(0, C) are N(0, C11), N(0, C22)); the gap's standard error uses the
    delta method on the paired indicators.
    """
    ci = gc.ci
    L = _cholesky(interpolate(ci, tau))
    rng = np.random.default_rng(seed)
    sA = sB = sD = 0.0
    sums = np.zeros((3, 3))
    for N in _chunks(budget):
        X = _gaussian_copies(L, gc.k, N, rng)
        ok = (X**2).sum(axis=1) <= 1.0
        B = np.all(ok[:, : ci.n1], axis=1).astype(float)
        D = np.all(ok[:, ci.n1 :], axis=1).astype(float)
        A = B * D
        V = np.stack([A, B, D])
        sums += V @ V.T
        sA += A.sum()
        sB += B.sum()
        sD += D.sum()
    mA, mB, mD = sA / budget, sB / budget, sD / budget
    cov = sums / budget - np.outer([mA, mB, mD], [mA, mB, mD])
    grad = np.array([1.0, -mD, -mB])
    sigma = math.sqrt(max(grad @ cov @ grad, 0.0) / budget)
    gap = mA - mB * mD
    return GammaGCIReport(
        gc.k, float(mA), float(mB * mD), float(gap), sigma, bool(gap >= -3 * sigma), float(mB), float(mD), budget, seed
    )


# -- boundary (delta-slice) integrals -------------------------------------------------


@dataclass
class BodyDensityEstimate:
    """Estimate of int_{[0,1]^{J'}} h_tau(1_J, x_J') dx_J'."""

    J: tuple
    value: float
    abs_error: float
    eps: float | None
    n_samples: int
    hits: int | None = None
    ladder: list = field(default_factory=list)
    seed: int | None = None
    flagged: bool = False
    method: str = "bandwidth"


def _slab_hits(B2, J: SubsetIndex, eps, skip=-1):
    n = B2.shape[1]
    ok = np.ones(B2.shape[0], dtype=bool)
    for i in range(n):
        if i == skip:
            continue
        if J.mask >> i & 1:
            ok &= np.abs(B2[:, i] - 1.0) <= eps
        else:
            ok &= B2[:, i] <= 1.0
    return ok


def _norm_cdf_radius(r, a, d):
    """P[|W| <= r] for W ~ N(mu, I_d) with |mu| = a (a is an array)."""
    if d != 3:
        return ncx2.cdf(r * r, d, a * a)
    small = a < 1e-8
    b = np.where(small, 1.0, a)
    pdf = lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    shifted = ndtr(r - b) + ndtr(r + b) - 1.0 - (pdf(r - b) - pdf(r + b)) / b
    central = 2 * ndtr(r) - 1.0 - 2 * r * pdf(r)
    return np.where(small, central, shifted)


class _ShellConditional:
    """Probability that B_j^2 lands in [lo, hi] given every other coordinate.

    Given x_rest, the ``copies`` draws of coordinate j are iid
    N(beta . x_rest, s2), so B_j^2 / s2 is noncentral chi-square.
    """

    def __init__(self, C, j):
        n = C.shape[0]
        self.j = j
        self.rest = [i for i in range(n) if i != j]
        if self.rest:
            self.beta = np.linalg.solve(C[np.ix_(self.rest, self.rest)], C[self.rest, j])
            self.s2 = float(C[j, j] - C[j, self.rest] @ self.beta)
        else:
            self.beta = np.zeros(0)
            self.s2 = float(C[j, j])
        self.s = math.sqrt(self.s2)

    def prob(self, X, lo, hi):
        d = X.shape[1]
        a = np.linalg.norm(X[:, :, self.rest] @ self.beta, axis=1) / self.s if self.rest else np.zeros(X.shape[0])
        upper = _norm_cdf_radius(math.sqrt(hi) / self.s, a, d)
        lower = _norm_cdf_radius(math.sqrt(max(lo, 0.0)) / self.s, a, d)
        return upper - lower


def _slab_weight(X, B2, J: SubsetIndex, eps, conditionals=None):
    """Per-draw estimate of the slab indicator.

    Without ``conditionals`` this is the raw indicator. With them, the
    coordinate max(J) is integrated out exactly (conditional Monte Carlo):
    same expectation, much smaller variance.
    """
    if conditionals is None:
        return _slab_hits(B2, J, eps).astype(float)
    j = J.indices[-1]
    ok = _slab_hits(B2, J, eps, skip=j)
    w = np.zeros(B2.shape[0])
    if ok.any():
        w[ok] = conditionals[j].prob(X[ok], 1.0 - eps, 1.0 + eps)
    return w


def _conditionals(C, J_list):
    C = np.asarray(C, dtype=float)
    return {j: _ShellConditional(C, j) for j in {J.indices[-1] for J in J_list}}


def boundary_integral_estimate(
    ci, tau, J, eps, N, seed, copies=3, min_hits=100, conditional=True
) -> BodyDensityEstimate:
    """Bandwidth-ratio estimate of the delta-slice of the law of (B_1^2..B_n^2).

    B_i^2 sums ``copies`` squared coordinates of iid N(0, C(tau)) vectors
    (3 for the Gaussian case, k + 2 for Gamma). The slab
    {|B_j^2 - 1| <= eps, j in J; B_i^2 <= 1 otherwise} has probability
    ~ (2 eps)^{|J|} times the slice. Widths eps/2 and eps/4 from the same
    draws are reported as a bandwidth ladder. ``conditional`` integrates one
    slab coordinate exactly instead of counting it.
    """
    J = SubsetIndex(J, ci.n)
    if not len(J):
        raise UsageError("J must be nonempty")
    if eps <= 0 or eps >= 1:
        raise UsageError("eps must lie in (0, 1)")
    C = interpolate(ci, tau)
    L = _cholesky(C)
    cond = _conditionals(C, [J]) if conditional else None
    rng = np.random.default_rng(seed)
    widths = [eps, eps / 2, eps / 4]
    s1 = np.zeros(len(widths))
    s2 = np.zeros(len(widths))
    hits = np.zeros(len(widths), dtype=np.int64)
    for M in _chunks(N):
        X = _gaussian_copies(L, copies, M, rng)
        B2 = (X**2).sum(axis=1)
        for a, w in enumerate(widths):
            z = _slab_weight(X, B2, J, w, cond)
            s1[a] += z.sum()
            s2[a] += (z**2).sum()
            hits[a] += int(np.count_nonzero(z))
    ladder = []
    for w, a1, a2, h in zip(widths, s1, s2, hits):
        vol = (2 * w) ** len(J)
        p = a1 / N
        ladder.append((w, p / vol, math.sqrt(max(a2 / N - p * p, 0.0) / N) / vol, int(h)))
    _, val, err, h0 = ladder[0]
    method = "bandwidth" if conditional else "counting"
    return BodyDensityEstimate(tuple(J), val, err, eps, N, h0, ladder, seed, flagged=h0 < min_hits, method=method)


def boundary_slice_sphere(ci, tau, J, N, seed, copies=3) -> BodyDensityEstimate:
    """Bandwidth-free estimate of the same slice by sampling the unit spheres.

    With V_i in R^d (d = ``copies``) the slice equals
    (1/2)^{|J|} int_{(S^{d-1})^J} p_{V_J}(u) P[|V_i|^2 <= 1, i in J' | V_J = u] du;
    directions are drawn uniformly and the conditional probability is
    replaced by one conditional Gaussian draw.
    """
    J = SubsetIndex(J, ci.n)
    if not len(J):
        raise UsageError("J must be nonempty")
    d = copies
    C = np.asarray(interpolate(ci, tau), dtype=float)
    idx = J.indices
    rest = [i for i in range(ci.n) if i not in idx]
    CJ = C[np.ix_(idx, idx)]
    CJinv = np.linalg.inv(CJ)
    _, logdet = np.linalg.slogdet(CJ)
    m = len(idx)
    log_area = math.log(2) + (d / 2) * math.log(math.pi) - gammaln(d / 2)
    log_const = m * (log_area - math.log(2)) - (d * m / 2) * math.log(2 * math.pi) - (d / 2) * logdet
    if rest:
        A = C[np.ix_(rest, idx)] @ CJinv
        Sc = C[np.ix_(rest, rest)] - A @ C[np.ix_(idx, rest)]
        Lc = np.linalg.cholesky(Sc)
    rng = np.random.default_rng(seed)
    s1 = s2 = 0.0
    for M in _chunks(N):
        U = rng.standard_normal((M, m, d))
        U /= np.linalg.norm(U, axis=2, keepdims=True)
        gram = np.einsum("pad,pbd->pab", U, U)
        quad = np.einsum("ab,pab->p", CJinv, gram)
        val = np.exp(log_const - 0.5 * quad)
        if rest:
            mu = np.einsum("ra,pad->prd", A, U)
            Z = rng.standard_normal((M, len(rest), d))
            V = mu + np.einsum("rs,psd->prd", Lc, Z)
            val = val * np.all((V**2).sum(axis=2) <= 1.0, axis=1)
        s1 += val.sum()
        s2 += (val**2).sum()
    mean = s1 / N
    var = max(s2 / N - mean**2, 0.0)
    return BodyDensityEstimate(tuple(J), mean, math.sqrt(var / N), None, N, seed=seed, method="sphere")


# -- Ward decomposition ---------------------------------------------------------------


@dataclass
class DecompositionTerm:
    J: tuple
    a_J: float
    slice: float | None
    slice_error: float | None
    summand: float
    summand_error: float
    nonnegative: bool


@dataclass
class DecompositionReport:
    lhs: float
    lhs_error: float
    rhs: float
    rhs_error: float
    relative_error: float
    passed: bool
    terms: list
    prefactor: float
    seed: int
    n_samples: int
    eps: float | None


def _decompose(ci, tau, a_values, copies, prefactor, eps, N, seed, slice_method):
    """RHS = prefactor * sum_J 2^{|J|} a_J * slice_J with one shared sample stream."""
    active = [J for J in all_subsets(ci.n) if a_values[J.mask] != 0.0]
    terms = {}
    weights = {J.mask: prefactor * 2 ** len(J) * a_values[J.mask] for J in active}
    if slice_method == "sphere":
        rhs, var = 0.0, 0.0
        for J in active:
            est = boundary_slice_sphere(ci, tau, J, N, derive_seed(seed, "sphere", J.mask), copies)
            terms[J.mask] = (est.value, est.abs_error)
            rhs += weights[J.mask] * est.value
            var += (weights[J.mask] * est.abs_error) ** 2
        return terms, rhs, math.sqrt(var)
    if active:
        C = interpolate(ci, tau)
        L = _cholesky(C)
        cond = None if slice_method == "counting" else _conditionals(C, active)
        rng = np.random.default_rng(seed)
        s1 = {J.mask: 0.0 for J in active}
        s2 = dict(s1)
        z1 = z2 = 0.0
        for M in _chunks(N):
            X = _gaussian_copies(L, copies, M, rng)
            B2 = (X**2).sum(axis=1)
            z = np.zeros(M)
            for J in active:
                w = _slab_weight(X, B2, J, eps, cond)
                s1[J.mask] += w.sum()
                s2[J.mask] += (w**2).sum()
                z += weights[J.mask] / (2 * eps) ** len(J) * w
            z1 += z.sum()
            z2 += (z**2).sum()
        for J in active:
            vol = (2 * eps) ** len(J)
            p = s1[J.mask] / N
            terms[J.mask] = (p / vol, math.sqrt(max(s2[J.mask] / N - p * p, 0.0) / N) / vol)
        rhs = z1 / N
        return terms, rhs, math.sqrt(max(z2 / N - rhs**2, 0.0) / N)
    return terms, 0.0, 0.0


def _assemble(ci, lhs, lhs_err, a_values, terms, rhs, rhs_err, prefactor, rel_tol, seed, N, eps):
    ledger = []
    ok_sign = True
    for J in all_subsets(ci.n):
        a = float(a_values[J.mask])
        if J.mask in terms:
            s, se = terms[J.mask]
            w = prefactor * 2 ** len(J) * a
            summand, serr = w * s, abs(w) * se
            nonneg = summand >= -3 * serr
        else:
            s = se = None
            summand, serr, nonneg = 0.0, 0.0, True
        ok_sign &= nonneg
        ledger.append(DecompositionTerm(tuple(J), a, s, se, summand, serr, nonneg))
    scale = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / scale if scale > 0 else 0.0
    if scale < 1e-12:
        rel = 0.0
    return DecompositionReport(lhs, lhs_err, rhs, rhs_err, rel, rel <= rel_tol and ok_sign, ledger, prefactor, seed, N, eps)


def decomposition_check(
    ci, tau, eps=0.05, N=10**7, seed=0, rel_tol=0.10, slice_method="bandwidth"
) -> DecompositionReport:
    """Compare d/dtau P (quadrature + finite differences) with the assembled
    Ward decomposition 1/2 sum_J 2^{|J|} a_J(tau) * slice_J (Monte Carlo).

    Every summand must be nonnegative at 3 standard errors. ``slice_method``
    picks the slice estimator: "bandwidth" (slab ratio with one coordinate
    integrated conditionally), "counting" (plain slab counts) or "sphere"
    (bandwidth-free).
    """
    if ci.n > QUAD_MAX_N:
        raise UsageError(f"decomposition_check needs a quadrature-grade LHS (n <= {QUAD_MAX_N})")
    if not 0 < tau < 1:
        raise UsageError("tau must lie in (0, 1)")
    if slice_method not in SLICE_METHODS:
        raise UsageError(f"slice_method must be one of {SLICE_METHODS}")
    lhs = tau_derivative(ci, tau)
    a_values = {J.mask: float(a_J_analytic(ci, J, float(tau))) for J in all_subsets(ci.n)}
    terms, rhs, rhs_err = _decompose(ci, tau, a_values, 3, 0.5, eps, N, seed, slice_method)
    return _assemble(ci, lhs.value, lhs.abs_error, a_values, terms, rhs, rhs_err, 0.5, rel_tol, seed, N, eps)


def gamma_decomposition_check(
    gc: GammaConfig, tau, h_step=0.02, N=10**6, eps=0.05, seed=0, rel_tol=0.10, slice_method="sphere"
) -> DecompositionReport:
    """Diagnostic Gamma analogue: MC finite-difference LHS against
    (k/2) sum_J 2^{|J|} a_J * slice_J with k + 2 bosonic copies.
    """
    ci = gc.ci
    if not 0 < tau - h_step and tau + h_step < 1:
        raise UsageError("need h_step < tau < 1 - h_step")
    Lp = _cholesky(interpolate(ci, tau + h_step))
    Lm = _cholesky(interpolate(ci, tau - h_step))
    rng = np.random.default_rng(derive_seed(seed, "lhs"))
    s1 = s2 = 0.0
    for M in _chunks(N):
        W = rng.standard_normal((M, gc.k, ci.n))
        up = np.all(((W @ Lp.T) ** 2).sum(axis=1) <= 1.0, axis=1)
        dn = np.all(((W @ Lm.T) ** 2).sum(axis=1) <= 1.0, axis=1)
        z = (up.astype(float) - dn) / (2 * h_step)
        s1 += z.sum()
        s2 += (z**2).sum()
    lhs = s1 / N
    lhs_err = math.sqrt(max(s2 / N - lhs**2, 0.0) / N)
    a_values = {J.mask: float(a_J_analytic(ci, J, float(tau))) for J in all_subsets(ci.n)}
    prefactor = gc.k / 2
    terms, rhs, rhs_err = _decompose(ci, tau, a_values, gc.k + 2, prefactor, eps, N, derive_seed(seed, "rhs"), slice_method)
    return _assemble(ci, lhs, lhs_err, a_values, terms, rhs, rhs_err, prefactor, rel_tol, seed, N, eps)


def gaussian_expectation_1d(F, c: float) -> float:
    """E[F(X^2)] for X ~ N(0, c) by adaptive quadrature."""
    val, _ = integrate.quad(
        lambda x: math.exp(-x * x / (2 * c)) * float(F.value(x * x)) / math.sqrt(2 * math.pi * c),
        -np.inf,
        np.inf,
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return val
