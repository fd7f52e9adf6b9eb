"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
import yaml

import conftest
from susygci import harness
from susygci.covariance import (
    CovarianceInterpolation,
    SubsetIndex,
    a_J_analytic,
    a_J_fermionic,
    all_subsets,
    leibniz_check,
    principal_minor_det,
    random_correlation,
    random_rational_pd,
    wick_expectations,
)
from susygci.exterior import GrassmannAlgebra, gaussian_fermionic_integral
from susygci.probability import (
    GammaConfig,
    cube_probability,
    decomposition_check,
    gamma_gci_check,
    gamma_probability,
    gci_check,
)
from susygci.rings import Poly, PolyRing
from susygci.supercalc import TestFunction, apply_Q, localization_check, reduction_check, super_radius_sq

from oracles import permutation_det, random_fraction_matrix

SEED = 20240601


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_fermionic_determinant():
    rng = np.random.default_rng([SEED, 1])
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        N = int(rng.integers(1, 7))
        M = random_fraction_matrix(rng, N)
        mismatches += gaussian_fermionic_integral(M) != permutation_det(M)
    wall = time.perf_counter() - start
    record(1, "fermionic Gaussian integral = det", mismatches == 0 and wall < 10,
           f"500 rational matrices N<=6, {mismatches} mismatches, {wall:.1f}s (limit 10s)")


def test_criterion_02_leibniz_expansion():
    rng = np.random.default_rng([SEED, 2])
    start = time.perf_counter()
    failures = 0
    for _ in range(200):
        n = int(rng.integers(1, 9))
        failures += not leibniz_check(random_fraction_matrix(rng, n)).passed
    wall = time.perf_counter() - start
    record(2, "principal-minor expansion", failures == 0 and wall < 30,
           f"200 rational matrices n<=8, {failures} failures, {wall:.1f}s (limit 30s)")


def test_criterion_03_minor_derivative_positivity():
    rng = np.random.default_rng([SEED, 3])
    start = time.perf_counter()
    grid = np.linspace(0, 1, 101)
    worst, worst_route, checked = math.inf, 0.0, 0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        C = random_correlation(n, rng)
        for n1 in range(1, n):
            ci = CovarianceInterpolation(C, n1)
            for J in all_subsets(n):
                a = a_J_analytic(ci, J, grid)
                b = a_J_fermionic(ci, J, grid)
                worst = min(worst, float(a.min()))
                worst_route = max(worst_route, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
                checked += 1
    exact_mismatch = 0
    taus = [Fraction(i, 10) for i in range(11)]
    for _ in range(20):
        n = int(rng.integers(2, 6))
        R = random_rational_pd(n, rng)
        for n1 in range(1, n):
            ci = CovarianceInterpolation(R, n1)
            for J in all_subsets(n):
                for t in taus:
                    a = a_J_analytic(ci, J, t)
                    exact_mismatch += a != a_J_fermionic(ci, J, t)
                    worst = min(worst, float(a))
    wall = time.perf_counter() - start
    ok = worst >= -1e-12 and worst_route <= 1e-9 and exact_mismatch == 0 and wall < 300
    record(3, "a_J >= 0 with two routes", ok,
           f"{checked} (matrix, split, J) float cases x 101 tau, min a_J={worst:.3g}, "
           f"max route diff={worst_route:.2g}, exact mismatches={exact_mismatch}, {wall:.1f}s (limit 300s)")


def test_criterion_04_q_identities():
    rng = np.random.default_rng([SEED, 4])
    closed_fail = 0
    for n in range(1, 5):
        A = GrassmannAlgebra(n, PolyRing())
        closed_fail += sum(bool(apply_Q(super_radius_sq(A, i)).terms) for i in range(1, n + 1))
    ward_fail = 0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        M = random_fraction_matrix(rng, n)
        S = [[(M[i][j] + M[j][i]) / 2 for j in range(n)] for i in range(n)]
        A = GrassmannAlgebra(n, PolyRing())
        Y = [Poly.symbol(f"Y{i}") for i in range(1, n + 1)]
        seed_elem, rhs = A.zero(), A.bilinear(S)
        for i in range(n):
            for j in range(n):
                seed_elem = seed_elem + A.eta(j + 1) * (Y[i] * S[i][j])
                rhs = rhs + A.scalar(Y[i] * Y[j] * S[i][j])
        ward_fail += apply_Q(seed_elem) != rhs
    record(4, "Q identities", closed_fail == 0 and ward_fail == 0,
           f"Q-closedness n<=4: {closed_fail} failures; Ward seed on 100 symmetric S: {ward_fail} failures")


def test_criterion_05_localization_and_reduction():
    worst_red = worst_loc = 0.0
    for lam in (0.0, 0.5, 1.0, 2.0):
        F = TestFunction.exponential(lam)
        for c in (0.5, 1.0, 2.0):
            red = reduction_check(F, c)
            assert red.analytic == pytest.approx((1 + 2 * lam * c) ** -0.5, abs=1e-15)
            worst_red = max(worst_red, red.residual)
            worst_loc = max(worst_loc, localization_check(F, c).residual)
    record(5, "localization and dimensional reduction", worst_red <= 1e-8 and worst_loc <= 1e-8,
           f"12 (lambda, c) pairs, max reduction residual={worst_red:.2g}, max localization residual={worst_loc:.2g} (limit 1e-8)")


def test_criterion_06_wick():
    rng = np.random.default_rng([SEED, 6])
    mismatches = checked = 0
    for _ in range(50):
        n = int(rng.integers(1, 6))
        ci = CovarianceInterpolation(random_rational_pd(n, rng), int(rng.integers(1, n + 1)))
        tau = Fraction(int(rng.integers(0, 9)), 8)
        Ct = ci.eval(tau)
        for mask, val in wick_expectations(ci, tau).items():
            J = SubsetIndex(mask, n)
            expected = 2 ** len(J) * (principal_minor_det(Ct, J) if len(J) else 1)
            mismatches += val != expected
            checked += 1
    record(6, "fermionic Wick subsets", mismatches == 0, f"50 rational matrices n<=5, {checked} subsets, {mismatches} mismatches")


def test_criterion_07_gci_desk_scale():
    rng = np.random.default_rng([SEED, 7])
    start = time.perf_counter()
    quad_fail, min_gap = 0, math.inf
    for _ in range(100):
        n = int(rng.integers(2, 4))
        rep = gci_check(CovarianceInterpolation(random_correlation(n, rng), int(rng.integers(1, n))))
        quad_fail += not (rep.passed and rep.method == "quadrature")
        min_gap = min(min_gap, rep.gap / max(rep.tolerance, 1e-300))
    qmc_fail = 0
    for i in range(50):
        n = int(rng.integers(4, 9))
        rep = gci_check(CovarianceInterpolation(random_correlation(n, rng), int(rng.integers(1, n))), seed=i)
        qmc_fail += not (rep.passed and rep.method == "quasi-MC")
    wall = time.perf_counter() - start
    record(7, "correlation inequality + tau-monotonicity", quad_fail == 0 and qmc_fail == 0 and wall < 600,
           f"100 quadrature cases n<=3: {quad_fail} failures; 50 quasi-MC cases n<=8: {qmc_fail} failures; {wall:.1f}s (limit 600s)")


def test_criterion_08_gamma_extension():
    rng = np.random.default_rng([SEED, 8])
    ineq_fail = agree_fail = 0
    for i in range(30):
        n = int(rng.integers(2, 5))
        ci = CovarianceInterpolation(random_correlation(n, rng), int(rng.integers(1, n)))
        for k in (1, 2, 3):
            ineq_fail += not gamma_gci_check(GammaConfig(k, ci), budget=2 * 10**5, seed=1000 * i + k).passed
        g1 = gamma_probability(GammaConfig(1, ci), 1.0, budget=2 * 10**5, seed=i)
        cube = cube_probability(ci, 1.0, seed=i)
        agree_fail += abs(g1.value - cube.value) > 3 * math.hypot(g1.abs_error, cube.abs_error)
    one = CovarianceInterpolation(np.array([[1.0]]), 1)
    anchor = gamma_probability(GammaConfig(2, one), 1.0, budget=10**6, seed=SEED)
    target = 1 - math.exp(-0.5)
    anchor_ok = abs(anchor.value - target) <= 3 * anchor.abs_error
    ok = ineq_fail == 0 and agree_fail == 0 and anchor_ok
    record(8, "half-integer Gamma extension", ok,
           f"90 (matrix, k) checks at 3 sigma: {ineq_fail} failures; k=1 vs Gaussian: {agree_fail} disagreements; "
           f"n=1 k=2 anchor {anchor.value:.5f} vs {target:.7f} (+-{3 * anchor.abs_error:.1g})")


def test_criterion_09_ward_decomposition():
    rng = np.random.default_rng([SEED, 9])
    taus = (0.25, 0.5, 0.75)
    start = time.perf_counter()
    worst_rel, sign_fail, failures = 0.0, 0, 0
    for i in range(10):
        n = 2 + i % 2
        ci = CovarianceInterpolation(random_correlation(n, rng), int(rng.integers(1, n)))
        rep = decomposition_check(ci, taus[i % 3], N=10**7, seed=SEED + i)
        worst_rel = max(worst_rel, rep.relative_error)
        sign_fail += sum(not t.nonnegative for t in rep.terms)
        failures += not rep.passed
    wall = time.perf_counter() - start
    ok = failures == 0 and worst_rel <= 0.10 and sign_fail == 0 and wall < 900
    record(9, "Ward decomposition of d/dtau P", ok,
           f"10 configs n in {{2,3}}, max relative error={worst_rel:.3f} (limit 0.10), "
           f"negative summands={sign_fail}, {wall:.1f}s (limit 900s)")


def test_criterion_10_reproducibility(tmp_path):
    config = {
        "seed": SEED,
        "matrices": [{"name": "half", "n1": 1, "rows": [[1, "1/2"], ["1/2", 1]]}],
        "ensembles": [{"n": 3, "n1": 1, "count": 1, "seed": 2}, {"n": 5, "n1": 2, "count": 1, "seed": 3}],
        "taus": [0.5],
        "gamma_k": [1, 2],
        "budgets": {"gamma_samples": 200000, "slice_samples": 2000000},
    }
    path = tmp_path / "repro.yaml"
    path.write_text(yaml.safe_dump(config))
    dumps = []
    for jobs in (1, 1, 4):
        report = harness.run_suite(harness.load_config(path), jobs=jobs)
        out = tmp_path / f"report_{len(dumps)}.yaml"
        harness.write_report(report, out)
        doc = yaml.safe_load(out.read_text())
        for rec in doc["records"]:
            rec.pop("wall_time_s")
        dumps.append(yaml.safe_dump(doc).encode())
    ok = dumps[0] == dumps[1] == dumps[2]
    record(10, "reproducible reports", ok,
           f"{len(yaml.safe_load(dumps[0])['records'])} records; two serial runs and a 4-worker run byte-identical: {ok}")
