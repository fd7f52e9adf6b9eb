"""Run configuration, deterministic orchestration of the verification suites,
and the structured-text (YAML) report.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import covariance as cov
from . import probability as prob
from . import supercalc
from .errors import ConfigError, UsageError
from .exterior import GrassmannAlgebra, ext_mul, gaussian_fermionic_integral
from .linalg import bareiss_det
from .rings import PolyRing, Poly
from .seeding import derive_rng, derive_seed

SUITES = ("identities", "lemmaA", "gci", "gamma", "reduction", "decomposition")
JOBS_ENV = "SUSYGCI_JOBS"

ANCHORS = {
    "anticommutation": "Grassmann generators anticommute",
    "fermionic_det": "fermionic Gaussian integral equals det(Sigma)",
    "leibniz": "principal-minor expansion det(I+A) = 1 + sum_J det(A_J)",
    "q_closed": "Y^2 + Z^2 + 2 xi eta is Q-closed",
    "q_ward_seed": "Q(Y^t S eta) = xi^t S eta + Y^t S Y for symmetric S",
    "wick": "fermionic Wick contraction: E_f[prod (-2 xi_j eta_j)] = 2^|J| det(C_J)",
    "lemmaA": "a_J(tau) = -d/dtau det C(tau)_J >= 0, effective-action route",
    "gci": "Gaussian correlation inequality P_joint >= P_1 P_2",
    "gamma": "half-integer multivariate Gamma correlation inequality",
    "localization": "localization: int dmu f = f(0) for Q-closed decaying f",
    "reduction": "dimensional reduction R^{3|2} -> R^{1|0}",
    "decomposition": "Ward identity: dP/dtau = 1/2 sum_J 2^|J| a_J(tau) * boundary integral",
}


# -- configuration ----------------------------------------------------------------


@dataclass
class MatrixSpec:
    name: str
    rows: list
    n1: int

    def interpolation(self) -> cov.CovarianceInterpolation:
        return cov.CovarianceInterpolation(self.rows, self.n1)

    def as_dict(self):
        return {"name": self.name, "rows": self.rows, "n1": self.n1}


@dataclass
class RunConfig:
    suites: list = field(default_factory=lambda: list(SUITES))
    matrices: list = field(default_factory=list)
    taus: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    gamma_k: list = field(default_factory=lambda: [1, 2, 3])
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)
    identities: dict = field(default_factory=dict)
    reduction: dict = field(default_factory=dict)
    output: str | None = None

    def tol(self, key):
        defaults = {
            "quadrature": 1e-8,
            "reduction": 1e-8,
            "decomposition_rel": 0.10,
            "lemmaA_floor": -1e-12,
            "route_rel": 1e-9,
        }
        return float(self.tolerances.get(key, defaults[key]))

    def budget(self, key):
        defaults = {
            "qmc_log2": 12,
            "gamma_samples": 10**6,
            "slice_samples": 10**7,
            "slice_eps": 0.05,
            "tau_grid": 21,
            "lemmaA_grid": 101,
        }
        return self.budgets.get(key, defaults[key])


def _parse_number(x):
    if isinstance(x, bool):
        raise ConfigError(f"boolean {x!r} is not a matrix entry")
    if isinstance(x, (int, float)):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x) if "/" in x else float(x)
        except ValueError:
            raise ConfigError(f"matrix entry {x!r} is not a number")
    raise ConfigError(f"matrix entry {x!r} is not a number")


def _read_csv_rows(path: Path):
    with open(path, newline="") as fh:
        return [[_parse_number(v.strip()) for v in row] for row in csv.reader(fh) if row]


def _normalize_rows(rows):
    """All-integer/rational rows stay exact; anything with a float becomes float."""
    flat = [x for r in rows for x in r]
    if any(isinstance(x, float) for x in flat):
        return [[float(x) for x in r] for r in rows]
    return [[Fraction(x) for x in r] for r in rows]


def validate_matrix(name, rows, n1, problems):
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        problems.append(f"matrices[{name}]: not square")
        return
    A = np.array([[float(x) for x in r] for r in rows])
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        problems.append(f"matrices[{name}]: not symmetric within 1e-12")
    if not isinstance(n1, int) or not 1 <= n1 < n:
        problems.append(f"matrices[{name}]: n1={n1!r} must satisfy 1 <= n1 < n={n}")


def generate_ensemble(n: int, n1: int, count: int, seed: int) -> list[MatrixSpec]:
    """Reproducible random correlation matrices (normalized Gram construction)."""
    if count < 1:
        raise UsageError("count must be >= 1")
    if not 1 <= n1 < n:
        raise UsageError("need 1 <= n1 < n")
    out = []
    for i in range(count):
        C = cov.random_correlation(n, derive_rng(seed, "ensemble", n, i))
        out.append(MatrixSpec(f"ens-n{n}-s{seed}-{i}", C.tolist(), n1))
    return out


def load_config(source, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate a config mapping or YAML file path."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        base_dir = path.parent
        try:
            data = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config: {exc}")
    else:
        data = source
    base_dir = base_dir or Path(".")
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    problems = []
    known = {"suites", "matrices", "ensembles", "taus", "gamma_k", "seed", "tolerances", "budgets", "identities", "reduction", "output"}
    for key in data:
        if key not in known:
            problems.append(f"unknown key {key!r}")

    suites = data.get("suites", list(SUITES))
    if not isinstance(suites, list) or any(s not in SUITES for s in suites):
        problems.append(f"suites: must be a list drawn from {', '.join(SUITES)}")
        suites = []

    matrices = []
    for i, m in enumerate(data.get("matrices") or []):
        if not isinstance(m, dict):
            problems.append(f"matrices[{i}]: must be a mapping")
            continue
        name = str(m.get("name", f"m{i}"))
        try:
            if "rows" in m:
                rows = [[_parse_number(x) for x in r] for r in m["rows"]]
            elif "csv" in m:
                rows = _read_csv_rows(base_dir / m["csv"])
            else:
                problems.append(f"matrices[{name}]: needs 'rows' or 'csv'")
                continue
        except (ConfigError, OSError, TypeError) as exc:
            problems.append(f"matrices[{name}]: {exc}")
            continue
        n1 = m.get("n1")
        validate_matrix(name, rows, n1, problems)
        matrices.append(MatrixSpec(name, _normalize_rows(rows), n1))

    for i, e in enumerate(data.get("ensembles") or []):
        try:
            matrices.extend(generate_ensemble(int(e["n"]), int(e["n1"]), int(e.get("count", 1)), int(e.get("seed", 0))))
        except (KeyError, TypeError, ValueError, UsageError) as exc:
            problems.append(f"ensembles[{i}]: {exc}")

    taus = data.get("taus", [0.25, 0.5, 0.75])
    if not isinstance(taus, list) or any(not isinstance(t, (int, float)) or not 0 <= t <= 1 for t in taus):
        problems.append("taus: must be a list of numbers in [0, 1]")
    ks = data.get("gamma_k", [1, 2, 3])
    if not isinstance(ks, list) or any(not isinstance(k, int) or k < 1 for k in ks):
        problems.append("gamma_k: must be a list of positive integers")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append("seed: must be an unsigned 64-bit integer")
    for key in ("tolerances", "budgets", "identities", "reduction"):
        if not isinstance(data.get(key, {}), dict):
            problems.append(f"{key}: must be a mapping")
    if problems:
        raise ConfigError(problems)
    return RunConfig(
        suites=list(suites),
        matrices=matrices,
        taus=[float(t) for t in taus],
        gamma_k=list(ks),
        seed=seed,
        tolerances=dict(data.get("tolerances", {})),
        budgets=dict(data.get("budgets", {})),
        identities=dict(data.get("identities", {})),
        reduction=dict(data.get("reduction", {})),
        output=data.get("output"),
    )


# -- records ------------------------------------------------------------------------


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def digest(obj) -> str:
    payload = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def make_record(name, anchor_key, inputs, passed, values, seed=None, budget=None, wall=0.0, errors=None):
    return {
        "name": name,
        "anchor": ANCHORS[anchor_key],
        "inputs_digest": digest(inputs),
        "result": "pass" if passed else "fail",
        "values": _plain(values),
        "error_bounds": _plain(errors or {}),
        "seed": seed,
        "budget": _plain(budget),
        "wall_time_s": round(wall, 3),
    }


# -- suites -------------------------------------------------------------------------


def _random_rational_matrix(rng, n, bound=5, den=4):
    return [[Fraction(int(rng.integers(-bound, bound + 1)), int(rng.integers(1, den + 1))) for _ in range(n)] for _ in range(n)]


def _identity_tasks(cfg):
    p = cfg.identities
    return [
        ("anticommutation", {"max_n": int(p.get("max_n", 4))}),
        ("fermionic_det", {"trials": int(p.get("det_trials", 50)), "max_n": int(p.get("det_max_n", 5))}),
        ("leibniz", {"trials": int(p.get("leibniz_trials", 20)), "max_n": int(p.get("leibniz_max_n", 6))}),
        ("q_closed", {"max_n": int(p.get("max_n", 4))}),
        ("q_ward_seed", {"trials": int(p.get("q_trials", 20)), "max_n": int(p.get("max_n", 4))}),
        ("wick", {"trials": int(p.get("wick_trials", 5)), "max_n": int(p.get("wick_max_n", 4))}),
    ]


def run_identity(kind, params, seed):
    rng = derive_rng(seed, "identities", kind)
    failures = 0
    checked = 0
    if kind == "anticommutation":
        for n in range(1, params["max_n"] + 1):
            A = GrassmannAlgebra(n)
            for g in range(2 * n):
                for h in range(2 * n):
                    a, b = A.gen(g), A.gen(h)
                    ok = ext_mul(a, b) == (A.zero() if g == h else -ext_mul(b, a))
                    failures += not ok
                    checked += 1
    elif kind == "fermionic_det":
        for _ in range(params["trials"]):
            n = int(rng.integers(1, params["max_n"] + 1))
            M = _random_rational_matrix(rng, n)
            failures += gaussian_fermionic_integral(M) != bareiss_det(M)
            checked += 1
    elif kind == "leibniz":
        for _ in range(params["trials"]):
            n = int(rng.integers(1, params["max_n"] + 1))
            failures += not cov.leibniz_check(_random_rational_matrix(rng, n)).passed
            checked += 1
    elif kind == "q_closed":
        for n in range(1, params["max_n"] + 1):
            A = GrassmannAlgebra(n, PolyRing())
            for i in range(1, n + 1):
                failures += bool(supercalc.apply_Q(supercalc.super_radius_sq(A, i)).terms)
                checked += 1
    elif kind == "q_ward_seed":
        for _ in range(params["trials"]):
            n = int(rng.integers(1, params["max_n"] + 1))
            failures += not _ward_seed_holds(n, rng)
            checked += 1
    elif kind == "wick":
        for _ in range(params["trials"]):
            n = int(rng.integers(2, params["max_n"] + 1))
            ci = cov.CovarianceInterpolation(cov.random_rational_pd(n, rng), int(rng.integers(1, n)))
            tau = Fraction(int(rng.integers(0, 5)), 4)
            Ct = ci.eval(tau)
            for mask, val in cov.wick_expectations(ci, tau).items():
                J = cov.SubsetIndex(mask, n)
                expected = 2 ** len(J) * (cov.principal_minor_det(Ct, J) if len(J) else 1)
                failures += val != expected
                checked += 1
    return failures == 0, {"checked": checked, "failures": int(failures)}


def _ward_seed_holds(n, rng) -> bool:
    A = GrassmannAlgebra(n, PolyRing())
    S = _random_rational_matrix(rng, n)
    S = [[(S[i][j] + S[j][i]) / 2 for j in range(n)] for i in range(n)]
    Y = [Poly.symbol(f"Y{i}") for i in range(1, n + 1)]
    seed_elem = A.zero()
    for i in range(n):
        for j in range(n):
            seed_elem = seed_elem + A.eta(j + 1) * (Y[i] * S[i][j])
    lhs = supercalc.apply_Q(seed_elem)
    rhs = A.bilinear(S)
    for i in range(n):
        for j in range(n):
            rhs = rhs + A.scalar(Y[i] * Y[j] * S[i][j])
    return lhs == rhs


def run_lemmaA(spec: MatrixSpec, cfg: RunConfig):
    ci = spec.interpolation()
    grid = np.linspace(0, 1, int(cfg.budget("lemmaA_grid")))
    floor = cfg.tol("lemmaA_floor")
    worst = math.inf
    route_diff = 0.0
    det_monotone = True
    exact_equal = True
    for J in cov.all_subsets(ci.n):
        if ci.exact:
            taus = [Fraction(i, 10) for i in range(11)]
            for t in taus:
                a = cov.a_J_analytic(ci, J, t)
                b = cov.a_J_fermionic(ci, J, t)
                exact_equal &= a == b
                worst = min(worst, float(a))
        else:
            a = cov.a_J_analytic(ci, J, grid)
            b = cov.a_J_fermionic(ci, J, grid)
            scale = np.maximum(1.0, np.abs(a))
            route_diff = max(route_diff, float(np.max(np.abs(a - b) / scale)))
            worst = min(worst, float(a.min()))
            dets = cov.principal_minor_det(ci.eval(grid), J)
            det_monotone &= bool(np.all(np.diff(dets) <= 1e-12))
    passed = worst >= floor and exact_equal and route_diff <= cfg.tol("route_rel") and det_monotone
    values = {"min_a_J": worst, "route_max_rel_diff": route_diff, "routes_exactly_equal": exact_equal, "det_monotone": det_monotone}
    return passed, values


def run_gci(spec, cfg, seed):
    ci = spec.interpolation()
    rep = prob.gci_check(
        ci, budget=cfg.budget("qmc_log2") if ci.n > prob.QUAD_MAX_N else None, seed=seed,
        n_grid=int(cfg.budget("tau_grid")), tol=cfg.tol("quadrature"),
    )
    values = {
        "lhs": rep.lhs, "rhs": rep.rhs, "gap": rep.gap, "method": rep.method,
        "monotone": rep.monotone, "endpoint_residual": rep.endpoint_residual,
        "violations": rep.violations,
    }
    return rep.passed, values, {"tolerance": rep.tolerance}, rep.profile


def run_gamma(spec, k, cfg, seed):
    gc = prob.GammaConfig(k, spec.interpolation())
    rep = prob.gamma_gci_check(gc, budget=int(cfg.budget("gamma_samples")), seed=seed)
    values = {"k": k, "lhs": rep.lhs, "rhs": rep.rhs, "gap": rep.gap, "p1": rep.p1, "p2": rep.p2}
    return rep.passed, values, {"sigma": rep.sigma}


def run_reduction(lam, c, cfg):
    F = supercalc.TestFunction.exponential(lam)
    tol = cfg.tol("reduction")
    red = supercalc.reduction_check(F, c, tol=tol)
    loc = supercalc.localization_check(F, c, tol=tol)
    values = {
        "lambda": lam, "c": c, "lhs": red.lhs, "rhs": red.rhs, "analytic": red.analytic,
        "localization_value": loc.value, "localization_expected": loc.expected,
    }
    return red.passed and loc.passed, values, {"reduction_residual": red.residual, "localization_residual": loc.residual}


def run_decomposition(spec, tau, cfg, seed):
    ci = spec.interpolation()
    rep = prob.decomposition_check(
        ci, tau, eps=float(cfg.budget("slice_eps")), N=int(cfg.budget("slice_samples")),
        seed=seed, rel_tol=cfg.tol("decomposition_rel"),
    )
    ledger = [
        {"J": list(t.J), "a_J": t.a_J, "slice": t.slice, "summand": t.summand, "nonnegative": t.nonnegative}
        for t in rep.terms
    ]
    values = {"tau": tau, "lhs": rep.lhs, "rhs": rep.rhs, "relative_error": rep.relative_error, "terms": ledger}
    return rep.passed, values, {"lhs_error": rep.lhs_error, "rhs_error": rep.rhs_error}


def plan(cfg: RunConfig) -> list[tuple]:
    """Ordered task list; each entry is self-contained and picklable."""
    tasks = []
    for suite in SUITES:
        if suite not in cfg.suites:
            continue
        if suite == "identities":
            tasks += [("identities", kind, params) for kind, params in _identity_tasks(cfg)]
        elif suite == "lemmaA":
            tasks += [("lemmaA", m) for m in cfg.matrices]
        elif suite == "gci":
            tasks += [("gci", m) for m in cfg.matrices]
        elif suite == "gamma":
            tasks += [("gamma", m, k) for m in cfg.matrices for k in cfg.gamma_k]
        elif suite == "reduction":
            lams = cfg.reduction.get("lambdas", [0.0, 0.5, 1.0, 2.0])
            cs = cfg.reduction.get("variances", [0.5, 1.0, 2.0])
            tasks += [("reduction", float(l), float(c)) for l in lams for c in cs]
        elif suite == "decomposition":
            tasks += [
                ("decomposition", m, t)
                for m in cfg.matrices
                if len(m.rows) <= prob.QUAD_MAX_N
                for t in cfg.taus
                if 0 < t < 1
            ]
    return tasks


def execute(task, cfg: RunConfig):
    suite = task[0]
    start = time.perf_counter()
    seed = None
    budget = None
    errors = {}
    profile = None
    try:
        if suite == "identities":
            _, kind, params = task
            seed = derive_seed(cfg.seed, "identities")
            passed, values = run_identity(kind, params, seed)
            name, anchor, inputs, budget = f"identities/{kind}", kind, params, params
        elif suite == "lemmaA":
            spec = task[1]
            passed, values = run_lemmaA(spec, cfg)
            name, anchor, inputs = f"lemmaA/{spec.name}", "lemmaA", spec.as_dict()
            budget = {"tau_grid": cfg.budget("lemmaA_grid")}
        elif suite == "gci":
            spec = task[1]
            seed = derive_seed(cfg.seed, "gci", spec.name)
            passed, values, errors, profile = run_gci(spec, cfg, seed)
            name, anchor, inputs = f"gci/{spec.name}", "gci", spec.as_dict()
            budget = {"qmc_log2": cfg.budget("qmc_log2"), "tau_grid": cfg.budget("tau_grid")}
        elif suite == "gamma":
            spec, k = task[1], task[2]
            seed = derive_seed(cfg.seed, "gamma", spec.name, k)
            passed, values, errors = run_gamma(spec, k, cfg, seed)
            name, anchor, inputs = f"gamma/{spec.name}/k={k}", "gamma", {**spec.as_dict(), "k": k}
            budget = {"samples": cfg.budget("gamma_samples")}
        elif suite == "reduction":
            lam, c = task[1], task[2]
            passed, values, errors = run_reduction(lam, c, cfg)
            name, anchor, inputs = f"reduction/lambda={lam}/c={c}", "reduction", {"lambda": lam, "c": c}
        elif suite == "decomposition":
            spec, tau = task[1], task[2]
            seed = derive_seed(cfg.seed, "decomposition", spec.name, tau)
            passed, values, errors = run_decomposition(spec, tau, cfg, seed)
            name, anchor, inputs = f"decomposition/{spec.name}/tau={tau}", "decomposition", {**spec.as_dict(), "tau": tau}
            budget = {"slice_samples": cfg.budget("slice_samples"), "slice_eps": cfg.budget("slice_eps")}
        else:
            raise UsageError(f"unknown suite {suite}")
    except Exception as exc:  # numeric failures are recorded, the run continues
        label = "/".join([suite] + [str(getattr(p, "name", p)) for p in task[1:] if not isinstance(p, dict)])
        anchor = task[1] if suite == "identities" else suite
        rec = make_record(label, anchor, [str(t) for t in task], False,
                          {"exception": f"{type(exc).__name__}: {exc}"}, seed=seed, wall=time.perf_counter() - start)
        rec["result"] = "error"
        return rec, None
    rec = make_record(name, anchor, inputs, passed, values, seed=seed, budget=budget,
                      wall=time.perf_counter() - start, errors=errors)
    return rec, (name, profile) if profile is not None else None


def _execute_star(args):
    return execute(*args)


def run_suite(cfg: RunConfig, jobs: int = 1) -> dict:
    """Execute the configured suites; the report is in plan order for any ``jobs``."""
    tasks = plan(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_star, [(t, cfg) for t in tasks]))
    else:
        results = [execute(t, cfg) for t in tasks]
    records = [r for r, _ in results]
    profiles = [p for _, p in results if p is not None]
    return {
        "seed": cfg.seed,
        "suites": list(cfg.suites),
        "passed": all(r["result"] == "pass" for r in records),
        "n_records": len(records),
        "n_failed": sum(r["result"] != "pass" for r in records),
        "records": records,
        "_profiles": profiles,
    }


def write_report(report: dict, out: Path) -> list[Path]:
    """Write the YAML report and, if any, a CSV of tau-profiles next to it."""
    out = Path(out)
    body = {k: v for k, v in report.items() if not k.startswith("_")}
    out.write_text(yaml.safe_dump(body, sort_keys=False, default_flow_style=None, width=100))
    written = [out]
    if report.get("_profiles"):
        path = out.with_name(out.stem + "_profiles.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "tau", "probability", "abs_error"])
            for name, rows in report["_profiles"]:
                for t, v, e in rows:
                    w.writerow([name, repr(float(t)), repr(float(v)), repr(float(e))])
        written.append(path)
    return written


def strip_timing(report: dict) -> dict:
    body = {k: v for k, v in report.items() if not k.startswith("_")}
    body = json.loads(json.dumps(body))
    for rec in body["records"]:
        rec.pop("wall_time_s", None)
    return body


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1
