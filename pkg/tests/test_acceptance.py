"""End-to-end acceptance checks.

Each test records a single PASS/FAIL line through the ``criterion`` fixture
(see ``conftest.py``); the lines are echoed as they happen and repeated in
the terminal summary.  The Monte Carlo criteria take a few minutes in total.
"""
import hashlib
import json
import math
import time
from dataclasses import replace

import numpy as np
from scipy import integrate, stats

from krsl.batch_solver import (
    RegressionDataset,
    fixed_point_solve,
    performance_surface,
    surface_gradient,
    validate_robustness_bound,
)
from krsl.cli import EXIT_OK, main
from krsl.config import load_document, parse_experiment, parse_theory
from krsl.filters import algorithm_params, update_many
from krsl.harness import (
    AlgorithmSpec,
    compare_with_theory,
    matched_step_size,
    outlier_robustness_sweep,
    run_experiment,
)
from krsl.noise import MixtureOutliers
from krsl.similarity import (
    KrslParams,
    c_loss,
    convexity_lambda_threshold,
    empirical_krsl,
    krsl_hessian_diag,
    krsl_of_error,
    mse,
)
from krsl.theory import f_double_prime, f_prime, score, steady_state_emse_taylor

CASES = 1000


# ---------------------------------------------------------------------------
# 1. steady-state EMSE from the Taylor expansion

TABLE_EMSE = {"gaussian": 0.0030, "binary": 0.000116, "laplace": 0.0065, "cauchy": 0.0049}


def test_criterion_1_taylor_emse(criterion):
    parts, ok = [], True
    for name, expected in TABLE_EMSE.items():
        case = parse_theory(load_document(f"preset:table2_{name}")["theory"])[0]
        start = time.perf_counter()
        value = steady_state_emse_taylor(case.theory_config())
        elapsed = time.perf_counter() - start
        rel = abs(value - expected) / expected
        ok &= rel <= 0.05 and elapsed < 5.0
        parts.append(f"{name}={value:.4g} ({100 * rel:.1f}%, {elapsed:.2f}s)")
    criterion(1, ok, "; ".join(parts))


# ---------------------------------------------------------------------------
# 2. simulated steady-state EMSE, Gaussian noise

def test_criterion_2_simulated_emse(criterion):
    job = parse_experiment(load_document("preset:table2_gaussian")["experiment"])
    cfg = job.config
    assert (cfg.runs, cfg.iterations, cfg.steady_state_window) == (100, 200_000, 10_000)
    start = time.perf_counter()
    rec = run_experiment(cfg)["MKRSL"]
    elapsed = time.perf_counter() - start
    half = max(0.0005, 3 * rec.steady_emse_std)
    dev = abs(rec.steady_emse - 0.0031)
    ok = dev <= half and elapsed < 600 and rec.runs_used == cfg.runs
    criterion(2, ok, f"EMSE={rec.steady_emse:.5f}, |dev|={dev:.5f} <= {half:.5f} "
                     f"(run std {rec.steady_emse_std:.5f}), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 3. transient curves against the theoretical recursion

def test_criterion_3_transient_match(criterion):
    job = parse_experiment(load_document("preset:fig3_transient")["experiment"])
    cfg = job.config
    assert cfg.runs == 200 and job.burn_in == 100
    records = run_experiment(cfg)
    parts, ok = [], True
    for spec in cfg.algorithms:
        cmp = compare_with_theory(records[spec.label], cfg, burn_in=100)
        ok &= cmp.max_deviation < 0.10
        parts.append(f"{spec.label} (lam={spec.params['lam']:g}, eta={spec.step_size:g}) "
                     f"max dev {100 * cmp.max_deviation:.1f}%")
    criterion(3, ok and len(parts) == 2, "; ".join(parts))


# ---------------------------------------------------------------------------
# 4. randomized validation of the scalar robustness bound

def test_criterion_4_robustness_bound(criterion):
    checks = validate_robustness_bound(200, seed=1, max_outlier=1e6)
    violations = sum(c.ratio > 1.0 for c in checks)
    inconsistent = sum(not c.bound_consistent for c in checks)
    ok = len(checks) >= 200 and violations == 0 and inconsistent == 0
    criterion(4, ok, f"{len(checks)} instances, {violations} violations, {inconsistent} with xi > rho*eps_v, "
                     f"max |W*-W0|/xi = {max(c.ratio for c in checks):.3f}")


# ---------------------------------------------------------------------------
# 5. properties of the empirical KRSL, 1000 random cases each

def _symmetry(gen):
    n = int(gen.integers(1, 30))
    x, y = gen.normal(0, gen.uniform(0.1, 10), (2, n))
    p = KrslParams(gen.uniform(0.05, 20), gen.uniform(0.01, 30))
    return empirical_krsl(x, y, p) == empirical_krsl(y, x, p)


def _bounds(gen):
    n = int(gen.integers(1, 30))
    p = KrslParams(gen.uniform(0.05, 20), gen.uniform(0.01, 30))
    x = gen.normal(0, 5, n)
    # residuals at least 1e-3 sigma so the kernel differs from 1 in double precision
    y = x + gen.choice([-1.0, 1.0], n) * p.sigma * np.exp(gen.uniform(math.log(1e-3), math.log(1e3), n))
    value = empirical_krsl(x, y, p)
    at_min = empirical_krsl(x, x, p)
    upper = math.exp(p.lam) / p.lam
    return at_min == 1 / p.lam and 1 / p.lam < value <= upper * (1 + 1e-12)


def _small_lambda(gen):
    n = int(gen.integers(5, 40))
    x, y = gen.standard_normal((2, n))
    sigma = gen.uniform(0.3, 3.0)
    gaps = [abs(empirical_krsl(x, y, KrslParams(sigma, lam)) - (1 / lam + c_loss(x, y, sigma)))
            for lam in (1e-3, 5e-4)]
    return abs(gaps[1] / gaps[0] - 0.5) <= 0.05 * 0.5


def _large_sigma_gap_ratio(x, y, lam):
    # sigma well above every residual; the O(sigma**-4) term carries (lam - 1) / 2
    base = 20 * np.max(np.abs(x - y))

    def gap(sigma):
        return abs(empirical_krsl(x, y, KrslParams(sigma, lam)) - (1 / lam + mse(x, y) / (2 * sigma ** 2)))

    return gap(2 * base) / gap(base)


def _lam_away_from_one(gen):
    return float(gen.choice([gen.uniform(0.05, 0.75), gen.uniform(1.5, 20.0)]))


def _large_sigma(gen):
    n = int(gen.integers(2, 40))
    x, y = gen.normal(0, gen.uniform(0.1, 10), (2, n))
    return abs(_large_sigma_gap_ratio(x, y, _lam_away_from_one(gen)) - 1 / 16) <= 0.5 / 16


def _hessian_positive(gen):
    n = int(gen.integers(1, 30))
    p = KrslParams(gen.uniform(0.05, 20), gen.uniform(0.01, 30))
    e = gen.uniform(-1, 1, n) * p.sigma
    e[gen.integers(n)] = p.sigma * gen.choice([-1.0, 1.0])
    return bool(np.all(krsl_hessian_diag(e, p) > 0))


def _threshold_sufficient(gen):
    n = int(gen.integers(1, 12))
    sigma = gen.uniform(0.05, 20)
    e = gen.uniform(-3.5, 3.5, n) * sigma
    e[gen.integers(n)] = sigma * gen.choice([-1.0, 1.0]) * gen.uniform(1.01, 3.5)
    lam = convexity_lambda_threshold(e, sigma) * (1 + 1e-9)
    return bool(np.all(krsl_hessian_diag(e, KrslParams(sigma, lam)) >= 0))


def _squared_l2(gen):
    n = int(gen.integers(2, 40))
    x = gen.normal(0, gen.uniform(0.1, 10), n)
    return abs(_large_sigma_gap_ratio(x, np.zeros(n), _lam_away_from_one(gen)) - 1 / 16) <= 0.5 / 16


def _l0_ordering(gen):
    n = int(gen.integers(3, 16))
    p = KrslParams(1e-3, 1.0)
    candidates, counts = [], []
    for _ in range(6):
        k = int(gen.integers(0, n + 1))
        x = np.zeros(n)
        idx = gen.choice(n, k, replace=False)
        x[idx] = gen.choice([-1.0, 1.0], k) * gen.uniform(0.1, 10.0, k)
        candidates.append(empirical_krsl(x, np.zeros(n), p))
        counts.append(k)
    for a in range(6):
        for b in range(6):
            if counts[a] < counts[b] and not candidates[a] < candidates[b]:
                return False
    return True


PROPERTIES = {
    "symmetry": _symmetry,
    "bounds": _bounds,
    "small-lambda": _small_lambda,
    "large-sigma": _large_sigma,
    "hessian": _hessian_positive,
    "threshold": _threshold_sufficient,
    "squared-L2": _squared_l2,
    "L0-order": _l0_ordering,
}


def test_criterion_5_property_suite(criterion):
    parts, ok = [], True
    for i, (name, check) in enumerate(PROPERTIES.items()):
        gen = np.random.default_rng([5, i])
        passed = sum(bool(check(gen)) for _ in range(CASES))
        ok &= passed == CASES
        parts.append(f"{name} {passed}/{CASES}")
    criterion(5, ok, ", ".join(parts))


# ---------------------------------------------------------------------------
# 6. limiting algorithms

def _pointwise_rel(a, b):
    # entries where both increments underflow to exactly zero agree trivially
    diff = np.abs(a - b)
    return float(np.max(np.divide(diff, np.abs(b), out=np.zeros_like(diff), where=diff > 0)))


def _increment(algo, params, e, x, eta=0.01):
    W = np.zeros_like(x)
    update_many(algo, eta, algorithm_params(algo, params), W, x, e)
    return W


def test_criterion_6_limits(criterion):
    gen = np.random.default_rng(6)
    x = gen.standard_normal((2000, 5))
    e = gen.standard_t(2, 2000) * 3.0
    mkrsl = _increment("mkrsl", KrslParams(1.3, 1e-8), e, x)
    mcc = _increment("mcc", {"sigma": 1.3}, e, x)
    mcc_rel = _pointwise_rel(mkrsl, mcc)
    e_lms = gen.normal(0, 10.0, 2000)
    wide = _increment("mkrsl", KrslParams(1e9, 3.0), e_lms, x)
    lms = _increment("lms", {}, e_lms, x)
    lms_rel = _pointwise_rel(wide, lms)

    fp_rel = 0.0
    for trial in range(20):
        X = gen.standard_normal((400, 4))
        d = X @ gen.standard_normal(4) + gen.standard_normal(400)
        d[gen.choice(400, 20, replace=False)] += gen.normal(0, 100, 20)
        data = RegressionDataset(X, d)
        ls = np.linalg.lstsq(X, d, rcond=None)[0]
        w = fixed_point_solve(data, KrslParams(1e9, float(gen.uniform(0.5, 10)))).weights
        fp_rel = max(fp_rel, float(np.linalg.norm(w - ls) / np.linalg.norm(ls)))
    ok = mcc_rel < 1e-6 and lms_rel < 1e-9 and fp_rel < 1e-8
    criterion(6, ok, f"MKRSL vs MCC {mcc_rel:.1e} (< 1e-6); vs LMS {lms_rel:.1e} (< 1e-9); "
                     f"fixed point vs LS {fp_rel:.1e} (< 1e-8)")


# ---------------------------------------------------------------------------
# 7. derivative oracles

H = 1e-5
RTOL = 1e-4
DERIVATIVE_PARAMS = [KrslParams(1.0, 0.3), KrslParams(1.0, 2.0), KrslParams(1.0, 8.0), KrslParams(0.5, 3.0),
                     KrslParams(3.0, 20.0)]


def _global_rel(fd, exact):
    return float(np.max(np.abs(fd - exact)) / np.max(np.abs(exact)))


def _loss_gradient(e, p):
    # exact gradient of krsl_of_error in the residuals
    k = np.exp(-e * e / (2 * p.sigma ** 2))
    return np.exp(p.lam * (1 - k)) * k * e / (e.size * p.sigma ** 2)


def test_criterion_7_derivative_oracles(criterion):
    worst = {"f'": 0.0, "f''": 0.0, "hessian": 0.0, "loss gradient": 0.0, "surface gradient": 0.0}
    for p in DERIVATIVE_PARAMS:
        v = np.linspace(-6 * p.sigma, 6 * p.sigma, 2001)
        worst["f'"] = max(worst["f'"], _global_rel((score(v + H, p) - score(v - H, p)) / (2 * H), f_prime(v, p)))
        worst["f''"] = max(worst["f''"], _global_rel((f_prime(v + H, p) - f_prime(v - H, p)) / (2 * H),
                                                     f_double_prime(v, p)))
        # residual vectors drawn from the same dense grid; each coordinate is separable
        e = v.copy()
        worst["loss gradient"] = max(worst["loss gradient"], _global_rel(
            np.array([(krsl_of_error(np.r_[ei + H, e[:4]], p) - krsl_of_error(np.r_[ei - H, e[:4]], p)) / (2 * H)
                      for ei in e]) * 5 / e.size,
            _loss_gradient(e, p)))
        worst["hessian"] = max(worst["hessian"], _global_rel(
            (_loss_gradient(e + H, p) - _loss_gradient(e - H, p)) / (2 * H), krsl_hessian_diag(e, p)))

    gen = np.random.default_rng(7)
    X = gen.standard_normal((2000, 2))
    d = X @ np.array([10.0, 10.0]) + gen.standard_normal(2000)
    d[:100] += gen.normal(0, 30, 100)
    data = RegressionDataset(X, d)
    p = KrslParams(2.0, 10.0)
    axis = np.linspace(5.0, 15.0, 21)
    grads, fds = [], []
    for w1 in axis:
        for w2 in axis:
            w = np.array([w1, w2])
            grads.append(surface_gradient(w, data, p))
            fds.append([(performance_surface(w + h, data, p) - performance_surface(w - h, data, p)) / (2 * H)
                        for h in H * np.eye(2)])
    worst["surface gradient"] = _global_rel(np.array(fds), np.array(grads))
    ok = all(value < RTOL for value in worst.values())
    criterion(7, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (each < {RTOL:g})")


# ---------------------------------------------------------------------------
# 8. steady-state advantage over LMS at matched initial speed

def _mixture_fisher_product(noise: MixtureOutliers) -> float:
    """``var(v) * I(v)`` for a Gaussian mixture density.

    At equal initial convergence rate and small step sizes, the steady-state
    ratio LMS / (any score-function filter) cannot exceed this quantity.
    """
    s_in, s_out, c = noise.inner.std, noise.outlier.std, noise.c

    def pdf(v):
        return (1 - c) * stats.norm.pdf(v, scale=s_in) + c * stats.norm.pdf(v, scale=s_out)

    def dpdf(v):
        return -v * ((1 - c) * stats.norm.pdf(v, scale=s_in) / s_in ** 2
                     + c * stats.norm.pdf(v, scale=s_out) / s_out ** 2)

    fisher = integrate.quad(lambda v: dpdf(v) ** 2 / pdf(v), -60, 60, limit=200)[0]
    return noise.variance * fisher


def test_criterion_8_outperforms_lms(criterion):
    job = parse_experiment(load_document("preset:fig6a_gaussian")["experiment"])
    cfg = job.config
    mk = next(a for a in cfg.algorithms if a.label == "MKRSL")
    initial_wep = float(cfg.true_weights @ cfg.true_weights)
    eta_lms = matched_step_size(mk, "lms", {}, cfg.noise, initial_wep, cfg.input.variance)
    cfg = replace(cfg, algorithms=(mk, AlgorithmSpec("lms", eta_lms, {}, "LMS")))
    assert cfg.runs == 100 and isinstance(cfg.noise, MixtureOutliers)
    assert (cfg.noise.c, cfg.noise.outlier.variance) == (0.06, 15.0)
    rec = run_experiment(cfg)
    ratio = rec["LMS"].steady_wep / rec["MKRSL"].steady_wep
    ceiling = _mixture_fisher_product(cfg.noise)
    # The required factor of 5 is not reachable for this noise: the ceiling
    # above (about 1.59) bounds every score function at matched speed.
    criterion(8, ratio >= 5.0,
              f"WEP LMS/MKRSL = {ratio:.3f} (required >= 5; matched eta_LMS = {eta_lms:.5f}; "
              f"var(v)*I(v) ceiling = {ceiling:.3f})")


# ---------------------------------------------------------------------------
# 9. outlier-probability sweep

def test_criterion_9_outlier_sweep(criterion):
    doc = load_document("preset:fig8_outliers")
    cfg = parse_experiment(doc["experiment"]).config
    probabilities = [0.0, 0.1, 0.2, 0.3]
    sweep = outlier_robustness_sweep(cfg, [15.0], probabilities, label="MKRSL")
    first, last = sweep.wep[0, 0], sweep.wep[0, -1]
    ok = abs(first - 0.0096) <= 0.3 * 0.0096 and abs(last - 0.013) <= 0.3 * 0.013
    row = ", ".join(f"c={c:g}: {w:.5f}" for c, w in zip(probabilities, sweep.wep[0]))
    criterion(9, ok, f"{row} (targets 0.0096 and 0.013, +-30%)")


# ---------------------------------------------------------------------------
# 10. replay reproducibility of every CLI command

REPLAY_DOCS = {
    "run": {"schema": "krsl-config/1", "experiment": {
        "true_weights": [0.5, -0.5, 0.25], "iterations": 1500, "runs": 30, "seed": 10,
        "noise": {"kind": "mixture", "c": 0.06, "inner": {"kind": "gaussian", "variance": 1.0},
                  "outlier": {"kind": "gaussian", "variance": 15.0}},
        "algorithms": [{"algo": "mkrsl", "step_size": 0.004, "params": {"sigma": 2.0, "lam": 5.0}},
                       {"algo": "lms", "step_size": 0.004}, {"algo": "gmcc", "step_size": 0.004}],
        "steady_state_window": 500, "compare_theory": ["mkrsl", "lms"]},
        "outlier_sweep": {"outlier_variances": [15.0, 60.0], "probabilities": [0.0, 0.3]}},
    "theory": "preset:table2_laplace",
    "surface": {"schema": "krsl-config/1", "surface": {
        "true_weights": [1.0, 2.0], "params": {"sigma": 1.0, "lam": 4.0}, "samples": 500, "seed": 3,
        "grid": [[-2, 4, 25], [-1, 5, 25]]}},
    "bounds": {"schema": "krsl-config/1", "bounds": {
        "N": 20, "M": 15, "lam": 8.0, "sigma": 2.0, "eps_v": 0.05, "c": 0.5,
        "validation": {"instances": 20, "seed": 2, "random_parameters": True}}},
}


def _emit(tmp_path, command, source, out, *extra):
    if not isinstance(source, str):
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(source))
        source = str(path)
    assert main([command, source, "--out", str(out), *extra]) == EXIT_OK
    files = json.loads((out / "manifest.json").read_text())["files"]
    for name, digest in files.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    return files


def test_criterion_10_cli_replay(criterion, tmp_path):
    parts, ok = [], True
    for command, source in REPLAY_DOCS.items():
        first = _emit(tmp_path, command, source, tmp_path / f"{command}_a")
        second = _emit(tmp_path, command, source, tmp_path / f"{command}_b")
        threaded = _emit(tmp_path, command, source, tmp_path / f"{command}_c", "--threads", "2")
        same = first == second == threaded and len(first) > 0
        ok &= same
        parts.append(f"{command} {len(first)} files {'identical' if same else 'DIFFER'}")
    criterion(10, ok, "; ".join(parts))
