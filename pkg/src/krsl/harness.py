"""
Monte Carlo experiments
=======================

System identification of ``d(i) = W0^T X(i) + v(i)`` by a roster of adaptive
filters, averaged over independent runs, with optional comparison against
the theoretical transient and steady-state predictions.

Runs are simulated in fixed blocks of :data:`BLOCK_RUNS` filters advanced in
lock-step; each run draws its input and noise from its own random stream
(see :class:`krsl.noise.RngSpec`), so results are bit-identical for a given
seed regardless of block scheduling or the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (ConfigError, DimensionMismatchError, EmptyDataError, ParameterDomainError,
                         StabilityViolationError)
from .filters import algorithm_params, gain, update_many
from .noise import Gaussian, MixtureOutliers, NoiseDensity, RngSpec
from .similarity import KrslParams
from .theory import (TheoryConfig, classical_lms_curve, classical_lms_emse, steady_state_emse_exact,
                     steady_state_emse_taylor, transient_curve)

BLOCK_RUNS = 25
CHUNK = 4096
INPUT_SIGNAL, NOISE_SIGNAL = 0, 1
INPUT_STRUCTURES = ("tapped_delay", "independent")


@dataclass(frozen=True)
class AlgorithmSpec:
    """One filter of the roster; ``label`` defaults to ``algo`` and must be unique."""

    algo: str
    step_size: float
    params: Mapping[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ParameterDomainError(f"step size must be positive, got {self.step_size!r}")
        object.__setattr__(self, "step_size", float(self.step_size))
        object.__setattr__(self, "params", algorithm_params(self.algo, self.params))
        if not self.label:
            object.__setattr__(self, "label", self.algo)

    def __reduce__(self):
        return AlgorithmSpec, (self.algo, self.step_size, dict(self.params), self.label)

    def to_dict(self):
        return {"algo": self.algo, "label": self.label, "step_size": self.step_size, "params": dict(self.params)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a Monte Carlo experiment.

    Attributes
    ----------
    true_weights : array
        The unknown system ``W0``; filters start from the null vector.
    noise : NoiseDensity
        Measurement noise law.
    algorithms : tuple of AlgorithmSpec
    iterations : int
        Adaptation steps per run.
    runs : int
        Independent Monte Carlo runs.
    seed : int
    steady_state_window : int
        Trailing iterations averaged for the steady-state estimates.
    input : NoiseDensity
        Law of the white input samples, zero-mean unit-variance Gaussian by default.
    input_structure : {"tapped_delay", "independent"}
        Regressors taken from a tapped delay line over one white sequence, or
        drawn afresh at every step.
    record_emse : bool
        Also record the squared a-priori error ``(W0 - W(i))^T X(i)``.
    """

    true_weights: np.ndarray
    noise: NoiseDensity
    algorithms: tuple
    iterations: int
    runs: int
    seed: int = 0
    steady_state_window: int = 1000
    input: NoiseDensity = Gaussian(1.0)
    input_structure: str = "tapped_delay"
    record_emse: bool = True

    def __post_init__(self):
        w0 = np.array(self.true_weights, dtype=float, ndmin=1)
        if w0.ndim != 1 or w0.size < 1 or not np.all(np.isfinite(w0)):
            raise DimensionMismatchError("true_weights must be a non-empty finite vector")
        w0.setflags(write=False)
        object.__setattr__(self, "true_weights", w0)
        algs = tuple(self.algorithms)
        if not algs:
            raise EmptyDataError("the algorithm roster is empty")
        labels = [a.label for a in algs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"algorithm labels must be unique, got {labels}")
        object.__setattr__(self, "algorithms", algs)
        if int(self.iterations) < 1 or int(self.runs) < 1:
            raise ParameterDomainError("iterations and runs must be positive")
        if not 1 <= int(self.steady_state_window) <= int(self.iterations):
            raise ParameterDomainError("steady_state_window must lie in [1, iterations]")
        if self.input_structure not in INPUT_STRUCTURES:
            raise ConfigError(f"input_structure must be one of {INPUT_STRUCTURES}")
        RngSpec(self.seed)

    @property
    def m(self) -> int:
        return self.true_weights.size

    def with_noise(self, noise: NoiseDensity) -> "ExperimentConfig":
        return replace(self, noise=noise)


@dataclass
class ConvergenceRecord:
    """Run-averaged learning curves and steady-state estimates of one filter.

    ``wep[i]`` is the mean of ``||W0 - W(i)||**2`` and ``emse[i]`` the mean
    of ``((W0 - W(i))^T X(i))**2``, both before the ``i``-th update, so that
    ``wep[0] = ||W0||**2``.  Steady-state figures average the trailing
    window of each run, then summarise across runs.
    """

    label: str
    algo: str
    wep: np.ndarray
    emse: np.ndarray | None
    steady_wep_runs: np.ndarray
    steady_emse_runs: np.ndarray | None
    diverged_runs: tuple

    @property
    def runs_used(self) -> int:
        return self.steady_wep_runs.size

    @property
    def steady_wep(self) -> float:
        return float(np.mean(self.steady_wep_runs)) if self.runs_used else math.nan

    @property
    def steady_wep_std(self) -> float:
        return float(np.std(self.steady_wep_runs)) if self.runs_used else math.nan

    @property
    def steady_emse(self) -> float:
        if self.steady_emse_runs is None or not self.runs_used:
            return math.nan
        return float(np.mean(self.steady_emse_runs))

    @property
    def steady_emse_std(self) -> float:
        if self.steady_emse_runs is None or not self.runs_used:
            return math.nan
        return float(np.std(self.steady_emse_runs))

    def steady_emse_interval(self, z: float = 1.96) -> tuple:
        """Normal-approximation confidence interval of the mean steady-state EMSE."""
        half = z * self.steady_emse_std / math.sqrt(max(self.runs_used, 1))
        return self.steady_emse - half, self.steady_emse + half


# ---------------------------------------------------------------------------
# simulation core

def _regressors(cfg, draw_x, carry, n):
    """Regressor rows for ``n`` steps of every run in the block, shape ``(B, n, m)``."""
    m = cfg.m
    if cfg.input_structure == "independent":
        return np.stack([dx(n * m).reshape(n, m) for dx in draw_x]), carry
    fresh = np.stack([dx(n) for dx in draw_x])
    seq = np.concatenate([carry, fresh], axis=1)
    # row t holds (x(t), x(t-1), ..., x(t-m+1))
    win = np.lib.stride_tricks.sliding_window_view(seq, m, axis=1)[:, :, ::-1]
    return np.ascontiguousarray(win), seq[:, seq.shape[1] - (m - 1):]


def _simulate_block(cfg: ExperimentConfig, runs: range):
    """Simulate the runs in ``runs``; returns per-algorithm per-run curves."""
    B, m, n_it = len(runs), cfg.m, cfg.iterations
    rngs = [RngSpec(cfg.seed, r) for r in runs]
    draw_x = [cfg.input.sampler(g, INPUT_SIGNAL) for g in rngs]
    draw_v = [cfg.noise.sampler(g, NOISE_SIGNAL) for g in rngs]
    carry = np.stack([dx(m - 1) for dx in draw_x]) if cfg.input_structure == "tapped_delay" else None
    W = [np.zeros((B, m)) for _ in cfg.algorithms]
    wep = np.empty((len(cfg.algorithms), B, n_it))
    emse = np.empty_like(wep) if cfg.record_emse else None
    w0 = cfg.true_weights
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, n_it, CHUNK):
            n = min(CHUNK, n_it - start)
            X, carry = _regressors(cfg, draw_x, carry, n)
            v = np.stack([dv(n) for dv in draw_v])
            d = X @ w0 + v
            for a, spec in enumerate(cfg.algorithms):
                Wa = W[a]
                for t in range(n):
                    Xt = X[:, t, :]
                    err = w0 - Wa
                    wep[a, :, start + t] = np.einsum("ij,ij->i", err, err)
                    if emse is not None:
                        ea = np.einsum("ij,ij->i", err, Xt)
                        emse[a, :, start + t] = ea * ea
                    update_many(spec.algo, spec.step_size, spec.params, Wa, Xt, d[:, t])
    final_ok = np.stack([np.all(np.isfinite(Wa), axis=1) for Wa in W])
    return wep, emse, final_ok


def _block_ranges(runs):
    return [range(s, min(s + BLOCK_RUNS, runs)) for s in range(0, runs, BLOCK_RUNS)]


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> dict[str, ConvergenceRecord]:
    """Run the Monte Carlo experiment described by ``cfg``.

    Parameters
    ----------
    cfg : ExperimentConfig
    workers : int
        Worker processes; blocks are reduced in a fixed order, so the
        output does not depend on this value.

    Returns
    -------
    dict of str to ConvergenceRecord
        One record per algorithm label, in roster order.  Runs whose weights
        became non-finite are excluded from every average and listed in
        ``diverged_runs``.
    """
    blocks = _block_ranges(int(cfg.runs))
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_block, [cfg] * len(blocks), blocks))
    else:
        results = [_simulate_block(cfg, b) for b in blocks]

    n_alg, win = len(cfg.algorithms), cfg.steady_state_window
    wep_sum = np.zeros((n_alg, cfg.iterations))
    emse_sum = np.zeros_like(wep_sum) if cfg.record_emse else None
    used = np.zeros(n_alg, dtype=int)
    steady_w = [[] for _ in range(n_alg)]
    steady_e = [[] for _ in range(n_alg)]
    diverged = [[] for _ in range(n_alg)]
    for block, (wep, emse, ok) in zip(blocks, results):
        for a in range(n_alg):
            good = ok[a] & np.all(np.isfinite(wep[a]), axis=1)
            diverged[a].extend(r for r, g in zip(block, good) if not g)
            used[a] += int(good.sum())
            wep_sum[a] += wep[a, good].sum(axis=0)
            steady_w[a].append(wep[a, good, -win:].mean(axis=1))
            if emse is not None:
                emse_sum[a] += emse[a, good].sum(axis=0)
                steady_e[a].append(emse[a, good, -win:].mean(axis=1))

    records = {}
    for a, spec in enumerate(cfg.algorithms):
        denom = used[a] if used[a] else math.nan
        records[spec.label] = ConvergenceRecord(
            label=spec.label,
            algo=spec.algo,
            wep=wep_sum[a] / denom,
            emse=None if emse_sum is None else emse_sum[a] / denom,
            steady_wep_runs=np.concatenate(steady_w[a]),
            steady_emse_runs=np.concatenate(steady_e[a]) if cfg.record_emse else None,
            diverged_runs=tuple(diverged[a]),
        )
    return records


# ---------------------------------------------------------------------------
# theory comparison

def relative_deviation(curve, reference, burn_in: int = 0) -> np.ndarray:
    """Pointwise ``|curve - reference| / reference`` from index ``burn_in`` on."""
    curve = np.asarray(curve, dtype=float)
    reference = np.asarray(reference, dtype=float)
    n = min(curve.size, reference.size)
    if burn_in >= n:
        raise EmptyDataError(f"burn-in {burn_in} leaves no points to compare")
    return np.abs(curve[burn_in:n] - reference[burn_in:n]) / reference[burn_in:n]


@dataclass
class TheoryComparison:
    label: str
    theory_wep: np.ndarray
    deviation: np.ndarray
    burn_in: int
    theory_emse: float
    theory_emse_taylor: float
    simulated_emse: float
    simulated_emse_interval: tuple

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))

    @property
    def emse_relative_error(self) -> float:
        return abs(self.simulated_emse - self.theory_emse) / self.theory_emse


def theory_config_for(cfg: ExperimentConfig, label: str, **quadrature) -> TheoryConfig:
    """The theory configuration matching one MKRSL filter of an experiment."""
    spec = _find(cfg, label)
    if spec.algo != "mkrsl":
        raise ConfigError(f"theory is available for MKRSL filters, {label!r} is {spec.algo}")
    _check_white_gaussian_input(cfg)
    return TheoryConfig(KrslParams(spec.params["sigma"], spec.params["lam"]), spec.step_size, m=cfg.m,
                        input_variance=cfg.input.variance, noise=cfg.noise, **quadrature)


def _find(cfg, label):
    for spec in cfg.algorithms:
        if spec.label == label:
            return spec
    raise ConfigError(f"no algorithm labelled {label!r} in the roster")


def _check_white_gaussian_input(cfg):
    if not isinstance(cfg.input, Gaussian):
        raise ConfigError("theoretical predictions assume Gaussian input")


def compare_with_theory(record: ConvergenceRecord, cfg: ExperimentConfig, theory: TheoryConfig | None = None,
                        burn_in: int = 100) -> TheoryComparison:
    """Compare a simulated learning curve with its theoretical prediction.

    MKRSL filters use the energy-conservation recursion and the exact
    steady-state EMSE; LMS filters use the classical Gaussian-input
    recursion.  If ``theory`` is given it must describe the same filter as
    the experiment, otherwise :class:`ConfigError` is raised.
    """
    spec = _find(cfg, record.label)
    _check_white_gaussian_input(cfg)
    w_init = float(cfg.true_weights @ cfg.true_weights)
    n = cfg.iterations
    if spec.algo == "mkrsl":
        expected = theory_config_for(cfg, record.label)
        if theory is None:
            theory = expected
        elif (theory.params, theory.eta, theory.m, theory.input_variance, theory.noise) != (
                expected.params, expected.eta, expected.m, expected.input_variance, expected.noise):
            raise ConfigError("theory configuration does not describe the simulated filter")
        curve = transient_curve(theory, n - 1, w_init)
        s = steady_state_emse_exact(theory)
        try:
            s_taylor = steady_state_emse_taylor(theory)
        except StabilityViolationError:
            s_taylor = math.nan
    elif spec.algo == "lms":
        if theory is not None:
            raise ConfigError("LMS predictions take no theory configuration")
        if not math.isfinite(cfg.noise.variance):
            raise ConfigError("classical LMS theory needs finite noise variance")
        curve = classical_lms_curve(spec.step_size, cfg.m, cfg.input.variance, cfg.noise.variance, n - 1, w_init)
        s = s_taylor = classical_lms_emse(spec.step_size, cfg.m, cfg.input.variance, cfg.noise.variance)
    else:
        raise ConfigError(f"no theoretical prediction for {spec.algo}")
    sim = record.steady_emse if record.emse is not None else record.steady_wep * cfg.input.variance
    interval = record.steady_emse_interval() if record.emse is not None else (math.nan, math.nan)
    return TheoryComparison(record.label, curve, relative_deviation(record.wep, curve, burn_in), burn_in,
                            s, s_taylor, sim, interval)


# ---------------------------------------------------------------------------
# matched convergence speed

def initial_slope(algo: str, params, noise: NoiseDensity, initial_wep: float, input_variance: float = 1.0,
                  samples: int = 1_000_000, seed: int = 0) -> float:
    """``E[e_a f(e_a + v)] / E[e_a**2]`` with ``e_a ~ N(0, initial_wep * input_variance)``.

    Under white Gaussian input the weight error power initially shrinks by
    ``2 eta input_variance`` times this factor per step, so two filters
    with equal ``eta * initial_slope`` start equally fast.  Estimated by Monte
    Carlo on a fixed stream, which works for every score in the registry.
    """
    p = algorithm_params(algo, params)
    x = initial_wep * input_variance
    rng = RngSpec(seed, 0)
    ea = math.sqrt(x) * rng.generator(0).standard_normal(samples)
    v = noise.sampler(rng, 1)(samples)
    e = ea + v
    return float(np.mean(ea * gain(algo, e, p) * e) / x)


def matched_step_size(reference: AlgorithmSpec, algo: str, params, noise: NoiseDensity, initial_wep: float,
                      input_variance: float = 1.0, **mc) -> float:
    """Step size giving ``algo`` the same initial convergence rate as ``reference``."""
    target = reference.step_size * initial_slope(reference.algo, reference.params, noise, initial_wep,
                                                 input_variance, **mc)
    return target / initial_slope(algo, params, noise, initial_wep, input_variance, **mc)


# ---------------------------------------------------------------------------
# outlier robustness

@dataclass
class RobustnessSweep:
    """Steady-state WEP of one filter over a grid of outlier settings.

    ``wep[i, j]`` belongs to ``outlier_variances[i]`` and ``probabilities[j]``.
    """

    label: str
    outlier_variances: np.ndarray
    probabilities: np.ndarray
    wep: np.ndarray
    wep_std: np.ndarray
    diverged: np.ndarray

    def growth_with_probability(self) -> np.ndarray:
        """Ratio of the WEP at the largest to that at the smallest probability, per variance."""
        return self.wep[:, -1] / self.wep[:, 0]

    def increases_with_variance(self, tol: float = 0.0) -> np.ndarray:
        """Per probability, the adjacent variance pairs where WEP grew by more than ``tol`` (relative)."""
        return np.sum(self.wep[1:] > self.wep[:-1] * (1 + tol), axis=0)


def outlier_robustness_sweep(base: ExperimentConfig, outlier_variances: Sequence[float],
                             probabilities: Sequence[float], label: str | None = None,
                             workers: int = 1) -> RobustnessSweep:
    """Steady-state WEP over a grid of Gaussian outlier variances and probabilities.

    ``base.noise`` must be a :class:`MixtureOutliers`; its inner component
    is kept and the outlier component replaced by zero-mean Gaussian noise of
    each listed variance.  Every cell reuses ``base.seed`` (common random
    numbers), which sharpens comparisons across the grid.
    """
    if not isinstance(base.noise, MixtureOutliers):
        raise ConfigError("the base experiment must use mixture noise")
    label = label or base.algorithms[0].label
    spec = _find(base, label)
    cfg0 = replace(base, algorithms=(spec,))
    sv = np.asarray(outlier_variances, dtype=float)
    cs = np.asarray(probabilities, dtype=float)
    if sv.size == 0 or cs.size == 0:
        raise EmptyDataError("empty sweep grid")
    wep = np.empty((sv.size, cs.size))
    std = np.empty_like(wep)
    div = np.zeros(wep.shape, dtype=int)
    for i, var in enumerate(sv):
        for j, c in enumerate(cs):
            noise = MixtureOutliers(float(c), base.noise.inner, Gaussian(float(var)))
            rec = run_experiment(cfg0.with_noise(noise), workers=workers)[label]
            wep[i, j], std[i, j], div[i, j] = rec.steady_wep, rec.steady_wep_std, len(rec.diverged_runs)
    return RobustnessSweep(label, sv, cs, wep, std, div)
