"""
Online adaptive filters
=======================

Every filter here belongs to the class

    W(i+1) = W(i) + eta * f(e(i)) * X(i),    e(i) = d(i) - W(i)^T X(i)

and differs only in the score ``f``.  MKRSL is the contribution; LMS, MCC,
the sign algorithm (SA), least mean mixed-norm (LMMN), least mean M-estimate
(LMM) and generalized MCC (GMCC) are comparison baselines in their usual
textbook forms.

Score functions accept scalars or arrays so the Monte Carlo harness can run
many independent filters in lock-step with the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, NamedTuple

import numpy as np

from .exceptions import DimensionMismatchError, DivergenceError, ParameterDomainError, RejectedSampleError
from .similarity import KrslParams, gaussian_kernel


def mkrsl_score(e, params: KrslParams):
    """``f(e) = exp(lam (1 - kappa(e))) kappa(e) e``; odd in ``e``."""
    return mkrsl_variable_step(e, 1.0, params) * np.asarray(e, dtype=float)


def mkrsl_variable_step(e, eta, params: KrslParams):
    """Error-dependent step size ``eta * exp(lam (1 - kappa(e))) kappa(e)``.

    Equals ``eta`` at ``e = 0`` and vanishes as ``|e|`` grows.  For
    ``lam > 1`` the maximum sits away from the origin, at the error where
    ``kappa(e) = 1/lam``.
    """
    if not eta > 0:
        raise ParameterDomainError(f"step size must be positive, got {eta!r}")
    k = gaussian_kernel(e, params.sigma)
    return eta * np.exp(params.lam * (1.0 - k)) * k


def mcc_variable_step(e, eta, sigma):
    """Step size of the MCC filter, ``eta * kappa(e)``."""
    if not eta > 0:
        raise ParameterDomainError(f"step size must be positive, got {eta!r}")
    return eta * gaussian_kernel(e, sigma)


# Each algorithm supplies gain(e, **params) with score f(e) = gain(e) * e.
# Gains are taken at their limit where e = 0 (0 when the limit is infinite).

def _safe_abs(e):
    a = np.abs(e)
    return np.where(a > 0, a, 1.0)


def _gain_mkrsl(e, sigma, lam):
    k = np.exp(-(e * e) / (2.0 * sigma * sigma))
    return np.exp(lam * (1.0 - k)) * k


def _gain_mcc(e, sigma):
    return np.exp(-(e * e) / (2.0 * sigma * sigma))


def _gain_lms(e):
    return np.ones_like(e)


def _gain_sa(e):
    return np.where(e != 0, 1.0 / _safe_abs(e), 0.0)


def _gain_lmmn(e, delta):
    return delta + (1.0 - delta) * e * e


def _gain_lmm(e, threshold):
    return np.minimum(1.0, threshold / _safe_abs(e))


def _gain_gmcc(e, alpha, lam):
    a = _safe_abs(e)
    g = np.exp(-lam * a ** alpha) * a ** (alpha - 2.0)
    if alpha == 2.0:
        return g
    return np.where(e != 0, g, 0.0)


def _positive(name):
    def check(v):
        if not (np.isfinite(v) and v > 0):
            raise ParameterDomainError(f"{name} must be positive, got {v!r}")
    return check


def _unit_interval(v):
    if not 0.0 <= v <= 1.0:
        raise ParameterDomainError(f"LMMN mixing delta must lie in [0, 1], got {v!r}")


def _gmcc_alpha(v):
    if not (np.isfinite(v) and v >= 2.0):
        raise ParameterDomainError(f"GMCC shape alpha must be >= 2, got {v!r}")


def _mkrsl_lam(v):
    KrslParams(1.0, v)


class Algorithm(NamedTuple):
    gain: Callable
    checks: Mapping[str, Callable]
    defaults: Mapping[str, float]


ALGORITHMS: Mapping[str, Algorithm] = MappingProxyType({
    "mkrsl": Algorithm(_gain_mkrsl, {"sigma": _positive("sigma"), "lam": _mkrsl_lam}, {}),
    "mcc": Algorithm(_gain_mcc, {"sigma": _positive("sigma")}, {}),
    "lms": Algorithm(_gain_lms, {}, {}),
    "sa": Algorithm(_gain_sa, {}, {}),
    "lmmn": Algorithm(_gain_lmmn, {"delta": _unit_interval}, {"delta": 0.5}),
    "lmm": Algorithm(_gain_lmm, {"threshold": _positive("threshold")}, {"threshold": 2.0}),
    "gmcc": Algorithm(_gain_gmcc, {"alpha": _gmcc_alpha, "lam": _positive("GMCC lam")}, {"alpha": 4.0, "lam": 0.1}),
})


def algorithm_params(algo: str, params=None) -> Mapping[str, float]:
    """Validate and complete the parameter record of ``algo``.

    ``params`` may be a mapping or, for MKRSL/MCC, a :class:`KrslParams`.
    Missing optional entries take the documented defaults; unknown keys are
    rejected.
    """
    try:
        spec = ALGORITHMS[algo]
    except KeyError:
        raise ParameterDomainError(f"unknown algorithm {algo!r}; known: {sorted(ALGORITHMS)}") from None
    if isinstance(params, KrslParams):
        params = {"sigma": params.sigma, "lam": params.lam}
        if algo == "mcc":
            params.pop("lam")
    merged = dict(spec.defaults)
    merged.update(params or {})
    unknown = set(merged) - set(spec.checks)
    if unknown:
        raise ParameterDomainError(f"unknown parameter(s) for {algo}: {sorted(unknown)}")
    missing = set(spec.checks) - set(merged)
    if missing:
        raise ParameterDomainError(f"missing parameter(s) for {algo}: {sorted(missing)}")
    out = {}
    for name, check in spec.checks.items():
        value = float(merged[name])
        check(value)
        out[name] = value
    return MappingProxyType(out)


def gain(algo: str, e, params: Mapping[str, float]):
    """``f(e) / e`` for ``algo``, elementwise."""
    return ALGORITHMS[algo].gain(np.asarray(e, dtype=float), **params)


def score(algo: str, e, params: Mapping[str, float]):
    """The score ``f(e)`` of ``algo``, elementwise."""
    e = np.asarray(e, dtype=float)
    return gain(algo, e, params) * e


@dataclass(frozen=True)
class FilterState:
    """Weights plus everything needed to take the next step.

    ``step_size`` is the gain ``eta`` that multiplies ``f(e) X`` directly;
    for MKRSL this is ``mu / sigma**2`` in gradient-descent terms.
    """

    weights: np.ndarray
    algo: str
    step_size: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=1)
        if w.ndim != 1 or w.size < 1:
            raise DimensionMismatchError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)):
            raise ParameterDomainError("weights must be finite")
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ParameterDomainError(f"step size must be positive, got {self.step_size!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "step_size", float(self.step_size))
        object.__setattr__(self, "params", algorithm_params(self.algo, self.params))

    def __reduce__(self):
        return FilterState, (np.array(self.weights), self.algo, self.step_size, dict(self.params))

    @classmethod
    def zeros(cls, m: int, algo: str, step_size: float, params=None) -> "FilterState":
        """A length-``m`` filter starting from the null weight vector."""
        return cls(np.zeros(m), algo, step_size, params or {})

    @property
    def m(self) -> int:
        return self.weights.size

    def with_weights(self, weights) -> "FilterState":
        return FilterState(weights, self.algo, self.step_size, self.params)


class StepOutcome(NamedTuple):
    error: float
    effective_step: float
    weights: np.ndarray


def filter_step(state: FilterState, x, d) -> StepOutcome:
    """One adaptation step; ``state`` is not modified.

    Raises
    ------
    DimensionMismatchError
        If ``x`` does not have ``state.m`` entries.
    RejectedSampleError
        If ``x`` or ``d`` contains a non-finite value.
    DivergenceError
        If the update would make the weights non-finite.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (state.m,):
        raise DimensionMismatchError(f"input vector has shape {x.shape}, expected ({state.m},)")
    d = float(d)
    if not (np.all(np.isfinite(x)) and np.isfinite(d)):
        raise RejectedSampleError("non-finite input sample")
    e = d - float(state.weights @ x)
    g = float(gain(state.algo, e, state.params))
    with np.errstate(over="ignore", invalid="ignore"):
        w = state.weights + (state.step_size * g * e) * x
    if not np.all(np.isfinite(w)):
        raise DivergenceError(f"update at error {e!r} produced non-finite weights")
    w.setflags(write=False)
    return StepOutcome(e, state.step_size * g, w)


def run_filter(state: FilterState, samples: Iterable) -> list[StepOutcome]:
    """Apply :func:`filter_step` over a sequence of ``(x, d)`` pairs."""
    trajectory = []
    for x, d in samples:
        out = filter_step(state, x, d)
        trajectory.append(out)
        state = state.with_weights(out.weights)
    return trajectory


def update_many(algo: str, step_size: float, params, W, X, d):
    """Advance many independent filters by one step, in place.

    ``W`` and ``X`` have shape ``(runs, m)`` and ``d`` shape ``(runs,)``.
    Returns the output errors ``d - W X`` computed before the update.  Rows
    that become non-finite are left as they are; the caller decides how to
    treat them.
    """
    e = d - np.einsum("ij,ij->i", W, X)
    step = step_size * gain(algo, e, params) * e
    W += step[:, None] * X
    return e
