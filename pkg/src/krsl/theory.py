"""
Mean-square convergence theory for MKRSL
========================================

Predictions for filters ``W(i+1) = W(i) + eta f(e(i)) X(i)`` driven by white
input with covariance ``sigma_x**2 I`` and i.i.d. noise ``v``:

* ``h_G(x) = E[e_a f(e_a + v)] / x`` and ``h_U(x) = E[f(e_a + v)**2]`` with
  ``e_a ~ N(0, x)``, evaluated by tensor-product quadrature;
* the weight-error-power recursion

      WEP(i+1) = WEP(i) - 2 eta sx2 h_G(sx2 WEP(i)) WEP(i)
                 + eta**2 sx2 m h_U(sx2 WEP(i));

* the steady-state EMSE ``S``, either as the root of
  ``S = (eta/2) Tr(R) h_U(S) / h_G(S)`` or from the second-order Taylor
  approximation

      S ~ eta Tr(R) E[f^2(v)] / (2 E[f'(v)] - eta Tr(R) E[f(v) f''(v) + f'(v)^2]).

Quadrature
----------
The score ``f`` and its derivatives vanish like ``exp(lam) kappa(e)`` once
``|e|`` exceeds a few kernel widths, so integrals over the noise only need the
window ``|v| <= reach + max|e_a|`` with ``reach = sigma sqrt(2 (lam + 60))``.
This is what makes heavy-tailed (Cauchy) noise tractable.  Inside that window
continuous laws use composite Gauss-Legendre panels no wider than half the
smaller of the kernel width and the noise scale, with a breakpoint at the
Laplace cusp; sine-wave noise uses the trapezoidal rule in the phase (spectral
for periodic integrands); binary noise is summed exactly.  The Gaussian
a priori error uses Gauss-Hermite nodes while its spread is small compared
with the kernel, composite Gauss-Legendre otherwise.

Every public evaluation can be repeated on a refined rule (twice the nodes,
half the panel width); a relative change above ``rtol`` raises
:class:`~krsl.exceptions.QuadratureAccuracyError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache, singledispatch

import numpy as np
from scipy.optimize import brentq

from .exceptions import NoSolutionError, ParameterDomainError, QuadratureAccuracyError, StabilityViolationError
from .noise import Binary, Cauchy, Gaussian, Laplace, MixtureOutliers, NoiseDensity, SineWave, Uniform
from .similarity import KrslParams

# kappa <= exp(-(lam + _REACH_MARGIN)) beyond the reach, so f, f', f'' are below ~1e-26 there
_REACH_MARGIN = 60.0
# below this spread (relative to sigma**2) h_G is taken at its x -> 0 limit E[f'(v)]
_TINY_X = 1e-14


def score(v, params: KrslParams):
    """MKRSL score ``f(v) = exp(lam (1 - kappa(v))) kappa(v) v``."""
    v = np.asarray(v, dtype=float)
    k = np.exp(-v * v / (2.0 * params.sigma ** 2))
    return np.exp(params.lam * (1.0 - k)) * k * v


def f_prime(v, params: KrslParams):
    """First derivative of the MKRSL score.

    ``exp(lam (1 - k)) k (1 + lam u k - u)`` with ``k = kappa(v)`` and
    ``u = v**2 / sigma**2``.  Equals 1 at the origin.
    """
    v = np.asarray(v, dtype=float)
    u = v * v / params.sigma ** 2
    k = np.exp(-0.5 * u)
    return np.exp(params.lam * (1.0 - k)) * k * (1.0 + params.lam * u * k - u)


def f_double_prime(v, params: KrslParams):
    """Second derivative of the MKRSL score.

    ``exp(lam (1 - k)) k [lam**2 v**3/s**4 k**2 + 3 lam v (s**2 - v**2)/s**4 k
    + (v**3 - 3 v s**2)/s**4]``.  The leading term carries ``k**2``, i.e. a
    Gaussian kernel of width ``sigma / sqrt(2)``.
    """
    v = np.asarray(v, dtype=float)
    lam = params.lam
    s2 = params.sigma ** 2
    k = np.exp(-v * v / (2.0 * s2))
    v3 = v ** 3
    bracket = lam * lam * v3 * k * k + 3.0 * lam * (s2 * v - v3) * k + (v3 - 3.0 * v * s2)
    return np.exp(lam * (1.0 - k)) * k * bracket / (s2 * s2)


def score_reach(params: KrslParams) -> float:
    """Error magnitude beyond which ``f``, ``f'`` and ``f''`` are negligible."""
    return params.sigma * math.sqrt(2.0 * (params.lam + _REACH_MARGIN))


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolution of the quadrature rules.

    ``panel_width`` is measured in units of ``min(kernel sigma, noise scale)``;
    ``window_std`` bounds continuous noise with finite variance and
    ``cauchy_window`` (in scale units) bounds Cauchy noise.
    """

    hermite_nodes: int = 64
    panel_nodes: int = 8
    panel_width: float = 0.5
    window_std: float = 12.0
    cauchy_window: float = 1e4
    sine_nodes: int = 256
    rtol: float = 1e-6

    def refined(self) -> "QuadratureSpec":
        return replace(self, hermite_nodes=2 * self.hermite_nodes, panel_width=self.panel_width / 2,
                       sine_nodes=2 * self.sine_nodes)


@dataclass(frozen=True)
class TheoryConfig:
    """Inputs of the convergence predictions (white input, ``R = sx2 I``)."""

    params: KrslParams
    eta: float
    m: int = 20
    input_variance: float = 1.0
    noise: NoiseDensity = field(default_factory=Gaussian)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ParameterDomainError(f"step size must be positive, got {self.eta!r}")
        if int(self.m) < 1:
            raise ParameterDomainError(f"filter length must be >= 1, got {self.m!r}")
        if not (math.isfinite(self.input_variance) and self.input_variance > 0):
            raise ParameterDomainError(f"input variance must be positive, got {self.input_variance!r}")

    @property
    def trace_r(self) -> float:
        return self.m * self.input_variance


# ---------------------------------------------------------------------------
# quadrature rules

@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _hermite(n):
    t, w = np.polynomial.hermite.hermgauss(n)
    return t * math.sqrt(2.0), w / math.sqrt(math.pi)


def _composite_gl(lo, hi, width, order, breaks=()):
    """Nodes and weights of composite Gauss-Legendre on ``[lo, hi]``."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    edges = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
    t, w = _legendre(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        n_panels = max(1, math.ceil((b - a) / width))
        cuts = np.linspace(a, b, n_panels + 1)
        half = 0.5 * np.diff(cuts)[:, None]
        mid = 0.5 * (cuts[:-1] + cuts[1:])[:, None]
        nodes.append((mid + half * t).ravel())
        weights.append((half * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


@singledispatch
def noise_rule(noise: NoiseDensity, reach: float, width: float, q: QuadratureSpec):
    """Nodes ``v_k`` and weights ``w_k`` with ``sum w_k g(v_k) ~ E[g(v)]``.

    Only ``|v| <= reach`` is covered for continuous laws; callers guarantee
    the integrand is negligible outside.
    """
    raise TypeError(f"no quadrature rule for {type(noise).__name__}")


def _windowed(noise, half_window, reach, width, q, breaks=()):
    lim = min(half_window, reach)
    v, w = _composite_gl(-lim, lim, width, q.panel_nodes, breaks)
    return v, w * noise.pdf(v)


@noise_rule.register
def _(noise: Gaussian, reach, width, q):
    return _windowed(noise, q.window_std * noise.std, reach, width, q)


@noise_rule.register
def _(noise: Laplace, reach, width, q):
    return _windowed(noise, q.window_std * noise.std, reach, width, q, breaks=(0.0,))


@noise_rule.register
def _(noise: Uniform, reach, width, q):
    return _windowed(noise, noise.half_width, reach, width, q)


@noise_rule.register
def _(noise: Cauchy, reach, width, q):
    return _windowed(noise, q.cauchy_window * noise.scale, reach, width, q)


@noise_rule.register
def _(noise: SineWave, reach, width, q):
    n = q.sine_nodes
    phase = 2.0 * math.pi * np.arange(n) / n
    return noise.amplitude * np.sin(phase), np.full(n, 1.0 / n)


@noise_rule.register
def _(noise: Binary, reach, width, q):
    return noise.atoms


@noise_rule.register
def _(noise: MixtureOutliers, reach, width, q):
    va, wa = noise_rule(noise.inner, reach, width, q)
    vb, wb = noise_rule(noise.outlier, reach, width, q)
    return np.concatenate([va, vb]), np.concatenate([(1.0 - noise.c) * wa, noise.c * wb])


def _panel_width(params, noise, q):
    return q.panel_width * min(params.sigma, noise.scale)


def _gaussian_rule(x, params, v_extent, q):
    """Symmetric rule for ``y ~ N(0, x)``: returns positive nodes and weights.

    The full rule is ``{(+y_k, w_k), (-y_k, w_k)}`` plus possibly ``y = 0``
    (returned separately as its weight).
    """
    sd = math.sqrt(x)
    if sd <= 0.5 * params.sigma:
        t, w = _hermite(q.hermite_nodes)
        y, w = sd * t, w
    else:
        lim = min(10.0 * sd, v_extent + score_reach(params))
        width = q.panel_width * min(params.sigma, sd)
        y, w = _composite_gl(-lim, lim, width, q.panel_nodes)
        w = w * np.exp(-y * y / (2.0 * x)) / math.sqrt(2.0 * math.pi * x)
    pos = y > 0
    zero_w = float(np.sum(w[y == 0]))
    return y[pos], w[pos], zero_w


def _h_pair(x, config: TheoryConfig, q: QuadratureSpec):
    params, noise = config.params, config.noise
    reach = score_reach(params)
    width = _panel_width(params, noise, q)
    if x <= _TINY_X * params.sigma ** 2:
        v, wv = noise_rule(noise, reach, width, q)
        return float(np.sum(wv * f_prime(v, params))), float(np.sum(wv * score(v, params) ** 2))
    sd = math.sqrt(x)
    # a priori errors reach at most ~10 sd, which widens the relevant noise window
    v, wv = noise_rule(noise, reach + 10.0 * sd, width, q)
    v_extent = float(np.max(np.abs(v))) if v.size else 0.0
    y, wy, w0 = _gaussian_rule(x, params, v_extent, q)
    fp = score(y[:, None] + v[None, :], params)
    fm = score(-y[:, None] + v[None, :], params)
    f0 = score(v, params)
    # pairing +y with -y keeps the odd moment free of cancellation noise
    g = np.sum(wy[:, None] * (y[:, None] / sd) * (fp - fm) * wv[None, :]) / sd
    u = np.sum(wy[:, None] * (fp * fp + fm * fm) * wv[None, :]) + w0 * np.sum(wv * f0 * f0)
    return float(g), float(u)


def _checked(compute, q: QuadratureSpec, what: str):
    coarse = np.asarray(compute(q), dtype=float)
    fine = np.asarray(compute(q.refined()), dtype=float)
    scale = np.maximum(np.abs(fine), 1e-300)
    rel = np.abs(coarse - fine) / scale
    if np.any(rel > q.rtol):
        raise QuadratureAccuracyError(
            f"{what}: refining the quadrature changed the result by {float(np.max(rel)):.3g} (rtol {q.rtol:g})")
    return fine


def _check_x(x):
    if not (math.isfinite(x) and x > 0):
        raise ParameterDomainError(f"h functions need a positive second moment, got {x!r}")


def h_functions(x: float, config: TheoryConfig, check: bool = True) -> tuple[float, float]:
    """``(h_G(x), h_U(x))`` from one shared tensor-product quadrature."""
    _check_x(x)
    if check:
        g, u = _checked(lambda q: _h_pair(x, config, q), config.quadrature, f"h_G/h_U at x={x:g}")
        return float(g), float(u)
    return _h_pair(x, config, config.quadrature)


def h_G(x: float, config: TheoryConfig, check: bool = True) -> float:
    """``E[e_a f(e_a + v)] / E[e_a**2]`` for ``e_a ~ N(0, x)``."""
    return h_functions(x, config, check)[0]


def h_U(x: float, config: TheoryConfig, check: bool = True) -> float:
    """``E[f(e_a + v)**2]`` for ``e_a ~ N(0, x)``."""
    return h_functions(x, config, check)[1]


def noise_expectations(config: TheoryConfig, check: bool = True) -> tuple[float, float, float]:
    """``E[f^2(v)]``, ``E[f'(v)]`` and ``E[f(v) f''(v) + f'(v)^2]`` over the noise."""
    params, noise = config.params, config.noise

    def compute(q):
        v, w = noise_rule(noise, score_reach(params), _panel_width(params, noise, q), q)
        f = score(v, params)
        fp = f_prime(v, params)
        fpp = f_double_prime(v, params)
        return np.array([np.sum(w * f * f), np.sum(w * fp), np.sum(w * (f * fpp + fp * fp))])

    if check:
        out = _checked(compute, config.quadrature, "noise expectations")
    else:
        out = compute(config.quadrature)
    return tuple(float(a) for a in out)


def steady_state_emse_taylor(config: TheoryConfig, check: bool = True) -> float:
    """Second-order Taylor approximation of the steady-state EMSE.

    Raises
    ------
    StabilityViolationError
        If the denominator ``2 E[f'] - eta Tr(R) E[f f'' + f'^2]`` is not
        positive, i.e. the step size is too large for the approximation.
    """
    ef2, efp, ecurv = noise_expectations(config, check)
    etr = config.eta * config.trace_r
    den = 2.0 * efp - etr * ecurv
    if not den > 0:
        raise StabilityViolationError(f"non-positive denominator {den:.6g}; step size too large")
    return etr * ef2 / den


def steady_state_emse_exact(config: TheoryConfig, s_max: float | None = None, check: bool = True) -> float:
    """Smallest positive root of ``S = (eta/2) Tr(R) h_U(S) / h_G(S)``.

    The bracket starts at ``(1e-12, 10 * Taylor estimate]`` and widens by
    decades (up to six times) until the residual changes sign; the first sign
    change on a logarithmic scan is then refined with Brent's method.
    """
    half_etr = 0.5 * config.eta * config.trace_r

    def resid(s):
        g, u = h_functions(s, config, check=False)
        return s - half_etr * u / g

    lo = 1e-12
    if s_max is None:
        try:
            s_max = 10.0 * steady_state_emse_taylor(config, check=False)
        except StabilityViolationError:
            s_max = 1.0
    hi = max(s_max, 10 * lo)
    r_lo = resid(lo)
    if r_lo > 0:
        raise NoSolutionError(f"residual already positive at S={lo:g}; no root above it")
    for _ in range(7):
        grid = np.geomspace(lo, hi, 48)
        vals = [r_lo]
        for a, b in zip(grid[:-1], grid[1:]):
            rb = resid(b)
            if rb > 0:
                root = brentq(resid, a, b, xtol=1e-15, rtol=1e-12)
                if check:
                    h_functions(root, config, check=True)
                return float(root)
            vals.append(rb)
        lo, r_lo, hi = hi, vals[-1], hi * 10.0
    raise NoSolutionError(f"no sign change of the EMSE residual up to S={hi / 10:g}")


def transient_curve(config: TheoryConfig, n_iters: int, initial_wep: float, check: bool = True) -> np.ndarray:
    """Weight-error-power recursion for white input.

    Returns ``n_iters + 1`` values; entry ``i`` is the predicted
    ``E||W0 - W(i)||**2`` after ``i`` updates, starting from ``initial_wep``
    (``||W0||**2`` for a null initial weight vector).  When ``check`` is set
    the quadrature is verified at the first and last iterate.
    """
    if n_iters < 0:
        raise ParameterDomainError("number of iterations must be non-negative")
    if not (math.isfinite(initial_wep) and initial_wep >= 0):
        raise ParameterDomainError(f"initial weight error power must be >= 0, got {initial_wep!r}")
    sx2, eta, m = config.input_variance, config.eta, config.m
    out = np.empty(n_iters + 1)
    out[0] = wep = float(initial_wep)
    for i in range(1, n_iters + 1):
        x = sx2 * wep
        if x > 0:
            g, u = h_functions(x, config, check=check and i == 1)
        else:
            g, u = _h_pair(0.0, config, config.quadrature)
        wep = wep - 2.0 * eta * sx2 * g * wep + eta * eta * sx2 * m * u
        out[i] = wep
    if check and n_iters > 0 and wep > 0:
        h_functions(sx2 * out[-2], config, check=True)
    return out


def classical_lms_curve(eta, m, input_variance, noise_variance, n_iters, initial_wep):
    """LMS weight-error-power recursion (``h_G = 1``, ``h_U(x) = x + noise_variance``)."""
    out = np.empty(n_iters + 1)
    out[0] = wep = float(initial_wep)
    for i in range(1, n_iters + 1):
        x = input_variance * wep
        wep = wep - 2.0 * eta * input_variance * wep + eta * eta * input_variance * m * (x + noise_variance)
        out[i] = wep
    return out


def classical_lms_emse(eta, m, input_variance, noise_variance):
    """Steady-state EMSE of LMS under the same white-input model."""
    etr = eta * m * input_variance
    if not etr < 2.0:
        raise StabilityViolationError(f"eta * Tr(R) = {etr:g} >= 2: LMS is not mean-square stable")
    return etr * noise_variance / (2.0 - etr)
