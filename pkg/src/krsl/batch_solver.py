"""
Batch MKRSL estimation
======================

The KRSL performance surface of a linear model ``d = W0^T X + v``, its
stationary points via fixed-point (iteratively reweighted least squares)
iteration, and the scalar robustness bounds that hold when more than half of
the samples carry small noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import DimensionMismatchError, InapplicableRegimeError, ParameterDomainError, RankDeficiencyError
from .noise import RngSpec
from .similarity import KrslParams, gaussian_kernel, krsl_of_error

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class RegressionDataset:
    """Rows ``inputs[i]`` are regressors ``X(i)``; ``desired[i]`` is ``d(i)``."""

    inputs: np.ndarray
    desired: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        d = np.asarray(self.desired, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != d.size:
            raise DimensionMismatchError(f"inputs {X.shape} and desired {d.shape} disagree")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatchError("dataset must hold at least one sample of dimension >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(d))):
            raise ParameterDomainError("dataset contains non-finite values")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "desired", d)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def residuals(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float).ravel()
        if w.size != self.m:
            raise DimensionMismatchError(f"weight vector has {w.size} entries, dataset has m={self.m}")
        return self.desired - self.inputs @ w


def performance_surface(w, data: RegressionDataset, params: KrslParams) -> float:
    """``J(W) = (1/(N lam)) sum_i exp(lam (1 - kappa(d_i - W^T X_i)))``."""
    return krsl_of_error(data.residuals(w), params)


def surface_gradient(w, data: RegressionDataset, params: KrslParams) -> np.ndarray:
    """Analytic gradient ``-(1/(N sigma**2)) sum_i h(e_i) e_i X_i``."""
    e = data.residuals(w)
    return -(weight_h(e, params) * e) @ data.inputs / (data.n * params.sigma ** 2)


def closs_surface(w, data: RegressionDataset, sigma: float) -> float:
    """C-Loss of the residuals, ``1 - mean kappa(e_i)``."""
    return float(1.0 - np.mean(gaussian_kernel(data.residuals(w), sigma)))


def closs_gradient(w, data: RegressionDataset, sigma: float) -> np.ndarray:
    e = data.residuals(w)
    return -(gaussian_kernel(e, sigma) * e) @ data.inputs / (data.n * sigma ** 2)


def weight_h(e, params: KrslParams):
    """Reweighting factor ``h(e) = exp(lam (1 - kappa(e))) kappa(e)``; tends to 1 as sigma grows."""
    k = gaussian_kernel(e, params.sigma)
    return np.exp(params.lam * (1.0 - k)) * k


class FixedPointResult(NamedTuple):
    weights: np.ndarray
    iterations: int
    converged: bool


def _weighted_ls(data, h):
    """Solve ``[sum h X X^T] W = sum h d X`` through an SVD of ``sqrt(h) X``."""
    r = np.sqrt(h)
    A = r[:, None] * data.inputs
    b = r * data.desired
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size < data.m or s[-1] <= 0 or (s[0] / s[-1]) ** 2 > MAX_CONDITION:
        cond = math.inf if s.size < data.m or s[-1] <= 0 else (s[0] / s[-1]) ** 2
        raise RankDeficiencyError(f"weighted Gram matrix is singular or ill-conditioned (cond={cond:.3g})")
    return vt.T @ ((u.T @ b) / s)


def fixed_point_solve(data: RegressionDataset, params: KrslParams, init=None,
                      max_iters: int = 500, tol: float = 1e-10) -> FixedPointResult:
    """Iterate ``W <- [sum h(e_i) X_i X_i^T]^{-1} sum h(e_i) d_i X_i`` with step halving.

    The reweighted solve ``T(W)`` satisfies
    ``T(W) - W = -N sigma**2 A(W)^{-1} grad J(W)`` with ``A(W)`` positive
    definite, so it always points downhill.  The full step is taken when it
    lowers ``J``; otherwise it is halved (Armijo rule).  For ``lam > 1`` the
    undamped iteration can oscillate, because ``h`` then grows with small
    residuals.  The fixed points are unchanged by the damping.

    Parameters
    ----------
    data : RegressionDataset
    params : KrslParams
    init : array-like, optional
        Starting weights; the null vector by default.
    max_iters : int
        Maximum number of reweighted solves.
    tol : float
        Stop once the Euclidean change of the weights is ``<= tol``.

    Returns
    -------
    FixedPointResult
        The last iterate, the number of solves performed and whether the
        tolerance was met.  Non-convergence is reported, not raised.

    Raises
    ------
    RankDeficiencyError
        If a weighted Gram matrix has condition number above ``1e12``.
    """
    if data.n < data.m:
        raise RankDeficiencyError(f"need at least m={data.m} samples, got {data.n}")
    w = np.zeros(data.m) if init is None else np.asarray(init, dtype=float).ravel().copy()
    if w.size != data.m:
        raise DimensionMismatchError(f"init has {w.size} entries, expected {data.m}")
    j = performance_surface(w, data, params)
    for k in range(1, max_iters + 1):
        e = data.residuals(w)
        direction = _weighted_ls(data, weight_h(e, params)) - w
        # directional derivative of J along the fixed-point step (always <= 0)
        slope = float(-(weight_h(e, params) * e) @ (data.inputs @ direction)) / (data.n * params.sigma ** 2)
        alpha = 1.0
        while True:
            w_new = w + alpha * direction
            j_new = performance_surface(w_new, data, params)
            if j_new <= j + 1e-4 * alpha * slope or alpha * np.linalg.norm(direction) <= tol:
                break
            alpha *= 0.5
        step = np.linalg.norm(w_new - w)
        w, j = w_new, j_new
        if step <= tol:
            return FixedPointResult(w, k, True)
    return FixedPointResult(w, max_iters, False)


def surface_grid(data: RegressionDataset, params: KrslParams, w_box, loss: str = "krsl"):
    """Tabulate the surface and its gradient on a regular grid.

    Parameters
    ----------
    w_box : sequence of ``(lo, hi, steps)``
        One triple per weight (``m`` must be 1 or 2).
    loss : {"krsl", "closs"}
        ``"closs"`` tabulates the correntropic loss, the small-``lam`` limit
        of ``KRSL - 1/lam``, with the same kernel width.

    Returns
    -------
    numpy.ndarray
        Rows ``(w1, J, grad1)`` for ``m = 1`` or ``(w1, w2, J, grad1, grad2)``
        for ``m = 2``; the first weight varies slowest.
    """
    if data.m not in (1, 2):
        raise DimensionMismatchError(f"grid output supports m in (1, 2), got m={data.m}")
    if len(w_box) != data.m:
        raise DimensionMismatchError(f"w_box has {len(w_box)} axes, dataset has m={data.m}")
    if loss not in ("krsl", "closs"):
        raise ParameterDomainError(f"unknown loss {loss!r}")
    axes = [np.linspace(lo, hi, int(steps)) for lo, hi, steps in w_box]
    W = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, data.m)
    J = np.empty(W.shape[0])
    grad = np.empty_like(W)
    # bound the (points x samples) work arrays to about 2**22 entries
    rows = max(1, (1 << 22) // data.n)
    for s in range(0, W.shape[0], rows):
        Ws = W[s:s + rows]
        E = data.desired[None, :] - Ws @ data.inputs.T
        k = gaussian_kernel(E, params.sigma)
        if loss == "krsl":
            scale = np.exp(params.lam * (1.0 - k))
            J[s:s + rows] = np.mean(scale, axis=1) / params.lam
            coef = scale * k * E
        else:
            J[s:s + rows] = 1.0 - np.mean(k, axis=1)
            coef = k * E
        grad[s:s + rows] = -(coef @ data.inputs) / (data.n * params.sigma ** 2)
    return np.column_stack([W, J, grad])


# ---------------------------------------------------------------------------
# scalar robustness bounds

@dataclass(frozen=True)
class RobustnessScenario:
    """Counts and magnitudes for the scalar robustness bound.

    ``M`` of the ``N`` samples have ``|v(i)| <= eps_v`` and ``|X(i)| >= c``;
    the remaining ``N - M`` may be arbitrarily large outliers.
    """

    N: int
    M: int
    eps_v: float
    c: float
    params: KrslParams

    def __post_init__(self):
        if not (self.N > self.M > self.N / 2):
            raise InapplicableRegimeError(
                f"need N > M > N/2 (more than half small-noise samples, at least one outlier); got N={self.N}, M={self.M}")
        if not (math.isfinite(self.eps_v) and self.eps_v > 0):
            raise ParameterDomainError(f"eps_v must be positive, got {self.eps_v!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ParameterDomainError(f"c must be positive, got {self.c!r}")

    @property
    def outlier_ratio(self) -> float:
        return (self.N - self.M) / self.M


def _log_expm1(lam):
    # log(exp(lam) - 1) without overflow
    return lam + math.log1p(-math.exp(-lam))


def _t_level(s: RobustnessScenario) -> float:
    """``1 - (1/lam) log[exp(lam) - q (exp(lam) - 1)]`` with ``q = (N - M)/M``."""
    lam, q = s.params.lam, s.outlier_ratio
    t = -math.log((1.0 - q) + q * math.exp(-lam)) / lam
    if not 0.0 < t < 1.0:
        raise InapplicableRegimeError(f"exp(lam) - q (exp(lam) - 1) must exceed 1 (got level {t:.6g})")
    return t


def _bound_level(s: RobustnessScenario, kernel_at_eps: float) -> float:
    """``1 - (1/lam) log[exp(lam (1 - kernel_at_eps)) + q (exp(lam) - 1)]``."""
    lam, q = s.params.lam, s.outlier_ratio
    inner = np.logaddexp(lam * (1.0 - kernel_at_eps), math.log(q) + _log_expm1(lam))
    return 1.0 - float(inner) / lam


def sigma_condition(s: RobustnessScenario) -> float:
    """Kernel width above which the scalar robustness bound applies."""
    return s.eps_v / math.sqrt(-2.0 * math.log(_t_level(s)))


def _require_sigma(s):
    threshold = sigma_condition(s)
    if not s.params.sigma > threshold:
        raise InapplicableRegimeError(f"sigma={s.params.sigma:g} must exceed {threshold:.6g}")


def robustness_bound_xi(s: RobustnessScenario) -> float:
    """Bound ``xi`` with ``|W_MKRSL - W0| <= xi`` (scalar case)."""
    _require_sigma(s)
    sigma, eps = s.params.sigma, s.eps_v
    a = _bound_level(s, math.exp(-eps * eps / (2.0 * sigma * sigma)))
    if not 0.0 < a < 1.0:
        raise InapplicableRegimeError(f"bound level {a:.6g} outside (0, 1)")
    return (math.sqrt(-2.0 * sigma * sigma * math.log(a)) + eps) / s.c


def robustness_bound_rho(s: RobustnessScenario) -> float:
    """Constant ``rho`` with ``|W_MKRSL - W0| <= rho * eps_v``.

    Depends on ``sigma`` and ``eps_v`` only through their ratio
    ``beta = sigma/eps_v * sqrt(-2 log t)``, with ``t`` the level that
    defines :func:`sigma_condition`; ``beta > 1`` is the applicability
    condition.
    """
    _require_sigma(s)
    t = _t_level(s)
    log_t = math.log(t)
    beta = s.params.sigma / s.eps_v * math.sqrt(-2.0 * log_t)
    a = _bound_level(s, t ** (1.0 / beta ** 2))
    if not 0.0 < a < 1.0:
        raise InapplicableRegimeError(f"bound level {a:.6g} outside (0, 1)")
    return (beta * math.sqrt(math.log(a) / log_t) + 1.0) / s.c


# ---------------------------------------------------------------------------
# brute-force verification

def brute_force_minimizer(data: RegressionDataset, params: KrslParams, center: float, half_width: float,
                          points: int = 100_000) -> float:
    """Global minimiser of a scalar (``m = 1``) KRSL surface by exhaustive search.

    A uniform grid of ``points`` values over ``center +- half_width`` is
    combined with every zero-residual weight ``d_i / X_i`` (local minima sit
    next to these, even far outside the grid).  The best candidates are then
    polished by golden-section search inside their neighbouring grid cells.
    Intended as a verification oracle, not as a solver.
    """
    if data.m != 1:
        raise DimensionMismatchError("brute-force search is scalar only")
    x = data.inputs[:, 0]
    d = data.desired
    grid = np.linspace(center - half_width, center + half_width, points)
    step = grid[1] - grid[0]
    nz = x != 0
    anchors = d[nz] / x[nz]
    cand = np.concatenate([grid, anchors])

    def J_many(ws):
        out = np.empty(ws.size)
        for lo in range(0, ws.size, 4096):
            e = d[None, :] - ws[lo:lo + 4096, None] * x[None, :]
            out[lo:lo + 4096] = np.mean(np.exp(params.lam * (1.0 - gaussian_kernel(e, params.sigma))), axis=1)
        return out / params.lam

    values = J_many(cand)
    best_w, best_j = float(cand[np.argmin(values)]), float(np.min(values))
    order = np.argsort(values)[:8]
    for i in order:
        w0 = float(cand[i])
        # anchor widths shrink with |x_i|; use a bracket scaled to the sharpest kernel well
        h = min(step, params.sigma / max(np.max(np.abs(x)), 1e-300))
        a, b = w0 - h, w0 + h
        res = minimize_scalar(lambda w: performance_surface([w], data, params), bracket=(a, w0, b),
                              method="golden", tol=1e-12) if _is_bracket(data, params, a, w0, b) else None
        if res is not None and res.fun < best_j:
            best_w, best_j = float(res.x), float(res.fun)
    return best_w


def _is_bracket(data, params, a, b, c):
    fa, fb, fc = (performance_surface([w], data, params) for w in (a, b, c))
    return fb < fa and fb < fc


# ---------------------------------------------------------------------------
# randomized validation of the scalar bound

@dataclass(frozen=True)
class BoundCheck:
    """Outcome of one randomized scalar instance."""

    scenario: RobustnessScenario
    true_weight: float
    minimizer: float
    xi: float
    rho: float
    adversarial: bool

    @property
    def ratio(self) -> float:
        """``|W* - W0| / xi``; the bound holds when this is at most 1."""
        return abs(self.minimizer - self.true_weight) / self.xi

    @property
    def bound_consistent(self) -> bool:
        """``xi <= rho * eps_v`` up to floating-point roundoff (the two agree algebraically)."""
        return self.xi <= self.rho * self.scenario.eps_v * (1 + 1e-9)


def random_scenario(gen: np.random.Generator) -> RobustnessScenario:
    """Draw counts, kernel parameters and magnitudes that satisfy the bound's assumptions."""
    N = int(gen.integers(5, 41))
    M = int(gen.integers(N // 2 + 1, N))
    lam = float(np.exp(gen.uniform(math.log(0.5), math.log(20.0))))
    eps = float(gen.uniform(0.01, 0.5))
    c = float(gen.uniform(0.1, 2.0))
    threshold = sigma_condition(RobustnessScenario(N, M, eps, c, KrslParams(1.0, lam)))
    sigma = threshold * (1.0 + float(gen.uniform(0.05, 3.0)))
    return RobustnessScenario(N, M, eps, c, KrslParams(sigma, lam))


def random_instance(gen: np.random.Generator, s: RobustnessScenario, max_outlier: float = 1e6,
                    adversarial: bool = False):
    """A scalar dataset with ``M`` small-noise samples and ``N - M`` outliers.

    Small-noise samples have ``|X| >= c`` and ``|v| <= eps_v``.  Outlier
    noise magnitudes are log-uniform on ``(eps_v, max_outlier]``; in the
    adversarial variant every outlier is instead consistent with one common
    wrong weight, which pulls the minimiser as hard as possible.
    """
    w0 = float(gen.standard_normal())
    k = s.N - s.M
    x_in = gen.choice([-1.0, 1.0], s.M) * (s.c + np.abs(gen.standard_normal(s.M)))
    v_in = gen.uniform(-s.eps_v, s.eps_v, s.M)
    x_out = gen.standard_normal(k) * np.exp(gen.uniform(math.log(0.1), math.log(10.0), k))
    if adversarial:
        offset = gen.choice([-1.0, 1.0]) * np.exp(gen.uniform(math.log(s.eps_v), math.log(max_outlier)))
        v_out = offset * x_out
        small = np.abs(v_out) <= s.eps_v
        v_out[small] = np.sign(offset) * s.eps_v * 1.01
        v_out = np.clip(v_out, -max_outlier, max_outlier)
    else:
        v_out = gen.choice([-1.0, 1.0], k) * np.exp(gen.uniform(math.log(s.eps_v * 1.01), math.log(max_outlier), k))
    x = np.concatenate([x_in, x_out])
    return RegressionDataset(x, w0 * x + np.concatenate([v_in, v_out])), w0


def validate_robustness_bound(instances: int = 200, seed: int = 0, max_outlier: float = 1e6,
                              scenario: RobustnessScenario | None = None,
                              grid_points: int = 100_000) -> list[BoundCheck]:
    """Compare the brute-force minimiser of random scalar instances with ``xi``.

    Each instance draws from its own stream ``(seed, index)``.  Without a
    ``scenario`` the counts and parameters are randomised too; every other
    instance uses adversarially aligned outliers.
    """
    checks = []
    for i in range(int(instances)):
        gen = RngSpec(seed, i).generator()
        s = scenario if scenario is not None else random_scenario(gen)
        adversarial = bool(i % 2)
        data, w0 = random_instance(gen, s, max_outlier, adversarial)
        xi = robustness_bound_xi(s)
        rho = robustness_bound_rho(s)
        w_star = brute_force_minimizer(data, s.params, w0, 10.0 * xi, grid_points)
        checks.append(BoundCheck(s, w0, w_star, xi, rho, adversarial))
    return checks
