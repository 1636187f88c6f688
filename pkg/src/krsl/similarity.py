"""
Similarity measures in kernel space
===================================

Gaussian-kernel similarity measures (correntropy and relatives), the
kernel risk-sensitive loss (KRSL) and their second-order counterparts in
input space.  All estimators use the population convention: sample means
divide by ``N`` and double sums by ``N**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDataError, EmptyDataError, DimensionMismatchError, ParameterDomainError

# exp(lam * (1 - kappa)) <= exp(lam) must stay inside double range
MAX_LAMBDA = 700.0


def _check_sigma(sigma):
    if not (np.isfinite(sigma) and sigma > 0):
        raise ParameterDomainError(f"kernel bandwidth must be positive and finite, got {sigma!r}")


@dataclass(frozen=True)
class KrslParams:
    """Kernel bandwidth ``sigma`` and risk-sensitive parameter ``lam``."""

    sigma: float
    lam: float

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ParameterDomainError(f"risk-sensitive parameter must be positive, got {self.lam!r}")
        if self.lam > MAX_LAMBDA:
            raise ParameterDomainError(f"lam={self.lam} overflows double precision (limit {MAX_LAMBDA})")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class SampleVectorPair:
    """Paired observations ``x`` and ``y`` of equal, non-zero length."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.ndim != 1 or y.ndim != 1:
            raise DimensionMismatchError("sample vectors must be one-dimensional")
        if x.size == 0 or y.size == 0:
            raise EmptyDataError("at least one sample pair is required")
        if x.shape != y.shape:
            raise DimensionMismatchError(f"length mismatch: {x.size} vs {y.size}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def error(self) -> np.ndarray:
        return self.x - self.y

    def __len__(self):
        return self.x.size


def _samples(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionMismatchError("samples must be one-dimensional")
    if x.size == 0:
        raise EmptyDataError("at least one sample is required")
    return x


def gaussian_kernel(u, sigma):
    """Translation-invariant Gaussian kernel ``exp(-u**2 / (2 sigma**2))``.

    Works elementwise on arrays.  The kernel is not normalised, so its value
    at the origin is exactly one.
    """
    _check_sigma(sigma)
    u = np.asarray(u, dtype=float)
    return np.exp(-(u * u) / (2.0 * sigma * sigma))


def correntropy(x, y, sigma):
    """Sample estimate of ``E[kappa_sigma(X - Y)]``."""
    pair = SampleVectorPair(x, y)
    return float(np.mean(gaussian_kernel(pair.error, sigma)))


def c_loss(x, y, sigma):
    """Correntropic loss ``1 - correntropy``."""
    return 1.0 - correntropy(x, y, sigma)


def _cross_kernel_mean(x, y, sigma):
    return float(np.mean(gaussian_kernel(x[:, None] - y[None, :], sigma)))


def centered_correntropy(x, y, sigma):
    """Correntropy minus its value under the product of the marginals.

    The product-marginal term is estimated by the double average
    ``(1/N**2) sum_i sum_j kappa(x_i - y_j)``.
    """
    pair = SampleVectorPair(x, y)
    joint = np.mean(gaussian_kernel(pair.error, sigma))
    return float(joint - _cross_kernel_mean(pair.x, pair.y, sigma))


def correntropy_coefficient(x, y, sigma):
    """Centered correntropy normalised by the self-centered correntropies.

    Raises
    ------
    DegenerateDataError
        If either ``U(x, x)`` or ``U(y, y)`` is not strictly positive, which
        happens for constant samples.
    """
    pair = SampleVectorPair(x, y)
    uxx = centered_correntropy(pair.x, pair.x, sigma)
    uyy = centered_correntropy(pair.y, pair.y, sigma)
    if not (uxx > 0 and uyy > 0):
        raise DegenerateDataError("self centered correntropy vanishes (constant data?)")
    return centered_correntropy(pair.x, pair.y, sigma) / math.sqrt(uxx * uyy)


def mse(x, y):
    pair = SampleVectorPair(x, y)
    return float(np.mean(pair.error ** 2))


def covariance(x, y):
    """Population covariance ``E[XY] - E[X]E[Y]`` (divides by ``N``)."""
    pair = SampleVectorPair(x, y)
    return float(np.mean(pair.x * pair.y) - np.mean(pair.x) * np.mean(pair.y))


def correlation_coefficient(x, y):
    pair = SampleVectorPair(x, y)
    vx = covariance(pair.x, pair.x)
    vy = covariance(pair.y, pair.y)
    if not (vx > 0 and vy > 0):
        raise DegenerateDataError("zero variance: correlation coefficient undefined")
    return covariance(pair.x, pair.y) / math.sqrt(vx * vy)


def qip(x, sigma):
    """Parzen estimate of the quadratic information potential.

    ``(1 / (2 N**2 sqrt(pi) sigma)) * sum_ij kappa_{sqrt(2) sigma}(x_i - x_j)``
    """
    x = _samples(x)
    _check_sigma(sigma)
    n = x.size
    total = np.sum(gaussian_kernel(x[:, None] - x[None, :], math.sqrt(2.0) * sigma))
    return float(total / (2.0 * n * n * math.sqrt(math.pi) * sigma))


def empirical_krsl(x, y, params: KrslParams):
    """Empirical kernel risk-sensitive loss.

    .. math::

        \\hat L_\\lambda = \\frac{1}{N\\lambda} \\sum_i
            \\exp\\left(\\lambda (1 - \\kappa_\\sigma(x_i - y_i))\\right)

    The value lies in ``[1/lam, exp(lam)/lam]`` and reaches the lower end
    only when ``x == y``.
    """
    pair = SampleVectorPair(x, y)
    return krsl_of_error(pair.error, params)


def krsl_of_error(e, params: KrslParams):
    """Empirical KRSL written as a function of the error vector alone."""
    e = _samples(e)
    k = gaussian_kernel(e, params.sigma)
    return float(np.mean(np.exp(params.lam * (1.0 - k))) / params.lam)


def krsl_hessian_diag(e, params: KrslParams):
    """Diagonal of the Hessian of the empirical KRSL w.r.t. the error vector.

    The Hessian is diagonal because each error enters through its own term.
    Entry ``i`` is

    ``xi_i * (lam/sigma**2 * kappa(e_i) * e_i**2 + 1 - e_i**2/sigma**2)``

    with ``xi_i = exp(lam (1 - kappa(e_i))) kappa(e_i) / (N sigma**2) > 0``.
    """
    e = _samples(e)
    s2 = params.sigma ** 2
    k = gaussian_kernel(e, params.sigma)
    xi = np.exp(params.lam * (1.0 - k)) * k / (e.size * s2)
    u = e * e / s2
    return xi * (params.lam * k * u + 1.0 - u)


def convexity_lambda_threshold(e, sigma):
    """Smallest ``lam`` guaranteeing a positive semidefinite KRSL Hessian at ``e``.

    Entries with ``|e_i| <= sigma`` never constrain ``lam``; the rest require
    ``lam >= (e_i**2 - sigma**2)/e_i**2 * exp(e_i**2 / (2 sigma**2))``.
    Returns 0 when no entry exceeds ``sigma``.
    """
    e = _samples(e)
    _check_sigma(sigma)
    e2 = e[np.abs(e) > sigma] ** 2
    if e2.size == 0:
        return 0.0
    s2 = sigma * sigma
    with np.errstate(over="ignore"):
        return float(np.max((e2 - s2) / e2 * np.exp(e2 / (2.0 * s2))))
