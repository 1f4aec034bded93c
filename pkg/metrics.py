"""Scores for predictive distributions: RMSE, interval coverage and CRPS."""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from errors import InputError, NumericError

INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    coverage: float
    mean_crps: float
    n_test: int
    nominal_level: float


def _paired(a, b):
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape or a.size == 0:
        raise InputError(f"need equally long, non-empty sequences (got {a.size} and {b.size})")
    return a, b


def rmse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    predictions, truths = _paired(predictions, truths)
    return float(np.sqrt(np.mean((predictions - truths) ** 2)))


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")


def coverage(summaries, truths, alpha: float = 0.1, include_noise: bool = True) -> float:
    """Fraction of truths inside mean +- z_{1-alpha/2} * sd; the boundary counts as inside."""
    _check_alpha(alpha)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    if len(summaries) != truths.size or truths.size == 0:
        raise InputError(f"{len(summaries)} predictions for {truths.size} truths")
    z = -ndtri(alpha / 2.0)
    means = np.array([s.mean for s in summaries])
    sds = np.array([s.total_sd if include_noise else s.sd for s in summaries])
    return float(np.mean(np.abs(truths - means) <= z * sds))


def crps_gaussian(mean, sd, y):
    """Closed-form CRPS of N(mean, sd^2) at y; sd = 0 gives |y - mean|."""
    mean, sd, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mean, sd, y)))
    if np.any(sd < 0):
        raise InputError("predictive sd must be nonnegative")
    diff = y - mean
    safe = np.where(sd > 0, sd, 1.0)
    z = diff / safe
    value = safe * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * np.exp(-0.5 * z ** 2) / np.sqrt(2.0 * np.pi) - INV_SQRT_PI)
    value = np.where(sd > 0, value, np.abs(diff))
    return float(value) if value.ndim == 0 else value


def crps_numeric(cdf: Callable[[float], float], y: float, lower: float = -np.inf,
                 upper: float = np.inf, tol: float = 1e-8) -> float:
    """
    CRPS by adaptive quadrature of (F(t) - 1{y <= t})^2, split at y.

    Raises:
        NumericError: when the integrator reports non-convergence
    """
    total = 0.0
    pieces = ((lambda t: cdf(t) ** 2, lower, y), (lambda t: (1.0 - cdf(t)) ** 2, y, upper))
    for integrand, lo, hi in pieces:
        if lo >= hi:
            continue
        result = quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=200, full_output=1)
        if len(result) > 3:
            raise NumericError(f"CRPS quadrature did not converge: {result[3]}")
        total += result[0]
    return float(total)


def score(summaries, truths, alpha: float = 0.1, include_noise: bool = True) -> MetricsReport:
    """RMSE, coverage and mean Gaussian CRPS of a set of predictions."""
    _check_alpha(alpha)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    means = np.array([s.mean for s in summaries])
    sds = np.array([s.total_sd if include_noise else s.sd for s in summaries])
    return MetricsReport(
        rmse=rmse(means, truths),
        coverage=coverage(summaries, truths, alpha, include_noise),
        mean_crps=float(np.mean(crps_gaussian(means, sds, truths))),
        n_test=int(truths.size),
        nominal_level=1.0 - alpha,
    )
