"""Wasserstein distances and Gromov-Wasserstein bounds.

1D distances are computed exactly from quantile functions: both inverse CDFs
are step functions, so the integral of |F_mu^{-1} - F_nu^{-1}|^p over [0, 1]
is a finite sum over the merged breakpoints of the two cumulative weights.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from errors import InputError, NumericError, ResourceError, UnsupportedCaseError
from measures import Cloud, GaussianSummary, Marginal1D, ProjectionBasis, project

DEFAULT_MAX_SAMPLES = 256
SINGULAR_TOL = 1e-12
ROUNDOFF_TOL = 1e-10


@dataclass(frozen=True)
class GWBounds:
    lower: float
    upper: float


def _check_order(p):
    if not np.isfinite(p) or p < 1:
        raise InputError(f"transport order p must be a finite real >= 1, got {p}")


def wp_1d(mu: Marginal1D, nu: Marginal1D, p: float = 1.0) -> float:
    _check_order(p)
    breaks = np.union1d(mu.cum_weights, nu.cum_weights)
    widths = np.diff(breaks, prepend=0.0)
    last_mu, last_nu = len(mu) - 1, len(nu) - 1
    # on each cell (t_{k-1}, t_k] both quantile functions are constant
    a = mu.values[np.minimum(np.searchsorted(mu.cum_weights, breaks, side="left"), last_mu)]
    b = nu.values[np.minimum(np.searchsorted(nu.cum_weights, breaks, side="left"), last_nu)]
    total = float(np.sum(widths * np.abs(a - b) ** p))
    return total ** (1.0 / p)


def _sqrtm_psd(matrix):
    eigvals, eigvecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def _bures_cross_trace(cov_a, cov_b):
    root_a = _sqrtm_psd(cov_a)
    return float(np.trace(_sqrtm_psd(root_a @ cov_b @ root_a)))


def w2_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    if a.dim != b.dim:
        raise InputError(f"Gaussian summaries live in R^{a.dim} and R^{b.dim}")
    for s in (a, b):
        if np.linalg.eigvalsh(s.covariance).min() < -1e-10:
            raise InputError("covariance must be positive semidefinite")

    shift = float(np.sum((a.mean - b.mean) ** 2))
    if np.array_equal(a.covariance, b.covariance):
        return np.sqrt(shift)
    # both argument orders, so the distance is exactly symmetric
    cross = 0.5 * (_bures_cross_trace(a.covariance, b.covariance)
                   + _bures_cross_trace(b.covariance, a.covariance))
    bures = np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * cross
    return float(np.sqrt(shift + max(bures, 0.0)))


def wp_cloud_exact(mu: Cloud, nu: Cloud, p: float = 1.0, max_samples: int = DEFAULT_MAX_SAMPLES) -> float:
    """
    Exact W_p between uniform clouds of equal size via optimal assignment.

    Args:
        mu, nu: uniform clouds with the same number of samples
        p: transport order
        max_samples: cap on the cloud size (cubic-time solver)

    Returns:
        W_p(mu, nu)
    """
    _check_order(p)
    if mu.dim != nu.dim:
        raise InputError(f"clouds live in R^{mu.dim} and R^{nu.dim}")
    if mu.n_samples != nu.n_samples or not (mu.is_uniform() and nu.is_uniform()):
        raise UnsupportedCaseError(
            "exact multivariate transport needs uniform clouds of equal size "
            f"(got {mu.n_samples} and {nu.n_samples} samples)"
        )
    n = mu.n_samples
    if n > max_samples:
        raise ResourceError(f"cloud size {n} exceeds the assignment cap of {max_samples}")

    cost = cdist(mu.points, nu.points) ** p
    rows, cols = linear_sum_assignment(cost)
    # sorted sum keeps the value independent of sample order
    total = float(np.sort(cost[rows, cols]).sum())
    return (total / n) ** (1.0 / p)


def sliced_directions(d: int, count: int, seed: int) -> ProjectionBasis:
    """Directions drawn uniformly on the unit sphere from a seeded stream."""
    if count < 1:
        raise InputError("slice count must be at least 1")
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((count, d))
    norms = np.linalg.norm(draws, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    directions = draws / norms
    # renormalize once more so every row passes the unit check exactly
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return ProjectionBasis(directions)


def sliced_wp(mu: Cloud, nu: Cloud, basis: ProjectionBasis, p: float = 1.0) -> float:
    _check_order(p)
    if mu.dim != nu.dim or basis.dim != mu.dim:
        raise InputError(f"dimension mismatch: clouds {mu.dim}/{nu.dim}, basis {basis.dim}")
    powers = [wp_1d(project(mu, v), project(nu, v), p) ** p for v in basis]
    return float(np.mean(powers)) ** (1.0 / p)


def gw2_gaussian_bounds(a: GaussianSummary, b: GaussianSummary) -> GWBounds:
    """
    Closed-form lower/upper bounds on GW_2 between Gaussians of dimensions m >= d.

    Arguments are swapped when the first one has the smaller dimension. Only the
    covariance spectra enter; the larger-dimensional covariance must be nonsingular.
    """
    if a.dim < b.dim:
        a, b = b, a
    d0 = np.sort(np.linalg.eigvalsh(a.covariance))[::-1]
    d1 = np.sort(np.linalg.eigvalsh(b.covariance))[::-1]
    if d0[-1] <= SINGULAR_TOL:
        raise InputError("the higher-dimensional covariance must be nonsingular")

    lead = d0[: b.dim]
    trace_gap = d0.sum() - d1.sum()
    norm0, norm1, norm_lead = np.linalg.norm(d0), np.linalg.norm(d1), np.linalg.norm(lead)
    lead_gap = np.sum((lead - d1) ** 2)

    lower_sq = (4.0 * trace_gap ** 2 + 4.0 * (norm0 - norm1) ** 2
                + 4.0 * lead_gap + 4.0 * (norm0 - norm_lead) ** 2)
    upper_sq = (4.0 * trace_gap ** 2 + 8.0 * lead_gap
                + 8.0 * (norm0 ** 2 - norm_lead ** 2))
    upper = float(np.sqrt(max(upper_sq, 0.0)))
    lower = float(np.sqrt(max(lower_sq, 0.0)))
    if lower > upper + ROUNDOFF_TOL * max(1.0, upper):
        raise NumericError(f"GW lower bound {lower:.6g} exceeds upper bound {upper:.6g}")
    # proportional spectra give equality; only roundoff is trimmed here
    lower = min(lower, upper)
    return GWBounds(lower=lower, upper=upper)
