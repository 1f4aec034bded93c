"""Empirical probability measures on R^d and their one-dimensional projections.

A `Cloud` is a weighted sample set. `Marginal1D` is the sorted 1D view used by
every closed-form transport computation: it exposes the generalized inverse CDF
F^{-1}(q) = inf{x : F(x) >= q}.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from errors import InputError

WEIGHT_TOL = 1e-12
SYMMETRY_TOL = 1e-10
UNIT_TOL = 1e-10
ORTHO_TOL = 1e-8


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _stable_sum(terms, axis=0):
    """Sum that does not depend on the order of the summed terms."""
    return np.sort(terms, axis=axis).sum(axis=axis)


@dataclass(frozen=True, eq=False)
class Cloud:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _frozen(self.points)
        weights = _frozen(self.weights)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InputError(f"points must be a non-empty (n, d) matrix, got shape {points.shape}")
        if weights.shape != (points.shape[0],):
            raise InputError("weights must have one entry per sample")
        if not np.all(np.isfinite(points)):
            raise InputError("cloud coordinates must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise InputError("cloud weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def n_samples(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def is_uniform(self):
        return bool(np.all(np.abs(self.weights - 1.0 / self.n_samples) <= WEIGHT_TOL))


@dataclass(frozen=True, eq=False)
class Marginal1D:
    values: np.ndarray
    cum_weights: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        cum = _frozen(self.cum_weights)
        if values.ndim != 1 or values.size == 0 or cum.shape != values.shape:
            raise InputError("marginal needs equally long, non-empty values and cum_weights")
        if np.any(np.diff(values) < 0):
            raise InputError("marginal values must be sorted ascending")
        if np.any(np.diff(cum) <= 0) or cum[0] <= 0:
            raise InputError("cumulative weights must be strictly increasing and positive")
        if abs(cum[-1] - 1.0) > WEIGHT_TOL:
            raise InputError("last cumulative weight must be 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cum_weights", cum)

    @property
    def weights(self):
        return np.diff(self.cum_weights, prepend=0.0)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        cov = _frozen(np.atleast_2d(self.covariance))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise InputError(f"covariance must be {d}x{d} for a mean of length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("Gaussian summary must be finite")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL:
            raise InputError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -SYMMETRY_TOL:
            raise InputError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    directions: np.ndarray
    orthonormal: bool = False

    def __post_init__(self):
        directions = _frozen(np.atleast_2d(self.directions))
        if directions.ndim != 2 or directions.shape[0] < 1:
            raise InputError("a projection basis needs at least one direction")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise InputError("every projection direction must have unit norm")
        if self.orthonormal:
            gram = directions @ directions.T
            if np.max(np.abs(gram - np.eye(len(directions)))) > ORTHO_TOL:
                raise InputError("directions flagged orthonormal are not orthogonal")
        object.__setattr__(self, "directions", directions)

    @property
    def size(self):
        return self.directions.shape[0]

    @property
    def dim(self):
        return self.directions.shape[1]

    def __iter__(self):
        return iter(self.directions)


def from_samples(points, weights: Optional[Sequence[float]] = None) -> Cloud:
    """
    Build a normalized Cloud from raw samples.

    Args:
        points: (n, d) coordinates; a flat sequence is read as n scalar samples
        weights: optional nonnegative weights, uniform 1/n when absent

    Returns:
        Cloud with weights summing to 1
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
        raise InputError(f"points must be a non-empty (n, d) matrix, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InputError("cloud coordinates must be finite")

    n = points.shape[0]
    if weights is None:
        return Cloud(points, np.full(n, 1.0 / n))

    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise InputError(f"expected {n} weights, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise InputError("weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise InputError("weights must not all be zero")
    return Cloud(points, weights / total)


def marginal_from_values(values, weights) -> Marginal1D:
    """Sort weighted scalar samples, merge ties and accumulate weights."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0
    values, weights = values[keep], weights[keep]
    order = np.lexsort((weights, values))
    values, weights = values[order], weights[order]

    unique, starts = np.unique(values, return_index=True)
    merged = np.add.reduceat(weights, starts)
    cum = np.cumsum(merged)
    cum[-1] = 1.0
    return Marginal1D(unique, cum)


def marginal(c: Cloud, axis: int) -> Marginal1D:
    if not 0 <= axis < c.dim:
        raise InputError(f"axis {axis} out of range for dimension {c.dim}")
    return marginal_from_values(c.points[:, axis], c.weights)


def _check_unit(v, dim):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != dim:
        raise InputError(f"direction has dimension {v.shape[0]}, cloud has {dim}")
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise InputError("projection direction must have unit norm")
    return v


def project(c: Cloud, v) -> Marginal1D:
    """Push-forward of the cloud through x -> v^T x."""
    v = _check_unit(v, c.dim)
    return marginal_from_values(c.points @ v, c.weights)


def project_cloud(c: Cloud, v) -> Cloud:
    """The projected samples as a 1D Cloud, keeping their weights."""
    v = _check_unit(v, c.dim)
    return Cloud((c.points @ v).reshape(-1, 1), c.weights)


def quantile(m: Marginal1D, q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise InputError(f"quantile level must lie in [0, 1], got {q}")
    idx = int(np.searchsorted(m.cum_weights, q, side="left"))
    return float(m.values[min(idx, len(m) - 1)])


def gaussian_summary(c: Cloud) -> GaussianSummary:
    """Weighted mean and biased (sum-of-weights) weighted covariance."""
    w = c.weights[:, None]
    mean = _stable_sum(w * c.points, axis=0)
    centered = c.points - mean
    outer = c.weights[:, None, None] * centered[:, :, None] * centered[:, None, :]
    cov = _stable_sum(outer, axis=0)
    return GaussianSummary(mean, cov)


def canonical_basis(d: int) -> ProjectionBasis:
    return ProjectionBasis(np.eye(d), orthonormal=True)


def make_basis(directions, orthonormal: bool = False) -> ProjectionBasis:
    return ProjectionBasis(np.asarray(directions, dtype=float), orthonormal=orthonormal)


def pca_directions(clouds: Sequence[Cloud], m: int) -> ProjectionBasis:
    """
    Principal directions of the pooled samples of a design.

    Each cloud contributes total mass 1/len(clouds). Directions are sorted by
    decreasing eigenvalue and signed so their largest-magnitude entry is positive.
    """
    if not clouds:
        raise InputError("pca_directions needs at least one cloud")
    d = clouds[0].dim
    if any(c.dim != d for c in clouds):
        raise InputError("all clouds must share one dimension")
    if not 1 <= m <= d:
        raise InputError(f"number of components must lie in [1, {d}], got {m}")

    points = np.vstack([c.points for c in clouds])
    if points.shape[0] < d:
        raise InputError(f"need at least {d} pooled samples, got {points.shape[0]}")
    weights = np.concatenate([c.weights for c in clouds]) / len(clouds)
    cov = gaussian_summary(Cloud(points, weights / weights.sum())).covariance

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:m]
    directions = eigvecs[:, order].T.copy()
    for r, direction in enumerate(directions):
        if direction[np.argmax(np.abs(direction))] < 0:
            directions[r] = -direction
    return ProjectionBasis(directions, orthonormal=True)
