"""Covariance kernels on points, Gaussian summaries and empirical measures.

Most families are "exponential of a distance": the kernel is
lambda * g(distance factors). Their factor distances are collected in a
`DistanceStack` so that hyperparameter search can recombine them without
recomputing any transport problem. UIGP and KME carry their length-scales
inside the distance and are evaluated pair by pair.

RBF profile convention: exp(-r^2 / (2 l^2)). The transport kernels use
exp(-sigma * W^p); for Gaussian summaries with p = 2 the two coincide
under sigma = 1 / (2 l^2).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from errors import InputError, NumericError
from measures import Cloud, GaussianSummary, Marginal1D, ProjectionBasis, marginal, project
from transport import sliced_directions, w2_gaussian, wp_1d, wp_cloud_exact


class KernelFamily(str, Enum):
    RBF = "RBF"
    MATERN32 = "Matern32"
    MATERN52 = "Matern52"
    EXPONENTIAL = "Exponential"
    WGP = "WGP"
    SWGP = "SWGP"
    PWA = "PWA"
    PCPWA = "PCPWA"
    UIGP = "UIGP"
    KME = "KME"
    MMD = "MMD"


POINT_FAMILIES = frozenset({KernelFamily.RBF, KernelFamily.MATERN32,
                            KernelFamily.MATERN52, KernelFamily.EXPONENTIAL})
TRANSPORT_FAMILIES = frozenset({KernelFamily.WGP, KernelFamily.SWGP,
                                KernelFamily.PWA, KernelFamily.PCPWA})
DISTANCE_FAMILIES = POINT_FAMILIES | TRANSPORT_FAMILIES | {KernelFamily.MMD}


@dataclass(frozen=True, eq=False)
class KernelSpec:
    family: KernelFamily
    amplitude: float = 1.0
    scales: Tuple[float, ...] = (1.0,)
    p: float = 1.0
    base_lengthscale: float = 1.0
    basis: Optional[ProjectionBasis] = None
    slice_count: int = 20
    slice_seed: int = 0

    def __post_init__(self):
        try:
            family = KernelFamily(self.family)
        except ValueError:
            valid = ", ".join(f.value for f in KernelFamily)
            raise InputError(f"unknown kernel family {self.family!r}; valid: {valid}") from None
        scales = tuple(float(s) for s in np.atleast_1d(self.scales))
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "scales", scales)

        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise InputError("kernel amplitude must be positive")
        if not scales or not all(np.isfinite(s) and s >= 0 for s in scales):
            raise InputError("kernel scales must be finite and nonnegative")
        if family == KernelFamily.UIGP and min(scales) <= 0:
            raise InputError("UIGP length-scales must be positive")
        if not (np.isfinite(self.p) and self.p >= 1):
            raise InputError("transport order p must be >= 1")
        if not (np.isfinite(self.base_lengthscale) and self.base_lengthscale > 0):
            raise InputError("base length-scale must be positive")
        if family == KernelFamily.SWGP and self.slice_count < 1:
            raise InputError("SWGP needs at least one slice")
        if (self.basis is not None) != (family == KernelFamily.PCPWA):
            raise InputError("a projection basis is required for PCPWA and only for PCPWA")
        if family == KernelFamily.PCPWA and len(scales) != self.basis.size:
            raise InputError(f"PCPWA needs {self.basis.size} scales, got {len(scales)}")

    @property
    def sigma(self):
        return self.scales[0]

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    spec: KernelSpec


@dataclass(frozen=True, eq=False)
class DistanceStack:
    """Factor distances, shape (n_factors, n_rows, n_cols)."""
    values: np.ndarray
    spec: KernelSpec = field(repr=False)


# ---------------------------------------------------------------------------
# feature preparation
# ---------------------------------------------------------------------------

def _as_vector(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InputError("point kernels take finite 1D vectors")
    return x


def _require_type(inputs, kind, family):
    if not all(isinstance(x, kind) for x in inputs):
        raise InputError(f"{family.value} kernel takes {kind.__name__} inputs only")


def _require_dim(inputs):
    dims = {x.dim for x in inputs}
    if len(dims) != 1:
        raise InputError(f"inputs have mixed dimensions {sorted(dims)}")
    return dims.pop()


def _prepare(inputs: Sequence, spec: KernelSpec, directions: Optional[ProjectionBasis] = None):
    """Turn raw inputs into the per-input features a family compares."""
    family = spec.family
    if not inputs:
        return []

    if family in POINT_FAMILIES:
        if any(isinstance(x, (Cloud, GaussianSummary)) for x in inputs):
            raise InputError(f"{family.value} kernel takes point vectors")
        vectors = [_as_vector(x) for x in inputs]
        if len({v.shape[0] for v in vectors}) != 1:
            raise InputError("point inputs have mixed dimensions")
        return vectors

    if family == KernelFamily.WGP:
        if all(isinstance(x, GaussianSummary) for x in inputs):
            if spec.p != 2:
                raise InputError("WGP on Gaussian summaries uses the closed-form W2 and needs p = 2")
            _require_dim(inputs)
            return list(inputs)
        _require_type(inputs, Cloud, family)
        d = _require_dim(inputs)
        return [marginal(c, 0) for c in inputs] if d == 1 else list(inputs)

    if family == KernelFamily.UIGP:
        _require_type(inputs, GaussianSummary, family)
        d = _require_dim(inputs)
        if len(spec.scales) not in (1, d):
            raise InputError(f"UIGP needs 1 or {d} length-scales, got {len(spec.scales)}")
        return list(inputs)

    _require_type(inputs, Cloud, family)
    d = _require_dim(inputs)

    if family == KernelFamily.PWA:
        if len(spec.scales) != d:
            raise InputError(f"PWA needs {d} scales, got {len(spec.scales)}")
        return [[marginal(c, i) for i in range(d)] for c in inputs]
    if family == KernelFamily.PCPWA:
        if spec.basis.dim != d:
            raise InputError(f"basis lives in R^{spec.basis.dim}, inputs in R^{d}")
        return [[project(c, v) for v in spec.basis] for c in inputs]
    if family == KernelFamily.SWGP:
        if directions is None:
            directions = sliced_directions(d, spec.slice_count, spec.slice_seed)
        return [[project(c, u) for u in directions] for c in inputs]
    if family == KernelFamily.MMD:
        ell = spec.base_lengthscale
        return [(c, _embedding_inner(c, c, ell)) for c in inputs]
    return list(inputs)  # KME


def _shared_directions(inputs, spec):
    if spec.family != KernelFamily.SWGP or not inputs:
        return None
    return sliced_directions(inputs[0].dim, spec.slice_count, spec.slice_seed)


# ---------------------------------------------------------------------------
# pair computations
# ---------------------------------------------------------------------------

def _embedding_inner(a: Cloud, b: Cloud, ell: float) -> float:
    sq = cdist(a.points, b.points, "sqeuclidean")
    terms = (a.weights[:, None] * b.weights[None, :]) * np.exp(-sq / (2.0 * ell ** 2))
    # sorted sum: identical for (a, b) and (b, a)
    return float(np.sort(terms, axis=None).sum())


def _pair_distances(fa, fb, spec: KernelSpec) -> np.ndarray:
    family, p = spec.family, spec.p
    if family in POINT_FAMILIES:
        if fa.shape != fb.shape:
            raise InputError("point inputs have different dimensions")
        return np.array([np.linalg.norm(fa - fb)])
    if family == KernelFamily.WGP:
        if isinstance(fa, Marginal1D):
            w = wp_1d(fa, fb, p)
        elif isinstance(fa, GaussianSummary):
            w = w2_gaussian(fa, fb)
        else:
            w = wp_cloud_exact(fa, fb, p)
        return np.array([w ** p])
    if family in (KernelFamily.PWA, KernelFamily.PCPWA):
        return np.array([wp_1d(a, b, p) ** p for a, b in zip(fa, fb)])
    if family == KernelFamily.SWGP:
        return np.array([np.mean([wp_1d(a, b, p) ** p for a, b in zip(fa, fb)])])
    if family == KernelFamily.MMD:
        (ca, self_a), (cb, self_b) = fa, fb
        cross = _embedding_inner(ca, cb, spec.base_lengthscale)
        return np.array([max(self_a + self_b - 2.0 * cross, 0.0)])
    raise InputError(f"{family.value} is not a distance-based family")


def _profile(u, family):
    if family == KernelFamily.RBF:
        return np.exp(-0.5 * u ** 2)
    if family == KernelFamily.MATERN32:
        s = np.sqrt(3.0) * u
        return (1.0 + s) * np.exp(-s)
    if family == KernelFamily.MATERN52:
        s = np.sqrt(5.0) * u
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)
    return np.exp(-u)


def kernel_from_distances(values: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Combine factor distances (leading axis) into kernel values."""
    values = np.asarray(values, dtype=float)
    if spec.family in POINT_FAMILIES:
        return spec.amplitude * _profile(values[0] / spec.base_lengthscale, spec.family)
    if values.shape[0] != len(spec.scales):
        raise InputError(f"{values.shape[0]} distance factors but {len(spec.scales)} scales")
    exponent = spec.scales[0] * values[0]
    for scale, factor in zip(spec.scales[1:], values[1:]):
        exponent = exponent + scale * factor
    return spec.amplitude * np.exp(-exponent)


def _uigp_pair(a: GaussianSummary, b: GaussianSummary, spec: KernelSpec) -> float:
    if a.dim != b.dim:
        raise InputError("Gaussian summaries have different dimensions")
    d = a.dim
    ell_sq = np.broadcast_to(np.asarray(spec.scales) ** 2, (d,))
    spread = a.covariance + b.covariance
    sign, logdet = np.linalg.slogdet(np.eye(d) + spread / ell_sq[None, :])
    if sign <= 0:
        raise NumericError("UIGP determinant factor is not positive")
    delta = a.mean - b.mean
    try:
        solved = np.linalg.solve(np.diag(ell_sq) + spread, delta)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular UIGP covariance: {exc}") from exc
    return float(spec.amplitude * np.exp(-0.5 * logdet - 0.5 * float(delta @ solved)))


def _pair_value(fa, fb, spec: KernelSpec) -> float:
    if spec.family in DISTANCE_FAMILIES:
        return float(kernel_from_distances(_pair_distances(fa, fb, spec), spec))
    if spec.family == KernelFamily.UIGP:
        return _uigp_pair(fa, fb, spec)
    if fa.dim != fb.dim:
        raise InputError("clouds have different dimensions")
    return spec.amplitude * _embedding_inner(fa, fb, spec.base_lengthscale)


def _check_family(spec, *families):
    if spec.family not in families:
        names = "/".join(f.value for f in families)
        raise InputError(f"expected a {names} kernel spec, got {spec.family.value}")


def _single(mu, nu, spec):
    directions = _shared_directions([mu], spec)
    fa, fb = _prepare([mu, nu], spec, directions)
    return _pair_value(fa, fb, spec)


# ---------------------------------------------------------------------------
# public single-pair kernels
# ---------------------------------------------------------------------------

def k_point(x, y, spec: KernelSpec) -> float:
    _check_family(spec, *POINT_FAMILIES)
    return _single(x, y, spec)


def k_wgp(mu, nu, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.WGP)
    return _single(mu, nu, spec)


def k_pwa(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.PWA)
    return _single(mu, nu, spec)


def k_pcpwa(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.PCPWA)
    return _single(mu, nu, spec)


def k_swgp(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.SWGP)
    return _single(mu, nu, spec)


def k_uigp(a: GaussianSummary, b: GaussianSummary, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.UIGP)
    return _single(a, b, spec)


def k_kme(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    """Embedding inner product sum_ab w_a w_b exp(-|x_a - y_b|^2 / 2 l^2); Gram assembly scales it by the amplitude."""
    _check_family(spec, KernelFamily.KME)
    return _single(mu, nu, spec.replace(amplitude=1.0))


def mmd2(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    """Squared MMD under the Gaussian base kernel of length-scale spec.base_lengthscale."""
    if mu.dim != nu.dim:
        raise InputError("clouds have different dimensions")
    ell = spec.base_lengthscale
    fa = (mu, _embedding_inner(mu, mu, ell))
    fb = (nu, _embedding_inner(nu, nu, ell))
    return float(_pair_distances(fa, fb, spec.replace(family=KernelFamily.MMD))[0])


def k_mmd(mu: Cloud, nu: Cloud, spec: KernelSpec) -> float:
    _check_family(spec, KernelFamily.MMD)
    return _single(mu, nu, spec)


def kernel_value(mu, nu, spec: KernelSpec) -> float:
    """Single kernel evaluation for any family."""
    return _single(mu, nu, spec)


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def _run_rows(rows, work, workers):
    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, rows))
    return [work(i) for i in rows]


def pairwise_distances(inputs: Sequence, spec: KernelSpec, workers: int = 1) -> DistanceStack:
    """Symmetric factor distances over the upper triangle, mirrored; zero diagonal."""
    if spec.family not in DISTANCE_FAMILIES:
        raise InputError(f"{spec.family.value} has no distance representation")
    feats = _prepare(inputs, spec, _shared_directions(inputs, spec))
    n = len(feats)
    n_factors = len(spec.scales) if spec.family in (KernelFamily.PWA, KernelFamily.PCPWA) else 1
    values = np.zeros((n_factors, n, n))

    def row(i):
        return [_pair_distances(feats[i], feats[j], spec) for j in range(i + 1, n)]

    for i, entries in enumerate(_run_rows(range(n), row, workers)):
        for offset, dist in enumerate(entries):
            j = i + 1 + offset
            values[:, i, j] = dist
            values[:, j, i] = dist
    return DistanceStack(values, spec)


def cross_distances(train: Sequence, test: Sequence, spec: KernelSpec, workers: int = 1) -> DistanceStack:
    if spec.family not in DISTANCE_FAMILIES:
        raise InputError(f"{spec.family.value} has no distance representation")
    directions = _shared_directions(list(train) + list(test), spec)
    train_f = _prepare(train, spec, directions)
    test_f = _prepare(test, spec, directions)
    if train_f and test_f:
        _prepare([train[0], test[0]], spec, directions)  # heterogeneity check across sets

    def row(i):
        return [_pair_distances(test_f[i], fb, spec) for fb in train_f]

    rows = _run_rows(range(len(test_f)), row, workers)
    n_factors = len(spec.scales) if spec.family in (KernelFamily.PWA, KernelFamily.PCPWA) else 1
    values = np.zeros((n_factors, len(test_f), len(train_f)))
    for i, entries in enumerate(rows):
        for j, dist in enumerate(entries):
            values[:, i, j] = dist
    return DistanceStack(values, spec)


def gram(inputs: Sequence, spec: KernelSpec, workers: int = 1) -> GramMatrix:
    """Gram matrix computed on the upper triangle and mirrored (exactly symmetric)."""
    if spec.family in DISTANCE_FAMILIES:
        stack = pairwise_distances(inputs, spec, workers)
        return GramMatrix(kernel_from_distances(stack.values, spec), spec)

    feats = _prepare(inputs, spec)
    n = len(feats)
    entries = np.zeros((n, n))

    def row(i):
        return [_pair_value(feats[i], feats[j], spec) for j in range(i, n)]

    for i, values in enumerate(_run_rows(range(n), row, workers)):
        entries[i, i:] = values
        entries[i:, i] = values
    return GramMatrix(entries, spec)


def cross_gram(train: Sequence, test: Sequence, spec: KernelSpec, workers: int = 1) -> np.ndarray:
    """Rectangular matrix of k(test_i, train_j)."""
    if spec.family in DISTANCE_FAMILIES:
        return kernel_from_distances(cross_distances(train, test, spec, workers).values, spec)

    train_f = _prepare(train, spec)
    test_f = _prepare(test, spec)
    if train_f and test_f:
        _prepare([train[0], test[0]], spec)
    rows = _run_rows(range(len(test_f)), lambda i: [_pair_value(test_f[i], fb, spec) for fb in train_f], workers)
    return np.array(rows, dtype=float).reshape(len(test_f), len(train_f))


def kernel_diagonal(inputs: Sequence, spec: KernelSpec) -> np.ndarray:
    """k(x, x) for each input."""
    if spec.family in DISTANCE_FAMILIES:
        _prepare(inputs, spec, _shared_directions(inputs, spec))
        return np.full(len(inputs), float(spec.amplitude))
    feats = _prepare(inputs, spec)
    return np.array([_pair_value(f, f, spec) for f in feats], dtype=float)


def min_eigenvalue(g) -> float:
    entries = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    return float(np.linalg.eigvalsh(entries).min())
