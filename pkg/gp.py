"""Exact Gaussian-process regression on measure inputs."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, cho_solve, solve_triangular
from scipy.optimize import minimize
from tqdm import tqdm

from errors import InputError, NumericError, OTGPError, UnsupportedCaseError
from kernels import (DISTANCE_FAMILIES, POINT_FAMILIES, KernelFamily, KernelSpec,
                     cross_gram, gram, kernel_diagonal, kernel_from_distances,
                     pairwise_distances)
from measures import Cloud, GaussianSummary, gaussian_summary

JITTER_START = 1e-8
JITTER_CAP = 1e-2
PENALTY = 1e25
NOISE_FLOOR = 1e-8
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GPModel:
    train_inputs: Tuple
    spec: KernelSpec
    noise: float
    chol: np.ndarray
    alpha: np.ndarray
    y: np.ndarray
    gram: np.ndarray
    jitter: float = 0.0
    jitter_escalations: int = 0

    @property
    def n_train(self):
        return self.y.shape[0]


@dataclass(frozen=True)
class PredictiveSummary:
    mean: float
    variance: float
    noise_variance: float = 0.0
    clamped: bool = False

    @property
    def total_variance(self):
        return self.variance + self.noise_variance

    @property
    def sd(self):
        return float(np.sqrt(self.variance))

    @property
    def total_sd(self):
        return float(np.sqrt(self.total_variance))


def _factor(K, noise, verbose=True):
    """Cholesky of K + noise*I, escalating diagonal jitter by decades when needed."""
    n = K.shape[0]
    system = K + noise * np.eye(n)
    try:
        return cholesky(system, lower=True), 0.0, 0
    except LinAlgError:
        pass

    scale = float(np.mean(np.diag(K)))
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter, escalations = JITTER_START * scale, 0
    while jitter <= JITTER_CAP * scale * (1.0 + 1e-9):
        escalations += 1
        try:
            chol = cholesky(system + jitter * np.eye(n), lower=True)
        except LinAlgError:
            jitter *= 10.0
            continue
        if verbose:
            print(f"[GP] ⚠️ Gram not positive definite, added jitter {jitter:.1e} "
                  f"after {escalations} escalation(s)")
        return chol, jitter, escalations
    raise NumericError(f"Gram matrix stays indefinite with jitter up to {JITTER_CAP:g} * mean(diag K)")


def fit(inputs: Sequence, y, spec: KernelSpec, noise: float,
        gram_entries: Optional[np.ndarray] = None, workers: int = 1, verbose: bool = True) -> GPModel:
    """
    Condition a zero-mean GP on (inputs, y).

    Args:
        inputs: training measures (or vectors for point kernels)
        y: responses, one per input
        spec: kernel specification
        noise: observation-noise variance added to the Gram diagonal
        gram_entries: precomputed K, skips Gram assembly when given

    Returns:
        GPModel holding the Cholesky factor and alpha = (K + noise I)^{-1} y
    """
    inputs = tuple(inputs)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise InputError("responses must be finite")
    if len(inputs) == 0 or len(inputs) != y.shape[0]:
        raise InputError(f"need one response per input (got {len(inputs)} inputs, {y.shape[0]} responses)")
    if not (np.isfinite(noise) and noise > 0):
        raise InputError("noise variance must be positive")

    K = gram(inputs, spec, workers).entries if gram_entries is None else np.asarray(gram_entries, dtype=float)
    if not np.all(np.isfinite(K)):
        raise NumericError("Gram matrix has non-finite entries")
    chol, jitter, escalations = _factor(K, noise, verbose)
    alpha = cho_solve((chol, True), y)
    return GPModel(inputs, spec, float(noise), chol, alpha, y, K, jitter, escalations)


def predict_many(model: GPModel, test_inputs: Sequence, workers: int = 1) -> List[PredictiveSummary]:
    test_inputs = list(test_inputs)
    if not test_inputs:
        return []
    k_star = cross_gram(model.train_inputs, test_inputs, model.spec, workers)
    prior = kernel_diagonal(test_inputs, model.spec)
    means = k_star @ model.alpha
    v = solve_triangular(model.chol, k_star.T, lower=True)
    variances = prior - np.sum(v * v, axis=0)

    summaries = []
    for mean, var in zip(means, variances):
        clamped = bool(var < 0)
        summaries.append(PredictiveSummary(float(mean), max(float(var), 0.0), model.noise, clamped))
    return summaries


def predict(model: GPModel, test_input) -> PredictiveSummary:
    return predict_many(model, [test_input])[0]


def log_marginal_likelihood(model: GPModel) -> float:
    n = model.n_train
    return float(-0.5 * model.y @ model.alpha
                 - np.sum(np.log(np.diag(model.chol)))
                 - 0.5 * n * LOG_2PI)


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 3
    max_iter: int = 200
    seed: int = 0
    amplitude_range: Tuple[float, float] = (0.1, 10.0)
    scale_range: Tuple[float, float] = (0.01, 100.0)
    xatol: float = 1e-6
    verbose: bool = False

    def __post_init__(self):
        if self.restarts < 1:
            raise InputError("restarts must be at least 1")
        if self.max_iter < 0:
            raise InputError("max_iter must be nonnegative")


@dataclass(frozen=True, eq=False)
class HyperparamFit:
    spec: KernelSpec
    noise: float
    lml: float
    restart_objectives: Tuple[float, ...]
    initial_objectives: Tuple[float, ...]


def _median_positive(values):
    values = np.asarray(values, dtype=float).ravel()
    values = values[np.isfinite(values) & (values > 0)]
    return float(np.median(values)) if values.size else 1.0


def _upper(matrix):
    return matrix[np.triu_indices(matrix.shape[0], k=1)]


def _location(x):
    if isinstance(x, GaussianSummary):
        return x.mean
    if isinstance(x, Cloud):
        return gaussian_summary(x).mean
    return np.asarray(x, dtype=float)


class _Layout:
    """Maps a log-parameter vector onto (KernelSpec, noise) for one family.

    `kinds` tags each slot: "amp", "sigma" (exponent scale, ref is a distance),
    "ell" (length-scale, ref is a distance), "base" (MMD base length-scale),
    "noise".
    """

    def __init__(self, inputs, y, template: KernelSpec):
        family = template.family
        self.template = template
        locations = np.array([_location(x) for x in inputs], dtype=float)
        if locations.ndim == 1:
            locations = locations[:, None]
        d = locations.shape[1]
        diffs = np.abs(locations[:, None, :] - locations[None, :, :])
        loc_dist = _upper(np.linalg.norm(diffs, axis=2)) if len(inputs) > 1 else np.ones(1)

        self.kinds, self.refs = ["amp"], [1.0]
        if family in POINT_FAMILIES or family == KernelFamily.KME:
            self.kinds.append("ell")
            self.refs.append(_median_positive(loc_dist))
        elif family == KernelFamily.UIGP:
            for i in range(d):
                self.kinds.append("ell")
                self.refs.append(_median_positive(_upper(diffs[:, :, i])) if len(inputs) > 1 else 1.0)
        elif family == KernelFamily.MMD:
            base = _median_positive(loc_dist)
            stack = pairwise_distances(inputs, template.replace(base_lengthscale=base, scales=(1.0,)))
            self.kinds += ["sigma", "base"]
            self.refs += [_median_positive(_upper(stack.values[0])), base]
        else:
            probe = template
            if family == KernelFamily.PWA:
                probe = template.replace(scales=(1.0,) * d)
            stack = pairwise_distances(inputs, probe)
            for factor in stack.values:
                self.kinds.append("sigma")
                self.refs.append(_median_positive(_upper(factor)))
        self.kinds.append("noise")
        self.refs.append(1.0)
        self.y_var = float(np.var(y)) if np.var(y) > 0 else 1.0

    def bounds(self, config: OptimizerConfig):
        lo_a, hi_a = config.amplitude_range
        lo_s, hi_s = config.scale_range
        out = []
        for kind, ref in zip(self.kinds, self.refs):
            if kind == "amp":
                out.append((np.log(0.1 * lo_a * self.y_var), np.log(10.0 * hi_a * self.y_var)))
            elif kind == "noise":
                out.append((np.log(NOISE_FLOOR), np.log(max(self.y_var, 2 * NOISE_FLOOR))))
            elif kind == "sigma":
                out.append((np.log(lo_s / ref), np.log(hi_s / ref)))
            else:
                out.append((np.log(lo_s * ref), np.log(hi_s * ref)))
        return out

    def initial_points(self, config: OptimizerConfig):
        """First restart at the center of every range, the rest log-uniform draws."""
        rng = np.random.default_rng(config.seed)
        lo_a, hi_a = np.log(config.amplitude_range)
        lo_s, hi_s = np.log(config.scale_range)
        points = []
        for r in range(config.restarts):
            theta = []
            for kind, ref in zip(self.kinds, self.refs):
                if kind == "noise":
                    u = np.log(0.1) if r == 0 else rng.uniform(np.log(1e-3), np.log(0.5))
                    theta.append(np.log(self.y_var) + u)
                    continue
                if kind == "amp":
                    u = 0.0 if r == 0 else rng.uniform(lo_a, hi_a)
                    theta.append(np.log(self.y_var) + u)
                    continue
                u = 0.0 if r == 0 else rng.uniform(lo_s, hi_s)
                theta.append(u - np.log(ref) if kind == "sigma" else u + np.log(ref))
            points.append(np.array(theta))
        return points

    def unpack(self, theta):
        values = np.exp(np.asarray(theta, dtype=float))
        changes, scales, ells = {}, [], []
        noise = None
        for kind, value in zip(self.kinds, values):
            if kind == "amp":
                changes["amplitude"] = float(value)
            elif kind == "sigma":
                scales.append(float(value))
            elif kind == "ell":
                ells.append(float(value))
            elif kind == "base":
                changes["base_lengthscale"] = float(value)
            else:
                noise = float(value)
        family = self.template.family
        if family == KernelFamily.UIGP:
            changes["scales"] = tuple(ells)
        elif ells:
            changes["base_lengthscale"] = ells[0]
        if scales:
            changes["scales"] = tuple(scales)
        return self.template.replace(**changes), noise


def optimize_hyperparams(inputs: Sequence, y, template: KernelSpec,
                         config: Optional[OptimizerConfig] = None) -> HyperparamFit:
    """
    Maximize the log marginal likelihood over log-transformed hyperparameters.

    Nelder-Mead from `config.restarts` starting points; a restart stops when the
    simplex diameter drops below `config.xatol` in log space or after
    `config.max_iter` iterations. The transport order p, the basis and the SWGP
    directions stay as given in `template`.
    """
    config = config or OptimizerConfig()
    inputs = tuple(inputs)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise InputError("responses must be finite")
    if len(inputs) != y.shape[0] or not inputs:
        raise InputError("need one response per input")

    layout = _Layout(inputs, y, template)
    bounds = layout.bounds(config)
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])

    family = template.family
    stacks = {}

    def gram_for(spec):
        if family not in DISTANCE_FAMILIES:
            return gram(inputs, spec).entries
        key = spec.base_lengthscale if family == KernelFamily.MMD else None
        if key not in stacks:
            if family == KernelFamily.MMD:
                stacks.clear()
            stacks[key] = pairwise_distances(inputs, spec)
        return kernel_from_distances(stacks[key].values, spec)

    def objective(theta):
        spec, noise = layout.unpack(np.clip(theta, lower, upper))
        try:
            model = fit(inputs, y, spec, noise, gram_entries=gram_for(spec), verbose=False)
            value = -log_marginal_likelihood(model)
        except OTGPError:
            return PENALTY
        return value if np.isfinite(value) else PENALTY

    starts = [np.clip(t, lower, upper) for t in layout.initial_points(config)]
    initial_values, final_values = [], []
    best_theta, best_value = None, np.inf

    for theta0 in tqdm(starts, desc="[Optimizer] restarts", disable=not config.verbose, leave=False):
        value0 = objective(theta0)
        theta, value = theta0, value0
        if config.max_iter > 0:
            result = minimize(objective, theta0, method="Nelder-Mead",
                              bounds=list(zip(lower, upper)),
                              options={"maxiter": config.max_iter, "xatol": config.xatol,
                                       "fatol": np.inf})
            if result.fun < value0:
                theta, value = result.x, float(result.fun)
        initial_values.append(value0)
        final_values.append(value)
        if value < best_value:
            best_theta, best_value = theta, value

    if best_value >= PENALTY:
        raise NumericError(
            f"no restart produced a finite objective for {family.value} "
            f"(initial objectives: {initial_values})"
        )
    spec, noise = layout.unpack(np.clip(best_theta, lower, upper))
    if config.verbose:
        print(f"[Optimizer] ✅ {family.value}: best log marginal likelihood {-best_value:.4f}")
    return HyperparamFit(spec, noise, -best_value,
                         tuple(-v for v in final_values), tuple(-v for v in initial_values))


# ---------------------------------------------------------------------------
# aggregated baseline
# ---------------------------------------------------------------------------

def _replicate_count(clouds, test_clouds):
    counts = {c.n_samples for c in list(clouds) + list(test_clouds)}
    if len(counts) != 1:
        raise UnsupportedCaseError(f"all clouds need the same replicate count, got {sorted(counts)}")
    return counts.pop()


def aggregated_models(clouds: Sequence[Cloud], y, spec: KernelSpec, noise: float) -> List[GPModel]:
    """One point-input GP per replicate index j, trained on the j-th sample of every cloud."""
    if spec.family not in POINT_FAMILIES:
        raise InputError("the aggregated GP uses a point kernel")
    J = _replicate_count(clouds, [])
    return [fit([c.points[j] for c in clouds], y, spec, noise, verbose=False) for j in range(J)]


def aggregated_predict(models: Sequence[GPModel], test_clouds: Sequence[Cloud]) -> List[PredictiveSummary]:
    """
    Replicate j predicts each test cloud at its j-th sample; mean and variance
    are combined by the law of total variance.
    """
    J = len(models)
    if any(c.n_samples != J for c in test_clouds):
        raise UnsupportedCaseError(f"test clouds need {J} replicates each")

    means, variances, clamped = [], [], np.zeros(len(test_clouds), dtype=bool)
    for j, model in enumerate(models):
        preds = predict_many(model, [c.points[j] for c in test_clouds])
        means.append([p.mean for p in preds])
        variances.append([p.variance for p in preds])
        clamped |= np.array([p.clamped for p in preds], dtype=bool)

    means = np.array(means)
    variances = np.array(variances)
    agg_mean = means.mean(axis=0)
    agg_var = variances.mean(axis=0) + means.var(axis=0)
    noise = models[0].noise
    return [PredictiveSummary(float(m), float(v), noise, bool(c))
            for m, v, c in zip(agg_mean, agg_var, clamped)]


def aggregated_fit_predict(clouds: Sequence[Cloud], y, spec: KernelSpec, noise: float,
                           test_clouds: Sequence[Cloud]) -> List[PredictiveSummary]:
    """Aggregated baseline: replicate-wise point GPs, combined by the law of total variance."""
    if spec.family not in POINT_FAMILIES:
        raise InputError("the aggregated GP uses a point kernel")
    _replicate_count(clouds, test_clouds)
    return aggregated_predict(aggregated_models(clouds, y, spec, noise), test_clouds)
