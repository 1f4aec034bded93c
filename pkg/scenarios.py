"""Seeded synthetic benchmarks with cloud-valued covariates.

Every random draw comes from its own counter-based stream keyed by
(seed, scenario, split, group index, purpose), so adding groups or changing
the test size never shifts an existing draw.
"""

import hashlib
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import ndtri

from bounds import naive_coverage
from errors import InputError
from measures import Cloud, from_samples, marginal, quantile

SCENARIOS = ("1D-EIV", "1D-Var", "1D-Skew", "2D-mean", "2D-aniso-PC", "HD-Ackley-5D", "HD-Ackley-10D")
EIV_TARGETS = ("default", "figure")

# n_train = n_test per scenario family
DEFAULT_SIZES = {"1D": 60, "2D": 40, "HD": 80}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Generator settings. `noise_base` / `noise_slope` give the input-noise
    schedule sd = base + slope * x (1D-EIV) or the parallel sd in z (2D-aniso-PC).
    """
    name: str
    n_train: int
    n_test: int
    samples_per_cloud: int = 10
    seed: int = 0
    output_sd: float = 0.05
    noise_base: float = 0.02
    noise_slope: float = 0.08
    perp_sd: float = 0.01
    angle_deg: float = 45.0
    location_range: Tuple[float, float] = (0.0, 1.0)
    spread_range: Tuple[float, float] = (0.05, 0.3)
    input_sd: float = 0.1
    box: float = 2.0
    eiv_target: str = "default"

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise InputError(f"unknown scenario {self.name!r}; valid: {', '.join(SCENARIOS)}")
        if min(self.n_train, self.n_test, self.samples_per_cloud) < 1:
            raise InputError("n_train, n_test and samples_per_cloud must be at least 1")
        if self.seed < 0:
            raise InputError("seed must be nonnegative")
        if min(self.output_sd, self.noise_base, self.noise_slope, self.perp_sd, self.input_sd) < 0:
            raise InputError("noise levels must be nonnegative")
        lo, hi = self.location_range
        s_lo, s_hi = self.spread_range
        if lo > hi or s_lo > s_hi or s_lo < 0:
            raise InputError("sampling ranges must be ordered and spreads nonnegative")
        if self.box <= 0:
            raise InputError("Ackley box half-width must be positive")
        if self.eiv_target not in EIV_TARGETS:
            raise InputError(f"eiv_target must be one of {EIV_TARGETS}")

    @property
    def family(self):
        return self.name.split("-")[0]

    @property
    def dim(self):
        if self.name.startswith("HD-Ackley-"):
            return int(self.name.split("-")[-1].rstrip("D"))
        return 2 if self.family == "2D" else 1

    def size(self, split):
        return self.n_train if split == "train" else self.n_test


@dataclass(frozen=True, eq=False)
class Group:
    group_id: int
    cloud: Cloud
    y: float


@dataclass(frozen=True, eq=False)
class Dataset:
    groups: Tuple[Group, ...]
    latent: Optional[Tuple[Dict[str, object], ...]] = None
    name: str = ""
    split: str = ""

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise InputError("a dataset needs at least one group")
        ids = [g.group_id for g in groups]
        if len(set(ids)) != len(ids):
            raise InputError("group ids must be unique")
        if len({g.cloud.dim for g in groups}) != 1:
            raise InputError("all clouds must share one dimension")
        if self.latent is not None and len(self.latent) != len(groups):
            raise InputError("need one latent record per group")
        object.__setattr__(self, "groups", groups)

    @property
    def clouds(self):
        return [g.cloud for g in self.groups]

    @property
    def y(self):
        return np.array([g.y for g in self.groups], dtype=float)

    @property
    def group_ids(self):
        return [g.group_id for g in self.groups]

    @property
    def dim(self):
        return self.groups[0].cloud.dim

    def __len__(self):
        return len(self.groups)


def _tag(text: str) -> int:
    return int.from_bytes(hashlib.md5(text.encode("utf-8")).digest()[:8], "little")


def stream(seed: int, scenario: str, split: str, group: int, purpose: str) -> np.random.Generator:
    """Independent Philox stream for one (seed, scenario, split, group, purpose) key."""
    key = np.random.SeedSequence([int(seed), _tag(scenario), _tag(split), int(group), _tag(purpose)])
    return np.random.Generator(np.random.Philox(key))


def ackley(x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size < 1:
        raise InputError("ackley needs a vector with at least one coordinate")
    a, b, c = 20.0, 0.2, 2.0 * np.pi
    return float(-a * np.exp(-b * np.sqrt(np.mean(x ** 2))) - np.exp(np.mean(np.cos(c * x))) + a + np.e)


def oscillatory_target(x: float) -> float:
    return float(np.sin(4.0 * np.pi * x) + 0.5 * x)


def figure_target(x: float) -> float:
    if x == 0:
        raise InputError("figure target is undefined at x = 0")
    return float(np.sin(10.0 * np.pi * x) / (2.0 * x) + (x - 1.0) ** 4)


def location_functional(points) -> float:
    """Mean of sin(u) + 2 exp(u) over samples and coordinates."""
    points = np.asarray(points, dtype=float)
    return float(np.mean(np.sin(points) + 2.0 * np.exp(points)))


def inter_quantile_range(c: Cloud, low: float = 0.2, high: float = 0.8) -> float:
    m = marginal(c, 0)
    return quantile(m, high) - quantile(m, low)


def _grid(n):
    return np.linspace(0.05, 0.95, n)


def _locations(cfg, split):
    """Training inputs on the even grid; test inputs one per equal stratum of [0.05, 0.95], off the grid."""
    n = cfg.size(split)
    if split == "train":
        return _grid(n)
    offsets = np.array([_draws(cfg, split, i, "location").uniform() for i in range(n)])
    return 0.05 + (np.arange(n) + offsets) * (0.9 / n)


def _draws(cfg, split, i, purpose):
    return stream(cfg.seed, cfg.name, split, i, purpose)


def _noise(cfg, split, i):
    return cfg.output_sd * _draws(cfg, split, i, "output").standard_normal()


def gen_1d_eiv(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    """Clouds x_i + N(0, sd_i^2) with sd_i growing in x_i; y = f(x_i) + eta_i."""
    target = figure_target if cfg.eiv_target == "figure" else oscillatory_target
    groups, latent = [], []
    for i, x in enumerate(_locations(cfg, split)):
        sd = cfg.noise_base + cfg.noise_slope * x
        samples = x + sd * _draws(cfg, split, i, "cloud").standard_normal(cfg.samples_per_cloud)
        f, eta = target(x), _noise(cfg, split, i)
        groups.append(Group(i, from_samples(samples), f + eta))
        latent.append({"x": float(x), "sd": float(sd), "f": f, "eta": eta})
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


def gen_1d_var(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    """Gaussian clouds N(mu_i, s_i^2); y = sin(2 pi mu_i) + 0.5 s_i^2 + eta_i."""
    groups, latent = [], []
    for i in range(cfg.size(split)):
        rng = _draws(cfg, split, i, "latent")
        mu = rng.uniform(*cfg.location_range)
        s = rng.uniform(*cfg.spread_range)
        samples = mu + s * _draws(cfg, split, i, "cloud").standard_normal(cfg.samples_per_cloud)
        f, eta = float(np.sin(2.0 * np.pi * mu) + 0.5 * s ** 2), _noise(cfg, split, i)
        groups.append(Group(i, from_samples(samples), f + eta))
        latent.append({"mu": float(mu), "s": float(s), "f": f, "eta": eta})
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


def gen_1d_skew(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    """Log-normal clouds exp(N(m_i, s_i^2)); y = IQR_{0.2,0.8}(cloud) + 0.3 sin(m_i) + eta_i."""
    groups, latent = [], []
    for i in range(cfg.size(split)):
        rng = _draws(cfg, split, i, "latent")
        m = rng.uniform(*cfg.location_range)
        s = rng.uniform(*cfg.spread_range)
        samples = np.exp(m + s * _draws(cfg, split, i, "cloud").standard_normal(cfg.samples_per_cloud))
        cloud = from_samples(samples)
        iqr = inter_quantile_range(cloud)
        f, eta = iqr + 0.3 * float(np.sin(m)), _noise(cfg, split, i)
        groups.append(Group(i, cloud, f + eta))
        latent.append({"m": float(m), "s": float(s), "iqr": iqr, "f": f, "eta": eta})
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


def gen_2d_mean(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    """Diagonal-Gaussian clouds in R^2; y = location functional of the cloud + eta_i."""
    groups, latent = [], []
    for i in range(cfg.size(split)):
        rng = _draws(cfg, split, i, "latent")
        mu = rng.uniform(*cfg.location_range, size=2)
        var = rng.uniform(*cfg.spread_range, size=2)
        eps = _draws(cfg, split, i, "cloud").standard_normal((cfg.samples_per_cloud, 2))
        samples = mu + np.sqrt(var) * eps
        f, eta = location_functional(samples), _noise(cfg, split, i)
        groups.append(Group(i, from_samples(samples), f + eta))
        latent.append({"mu1": float(mu[0]), "mu2": float(mu[1]),
                       "var1": float(var[0]), "var2": float(var[1]), "f": f, "eta": eta})
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


def rotation(angle_deg: float) -> np.ndarray:
    t = np.deg2rad(angle_deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def gen_2d_aniso_pc(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    """Clouds stretched along a rotated axis with z-dependent parallel noise; y = sin(4 pi z) + 0.5 z + eta."""
    rot = rotation(cfg.angle_deg)
    groups, latent = [], []
    for i, z in enumerate(_locations(cfg, split)):
        sd_par = cfg.noise_base + cfg.noise_slope * z
        eps = _draws(cfg, split, i, "cloud").standard_normal((cfg.samples_per_cloud, 2))
        local = np.column_stack([z + sd_par * eps[:, 0], cfg.perp_sd * eps[:, 1]])
        samples = local @ rot.T
        f, eta = float(np.sin(4.0 * np.pi * z) + 0.5 * z), _noise(cfg, split, i)
        groups.append(Group(i, from_samples(samples), f + eta))
        latent.append({"z": float(z), "sd_par": float(sd_par), "f": f, "eta": eta})
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


def gen_hd_ackley(cfg: ScenarioConfig, split: str = "train", d: Optional[int] = None) -> Dataset:
    """Isotropic clouds around x_i ~ U[-box, box]^d; y = ackley(x_i) + eta_i."""
    d = cfg.dim if d is None else d
    if d < 1:
        raise InputError("Ackley dimension must be at least 1")
    groups, latent = [], []
    for i in range(cfg.size(split)):
        x = _draws(cfg, split, i, "latent").uniform(-cfg.box, cfg.box, size=d)
        eps = _draws(cfg, split, i, "cloud").standard_normal((cfg.samples_per_cloud, d))
        samples = x + cfg.input_sd * eps
        f, eta = ackley(x), _noise(cfg, split, i)
        groups.append(Group(i, from_samples(samples), f + eta))
        record = {f"x{k + 1}": float(v) for k, v in enumerate(x)}
        record.update({"f": f, "eta": eta})
        latent.append(record)
    return Dataset(tuple(groups), tuple(latent), cfg.name, split)


GENERATORS = {
    "1D-EIV": gen_1d_eiv,
    "1D-Var": gen_1d_var,
    "1D-Skew": gen_1d_skew,
    "2D-mean": gen_2d_mean,
    "2D-aniso-PC": gen_2d_aniso_pc,
    "HD-Ackley-5D": gen_hd_ackley,
    "HD-Ackley-10D": gen_hd_ackley,
}

_SCENARIO_DEFAULTS = {
    "1D-EIV": {},
    "1D-Var": {"location_range": (0.0, 1.0), "spread_range": (0.05, 0.3)},
    "1D-Skew": {"location_range": (0.0, 1.0), "spread_range": (0.1, 0.5)},
    "2D-mean": {"location_range": (0.1, 1.0), "spread_range": (0.01, 0.04)},
    "2D-aniso-PC": {"noise_base": 0.02, "noise_slope": 0.1, "perp_sd": 0.01, "angle_deg": 45.0},
    "HD-Ackley-5D": {"input_sd": 0.1, "box": 2.0},
    "HD-Ackley-10D": {"input_sd": 0.1, "box": 2.0},
}


def default_config(name: str, seed: int = 0, **overrides) -> ScenarioConfig:
    """Documented defaults for a scenario; keyword overrides win."""
    if name not in SCENARIOS:
        raise InputError(f"unknown scenario {name!r}; valid: {', '.join(SCENARIOS)}")
    n = DEFAULT_SIZES[name.split("-")[0]]
    settings = {"n_train": n, "n_test": n, "seed": seed}
    settings.update(_SCENARIO_DEFAULTS[name])
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(name=name, **settings)


def generate(cfg: ScenarioConfig, split: str = "train") -> Dataset:
    if split not in ("train", "test"):
        raise InputError(f"split must be 'train' or 'test', got {split!r}")
    return GENERATORS[cfg.name](cfg, split)


def make_splits(cfg: ScenarioConfig) -> Tuple[Dataset, Dataset]:
    return generate(cfg, "train"), generate(cfg, "test")


def prop1_demo(w, cov_x, sigma: float, alpha: float, n_draws: int, seed: int = 0) -> Tuple[float, float]:
    """Analytic vs simulated coverage of the interval that ignores input noise."""
    if n_draws < 1:
        raise InputError("n_draws must be at least 1")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    cov_x = np.atleast_2d(np.asarray(cov_x, dtype=float))
    analytic = naive_coverage(w, cov_x, sigma, alpha)

    rng = stream(seed, "prop1", "demo", 0, "draws")
    eps_x = rng.multivariate_normal(np.zeros(w.size), cov_x, size=n_draws)
    eps = sigma * rng.standard_normal(n_draws)
    half_width = -ndtri(alpha / 2.0) * sigma
    simulated = float(np.mean(np.abs(eps_x @ w + eps) <= half_width))
    return analytic, simulated


def with_overrides(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
