"""Uniform error bands for GP regression on 1D measures under W1.

The band at a test measure mu reads

    |f(mu) - nu_N(mu)| <= sqrt(beta(tau)) * sigma_N(mu) + gamma(tau)

with probability at least 1 - delta. tau is the radius of a finite net over
the measure class; beta and gamma come from the net size and the Lipschitz
constants of the kernel, the posterior mean and the posterior deviation.
"""

import math
from dataclasses import asdict, dataclass, fields
from itertools import combinations_with_replacement
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import ndtr, ndtri

from errors import InputError, ParseError, ResourceError
from gp import GPModel
from kernels import KernelFamily, KernelSpec
from measures import Cloud, Marginal1D, ProjectionBasis, marginal_from_values, project, project_cloud
from transport import wp_1d

DEFAULT_MAX_NET = 200_000


@dataclass(frozen=True)
class MeasureClassSpec:
    """Measures on [a, b] whose quantile functions are `lipschitz`-Lipschitz."""
    a: float
    b: float
    lipschitz: float
    covering_constant: Optional[float] = None
    covering_exponent: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise InputError(f"support must satisfy a < b, got [{self.a}, {self.b}]")
        if not (np.isfinite(self.lipschitz) and self.lipschitz > 0):
            raise InputError("quantile Lipschitz bound must be positive")


@dataclass(frozen=True)
class BandCertificate:
    tau: float
    delta: float
    net_size: int
    beta: float
    gamma: float
    L_f: float
    L_k: float
    L_nuN: float
    omega: float

    def to_record(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            text = str(value) if key == "net_size" else format(value, ".17g")
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"

    def is_consistent(self, tol: float = 1e-10) -> bool:
        beta = float(ndtri(self.delta / (2.0 * self.net_size)) ** 2)
        gamma = (self.L_f + self.L_nuN) * self.tau + math.sqrt(beta) * self.omega
        return abs(beta - self.beta) <= tol * max(1.0, beta) and abs(gamma - self.gamma) <= tol * max(1.0, gamma)


@dataclass(frozen=True)
class Verdict:
    holds: bool
    margin: float
    threshold: float


def parse_certificate(text: str) -> BandCertificate:
    values = {}
    for row, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", row)
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = (raw, row)

    kwargs = {}
    for f in fields(BandCertificate):
        if f.name not in values:
            raise ParseError(f"certificate is missing {f.name!r}")
        raw, row = values[f.name]
        try:
            kwargs[f.name] = int(raw) if f.name == "net_size" else float(raw)
        except ValueError:
            raise ParseError(f"{f.name} is not a number: {raw!r}", row) from None
    return BandCertificate(**kwargs)


# ---------------------------------------------------------------------------
# covering net
# ---------------------------------------------------------------------------

def net_grid(cls: MeasureClassSpec, tau: float) -> Tuple[int, int]:
    """(q-cells, value levels) of the net at radius tau."""
    if not (np.isfinite(tau) and tau > 0):
        raise InputError("net radius tau must be positive")
    if tau >= (cls.b - cls.a) / 2.0:
        return 1, 1
    cells = max(1, math.ceil(2.0 * cls.lipschitz / tau))
    levels = max(1, math.ceil(2.0 * (cls.b - cls.a) / tau))
    return cells, levels


def net_size(cls: MeasureClassSpec, tau: float) -> int:
    """Number of nondecreasing level sequences over the q-cells; the net is never built."""
    cells, levels = net_grid(cls, tau)
    return math.comb(levels + cells - 1, cells)


def quantile_net(cls: MeasureClassSpec, tau: float,
                 max_size: int = DEFAULT_MAX_NET) -> Tuple[List[Marginal1D], int]:
    """
    Explicit tau-net in W1 over the Lipschitz-quantile class.

    Members have quantile functions constant on K equal q-cells (width <= tau / (2 l))
    with nondecreasing values taken from the midpoints of G equal cells of [a, b]
    (spacing <= tau / 2). Rounding a class member's quantile at each cell center
    costs at most tau / 4 twice, so every member is within tau / 2 of the net.

    Returns:
        (net members in lexicographic order, net size)
    """
    cells, levels = net_grid(cls, tau)
    size = net_size(cls, tau)
    if size > max_size:
        raise ResourceError(f"net of size {size} exceeds the cap of {max_size}; increase tau")

    width = (cls.b - cls.a) / levels
    grid = cls.a + (np.arange(levels) + 0.5) * width
    weights = np.full(cells, 1.0 / cells)
    net = [marginal_from_values(grid[list(idx)], weights)
           for idx in combinations_with_replacement(range(levels), cells)]
    return net, size


def nearest_net_distance(m: Marginal1D, net: Sequence[Marginal1D]) -> Tuple[int, float]:
    """Index of and W1 distance to the closest net member (exhaustive search)."""
    if not net:
        raise InputError("net is empty")
    distances = [wp_1d(m, member, 1.0) for member in net]
    best = int(np.argmin(distances))
    return best, float(distances[best])


# ---------------------------------------------------------------------------
# Lipschitz constants and the band
# ---------------------------------------------------------------------------

def kernel_lipschitz_w1(spec: KernelSpec) -> float:
    """L_k = lambda * sigma for k = lambda exp(-sigma W1)."""
    if spec.family != KernelFamily.WGP or spec.p != 1:
        raise InputError("the W1 Lipschitz constant is available for WGP kernels with p = 1")
    return spec.amplitude * spec.sigma


def posterior_mean_lipschitz(model: GPModel, L_k: float) -> float:
    return float(model.n_train * L_k * np.max(np.abs(model.alpha)))


def sigma_modulus(model: GPModel, L_k: float, tau: float) -> float:
    """
    Hoelder-1/2 modulus of the posterior deviation.

    |sigma_N^2(mu) - sigma_N^2(nu)| <= L_s2 * W1(mu, nu) with
    L_s2 = L_k * (1 + 2 N ||(K + s^2 I)^{-1}||_inf * lambda), and
    |sqrt(s) - sqrt(t)| <= sqrt(|s - t|).
    """
    if tau < 0:
        raise InputError("tau must be nonnegative")
    n = model.n_train
    inverse = cho_solve((model.chol, True), np.eye(n))
    inv_norm = float(np.max(np.sum(np.abs(inverse), axis=1)))
    L_s2 = L_k * (1.0 + 2.0 * n * inv_norm * model.spec.amplitude)
    return float(np.sqrt(L_s2 * tau))


def band(tau: float, delta: float, net_size: int, L_f: float, L_nuN: float,
         omega: float, L_k: float = 0.0) -> BandCertificate:
    if not 0.0 < delta < 1.0:
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    if net_size < 1:
        raise InputError("net size must be at least 1")
    if tau < 0 or omega < 0 or L_f < 0 or L_nuN < 0:
        raise InputError("tau, omega and Lipschitz constants must be nonnegative")
    # Phi^{-1}(1 - x) = -Phi^{-1}(x); the lower tail keeps precision for large nets
    beta = float(ndtri(delta / (2.0 * net_size)) ** 2)
    gamma = (L_f + L_nuN) * tau + math.sqrt(beta) * omega
    return BandCertificate(float(tau), float(delta), int(net_size), beta, float(gamma),
                           float(L_f), float(L_k), float(L_nuN), float(omega))


def certify_model(model: GPModel, cls: MeasureClassSpec, tau: float, delta: float,
                  L_f: float) -> BandCertificate:
    """Net size, Lipschitz constants and band for a fitted 1D WGP model with p = 1."""
    if L_f < 0:
        raise InputError("L_f must be nonnegative")
    L_k = kernel_lipschitz_w1(model.spec)
    size = net_size(cls, tau)
    L_nuN = posterior_mean_lipschitz(model, L_k)
    omega = sigma_modulus(model, L_k, tau)
    return band(tau, delta, size, L_f, L_nuN, omega, L_k)


def conservative_condition(z: float, cert: BandCertificate, sigma_n: float) -> Verdict:
    """The z-interval contains the uniform band iff z > sqrt(beta) and sigma_N >= gamma / (z - sqrt(beta))."""
    if not z > 0:
        raise InputError("z must be positive")
    root = math.sqrt(cert.beta)
    if z <= root:
        return Verdict(False, -math.inf, math.inf)
    threshold = cert.gamma / (z - root)
    margin = sigma_n - threshold
    return Verdict(bool(margin >= 0), float(margin), float(threshold))


def band_halfwidth(cert: BandCertificate, sigma_n: float) -> float:
    return math.sqrt(cert.beta) * sigma_n + cert.gamma


def net_extension_bound(B: float, sigma_n: float, L_f: float, L_nuN: float,
                        tau: float, omega: float) -> float:
    """Error bound off the net, given |f - nu_N| <= B sigma_N on every net member."""
    return B * sigma_n + (L_f + L_nuN) * tau + B * omega


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def pcpwa_metric(mu: Cloud, nu: Cloud, basis: ProjectionBasis, weights: Sequence[float]) -> float:
    """Weighted l2 combination of projected W1 distances."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.size,):
        raise InputError(f"expected {basis.size} weights, got {weights.shape}")
    if np.any(weights <= 0):
        raise InputError("direction weights must be positive")
    terms = [a * wp_1d(project(mu, v), project(nu, v), 1.0) ** 2 for a, v in zip(weights, basis)]
    return float(np.sqrt(np.sum(terms)))


def projected_clouds(clouds: Sequence[Cloud], v) -> List[Cloud]:
    """1D clouds along direction v, for a certificate on explicitly projected data."""
    return [project_cloud(c, v) for c in clouds]


# ---------------------------------------------------------------------------
# input-noise undercoverage
# ---------------------------------------------------------------------------

def naive_coverage(w, cov_x, sigma: float, alpha: float) -> float:
    """
    Coverage of the interval +- z_{1-alpha/2} sigma when the input carries
    N(0, cov_x) noise that the interval ignores (linear model y = w^T x + eps).
    """
    if not 0.0 < alpha < 1.0:
        raise InputError("alpha must lie in (0, 1)")
    if not sigma > 0:
        raise InputError("sigma must be positive")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    cov_x = np.atleast_2d(np.asarray(cov_x, dtype=float))
    if cov_x.shape != (w.size, w.size):
        raise InputError("input covariance does not match w")
    spread = max(float(w @ cov_x @ w), 0.0)
    z = -ndtri(alpha / 2.0)
    return float(2.0 * ndtr(z * sigma / np.sqrt(sigma ** 2 + spread)) - 1.0)
