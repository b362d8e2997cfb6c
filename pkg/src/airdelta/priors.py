"""Prior log-densities: penalized-complexity priors plus vague Gaussians.

Each PC prior is pinned by a tail-probability statement and reduces to an
exponential density on a distance from a base model:

  * standard deviations: P(sigma > u) = alpha, exponential on sigma with
    rate -ln(alpha) / u;
  * Matern (range, sd) jointly: P(range < u_range) = alpha_range and
    P(sd > u_sd) = alpha_sd, giving density
    lam_r * range^-2 * exp(-lam_r / range) * lam_s * exp(-lam_s * sd)
    with lam_r = -ln(alpha_range) * u_range (spatial dimension 2);
  * AR(1) coefficient with base model a = 1: exponential on the distance
    d(a) = sqrt(1 - a), truncated to d in (0, sqrt(2)), with the rate solved
    from P(a > u) = alpha.

For the AR(1) prior the solved rate is negative whenever
alpha < sqrt((1 - u) / 2) (the decreasing-density family cannot reach such
tail probabilities); the signed rate keeps the density proper and the tail
constraint exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from airdelta.errors import DataError, NumericalError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PcSdPrior:
    u: float  # threshold
    alpha: float  # tail probability P(sigma > u)

    def __post_init__(self):
        if not (self.u > 0 and 0 < self.alpha < 1):
            raise DataError(f"invalid sd prior {self}")

    @property
    def rate(self) -> float:
        return -math.log(self.alpha) / self.u


@dataclass(frozen=True)
class PcMaternJointPrior:
    u_range: float  # km
    alpha_range: float  # P(range < u_range)
    u_sd: float
    alpha_sd: float  # P(sd > u_sd)

    def __post_init__(self):
        ok = (
            self.u_range > 0
            and self.u_sd > 0
            and 0 < self.alpha_range < 1
            and 0 < self.alpha_sd < 1
        )
        if not ok:
            raise DataError(f"invalid Matern joint prior {self}")

    @property
    def rate_range(self) -> float:
        return -math.log(self.alpha_range) * self.u_range

    @property
    def rate_sd(self) -> float:
        return -math.log(self.alpha_sd) / self.u_sd


@dataclass(frozen=True)
class PcAr1Prior:
    u: float  # threshold on the coefficient
    alpha: float  # P(a > u)

    def __post_init__(self):
        if not (-1 < self.u < 1 and 0 < self.alpha < 1):
            raise DataError(f"invalid AR(1) prior {self}")

    @property
    def rate(self) -> float:
        return _ar1_rate(self.u, self.alpha)


@dataclass(frozen=True)
class PriorConfig:
    sd_eps: PcSdPrior = field(default_factory=lambda: PcSdPrior(1.0, 0.1))
    sd_v: PcSdPrior = field(default_factory=lambda: PcSdPrior(1.0, 0.1))
    matern: PcMaternJointPrior = field(
        default_factory=lambda: PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    )
    ar1: PcAr1Prior = field(default_factory=lambda: PcAr1Prior(0.8, 0.3))
    coef_sd: float = 1000.0  # vague Gaussian sd for all linear coefficients

    def __post_init__(self):
        if not self.coef_sd > 0:
            raise DataError("coef_sd must be positive")


def _ar1_cdf_below(d0: float, rate: float) -> float:
    """P(d < d0) for the exponential on (0, sqrt(2)) with signed rate."""
    if abs(rate) < 1e-13:
        return d0 / SQRT2
    return math.expm1(-rate * d0) / math.expm1(-rate * SQRT2)


@lru_cache(maxsize=64)
def _ar1_rate(u: float, alpha: float) -> float:
    """Solve P(a > u) = alpha for the truncated-exponential rate by bisection.

    P(a > u) = P(d < sqrt(1 - u)) is strictly increasing in the rate, so the
    root is unique; it is negative when alpha < sqrt((1 - u) / 2).
    """
    d0 = math.sqrt(1.0 - u)
    lo, hi = -1.0, 1.0
    while _ar1_cdf_below(d0, lo) > alpha:
        lo *= 2.0
        if lo < -1e8:
            raise NumericalError(f"AR(1) prior rate bracket failed for {(u, alpha)}")
    while _ar1_cdf_below(d0, hi) < alpha:
        hi *= 2.0
        if hi > 1e8:
            raise NumericalError(f"AR(1) prior rate bracket failed for {(u, alpha)}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _ar1_cdf_below(d0, mid) < alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def pc_ar1_quantile(p: float, prior: PcAr1Prior) -> float:
    """Quantile of the AR(1) PC prior on the coefficient scale (bisection)."""
    if not 0 < p < 1:
        raise DataError(f"quantile level must be in (0, 1), got {p}")
    rate = prior.rate
    lo, hi = -1.0 + 1e-12, 1.0 - 1e-12
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        # P(a <= mid) = 1 - P(d < d(mid))
        cdf = 1.0 - _ar1_cdf_below(math.sqrt(1.0 - mid), rate)
        if cdf < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pc_sd_logdensity(sigma: float, prior: PcSdPrior) -> float:
    """Log density of the exponential PC prior on a standard deviation."""
    if sigma <= 0:
        raise DataError(f"sd must be positive, got {sigma}")
    lam = prior.rate
    return math.log(lam) - lam * sigma


def pc_matern_joint_logdensity(
    range_km: float, sd: float, prior: PcMaternJointPrior
) -> float:
    """Log density of the joint PC prior on (range, sd) of the Matern field."""
    if range_km <= 0 or sd <= 0:
        raise DataError(f"range and sd must be positive, got {(range_km, sd)}")
    lam_r, lam_s = prior.rate_range, prior.rate_sd
    log_range = math.log(lam_r) - 2.0 * math.log(range_km) - lam_r / range_km
    log_sd = math.log(lam_s) - lam_s * sd
    return log_range + log_sd


def pc_ar1_logdensity(coef: float, prior: PcAr1Prior) -> float:
    """Log density of the PC prior on the AR(1) coefficient (base model a = 1).

    Exponential with signed rate on d(a) = sqrt(1 - a), truncated to
    (0, sqrt(2)), times the Jacobian |dd/da| = 1 / (2 sqrt(1 - a)).
    """
    if not -1 < coef < 1:
        raise DataError(f"AR(1) coefficient must satisfy |a| < 1, got {coef}")
    lam = prior.rate
    d = math.sqrt(1.0 - coef)
    if abs(lam) < 1e-13:
        log_d_density = -math.log(SQRT2)
    else:
        # signed-rate exponential normalized on (0, sqrt(2)):
        # lam * exp(-lam d) / (1 - exp(-lam sqrt(2)))
        log_norm = math.log(abs(lam)) - math.log(abs(-math.expm1(-lam * SQRT2)))
        log_d_density = log_norm - lam * d
    return log_d_density - math.log(2.0 * d)


def coef_logprior(coefs: np.ndarray, coef_sd: float) -> float:
    """Sum of independent zero-mean Gaussian log densities with sd = coef_sd."""
    coefs = np.asarray(coefs, dtype=float)
    if not np.all(np.isfinite(coefs)):
        raise DataError("non-finite coefficient vector")
    n = coefs.size
    return float(
        -0.5 * n * math.log(2.0 * math.pi)
        - n * math.log(coef_sd)
        - 0.5 * np.sum(coefs**2) / coef_sd**2
    )


def hyper_logprior(a: float, range_km: float, sigma_eps: float, sigma_v: float,
                   sigma_omega: float, priors: PriorConfig) -> float:
    """Sum of the four hyperparameter prior log densities."""
    return (
        pc_sd_logdensity(sigma_eps, priors.sd_eps)
        + pc_sd_logdensity(sigma_v, priors.sd_v)
        + pc_matern_joint_logdensity(range_km, sigma_omega, priors.matern)
        + pc_ar1_logdensity(a, priors.ar1)
    )
