"""Matern spatial covariance, AR(1) temporal correlation, separable product.

Conventions:
  * the range parameter is the distance at which the Matern correlation has
    dropped to roughly 0.1, i.e. kappa = sqrt(8 nu) / range;
  * by default the AR(1) process is scaled so that the Matern variance is
    the *marginal* variance of the space-time field (innovation variance
    (1 - a^2) sigma^2); `raw_innovation=True` instead treats sigma^2 as the
    innovation variance, giving marginal variance sigma^2 / (1 - a^2).

Distances are planar km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz
from scipy.linalg.lapack import dpotrf
from scipy.special import gammaln, kv

from airdelta.errors import CholeskyError, DataError

DEFAULT_JITTER_SCALE = 1e-8  # x sigma^2, added to covariance diagonals


@dataclass(frozen=True)
class MaternParams:
    sigma: float  # standard deviation of the field
    range_km: float  # correlation-0.1 distance
    smoothness: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.range_km > 0 and self.smoothness > 0):
            raise DataError(f"invalid Matern parameters {self}")

    @property
    def kappa(self) -> float:
        return math.sqrt(8.0 * self.smoothness) / self.range_km


@dataclass(frozen=True)
class Ar1Params:
    coef: float

    def __post_init__(self):
        if not abs(self.coef) < 1:
            raise DataError(f"AR(1) coefficient must satisfy |a| < 1, got {self.coef}")


@dataclass(frozen=True)
class HyperParameters:
    """Full hyperparameter vector of the month model."""

    ar1: Ar1Params
    matern: MaternParams
    sigma_eps: float  # measurement-error sd
    sigma_v: float  # iid site-effect sd

    def __post_init__(self):
        if not (
            self.sigma_eps > 0
            and self.sigma_v > 0
            and math.isfinite(self.sigma_eps)
            and math.isfinite(self.sigma_v)
        ):
            raise DataError(f"invalid noise standard deviations in {self}")

    @property
    def a(self) -> float:
        return self.ar1.coef

    @property
    def sigma_omega(self) -> float:
        return self.matern.sigma

    @property
    def range_km(self) -> float:
        return self.matern.range_km

    @classmethod
    def make(
        cls,
        a: float,
        range_km: float,
        sigma_eps: float,
        sigma_v: float,
        sigma_omega: float,
        smoothness: float = 1.0,
    ) -> "HyperParameters":
        return cls(
            ar1=Ar1Params(a),
            matern=MaternParams(sigma_omega, range_km, smoothness),
            sigma_eps=sigma_eps,
            sigma_v=sigma_v,
        )


def matern_cov(h, params: MaternParams):
    """Matern covariance at distance h >= 0 (scalar or array)."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise DataError("negative distance passed to matern_cov")
    nu = params.smoothness
    z = params.kappa * h
    out = np.full(z.shape, params.sigma**2)
    pos = z > 0
    zp = z[pos]
    with np.errstate(invalid="ignore", over="ignore"):
        val = (2.0 ** (1.0 - nu) / math.exp(gammaln(nu))) * zp**nu * kv(nu, zp)
    # kv underflows to 0 for large arguments; 0 * inf never occurs since zp > 0
    val = np.where(np.isfinite(val), val, 0.0)
    out[pos] = params.sigma**2 * val
    return out if out.ndim else float(out)


def matern_correlation(h, range_km: float, smoothness: float = 1.0):
    """Matern correlation (unit variance) at distance h."""
    return matern_cov(h, MaternParams(1.0, range_km, smoothness))


def pairwise_distances(coords: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    other = coords if other is None else np.asarray(other, dtype=float)
    diff = coords[:, None, :] - other[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def checked_cholesky(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising CholeskyError with the failing pivot."""
    c, info = dpotrf(mat, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise CholeskyError(
            f"covariance matrix not positive definite (pivot {info - 1})", info - 1
        )
    if info < 0:
        raise CholeskyError(f"illegal value in Cholesky argument {-info}", -1)
    return c


def spatial_cov_matrix(
    coords: np.ndarray, params: MaternParams, jitter: float | None = None
) -> np.ndarray:
    """Dense Matern covariance over site coordinates, verified SPD.

    `jitter` is an absolute diagonal augmentation; None selects the default
    1e-8 * sigma^2.  Coincident sites with zero jitter raise CholeskyError.
    """
    if jitter is None:
        jitter = DEFAULT_JITTER_SCALE * params.sigma**2
    if jitter < 0:
        raise DataError("jitter must be nonnegative")
    cov = matern_cov(pairwise_distances(coords), params)
    cov[np.diag_indices_from(cov)] += jitter
    checked_cholesky(cov)
    return cov


def ar1_stationary_cov(t1: int, t2: int, ar1: Ar1Params) -> float:
    """Stationary AR(1) correlation a^|t1 - t2| between two integer times."""
    lag = abs(int(t1) - int(t2))
    if lag == 0:
        return 1.0
    return float(ar1.coef**lag)


def temporal_corr_matrix(n_days: int, ar1: Ar1Params, raw_innovation: bool = False) -> np.ndarray:
    """T x T temporal factor of the separable covariance.

    Correlation a^|i-j|, scaled by 1/(1 - a^2) when the Matern variance is
    interpreted as the innovation variance (`raw_innovation`).
    """
    corr = toeplitz(ar1.coef ** np.arange(n_days, dtype=float))
    if raw_innovation:
        corr /= 1.0 - ar1.coef**2
    return corr


def separable_cov(
    t1: int,
    s1: np.ndarray,
    t2: int,
    s2: np.ndarray,
    theta: HyperParameters,
    raw_innovation: bool = False,
) -> float:
    """Covariance of the latent space-time field between (t1, s1) and (t2, s2)."""
    h = float(np.linalg.norm(np.asarray(s1, float) - np.asarray(s2, float)))
    temporal = ar1_stationary_cov(t1, t2, theta.ar1)
    if raw_innovation:
        temporal /= 1.0 - theta.a**2
    return temporal * float(matern_cov(h, theta.matern))
