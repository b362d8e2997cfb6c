"""Brute-force dense Gaussian computations, used as the verification oracle.

Builds the full observation covariance (coefficients, site effects and the
space-time field all marginalized) and evaluates the Gaussian log density
directly; also performs textbook Gaussian conditioning of the complete
latent vector on the observations.  Guarded to small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from airdelta.covariance import (
    HyperParameters,
    checked_cholesky,
    matern_cov,
    pairwise_distances,
    temporal_corr_matrix,
)
from airdelta.errors import DataError
from airdelta.model import GaussianSystem
from airdelta.priors import PriorConfig

MAX_ORACLE_OBS = 2000

# latent vector layout: [coefficients (p), site effects (n), field day 1 (n),
# ..., field day T (n)]


def latent_prior_cov(
    theta: HyperParameters, sys: GaussianSystem, priors: PriorConfig
) -> np.ndarray:
    """Prior covariance of the full latent vector [coefs, v, u_1..u_T]."""
    n, T, p = sys.n_stations, sys.n_days, sys.n_coef
    spatial = matern_cov(pairwise_distances(sys.coords), theta.matern)
    spatial[np.diag_indices_from(spatial)] += sys.jitter_scale * theta.sigma_omega**2
    temporal = temporal_corr_matrix(T, theta.ar1, sys.raw_innovation)
    G = np.zeros((p + n + n * T, p + n + n * T))
    G[:p, :p] = priors.coef_sd**2 * np.eye(p)
    G[p : p + n, p : p + n] = theta.sigma_v**2 * np.eye(n)
    G[p + n :, p + n :] = np.kron(temporal, spatial)
    return G


def observation_matrix(sys: GaussianSystem) -> np.ndarray:
    """Matrix mapping the latent vector to the observation means."""
    n, T, p = sys.n_stations, sys.n_days, sys.n_coef
    N = sys.n_obs
    M = np.zeros((N, p + n + n * T))
    M[:, :p] = sys.X
    rows = np.arange(N)
    M[rows, p + sys.station_of_row] = 1.0
    M[rows, p + n + sys.day_of_row * n + sys.station_of_row] += 1.0
    return M


def _guard(sys: GaussianSystem):
    if sys.n_obs == 0:
        raise DataError("dense oracle called with zero observations")
    if sys.n_obs > MAX_ORACLE_OBS:
        raise DataError(
            f"dense oracle limited to {MAX_ORACLE_OBS} observations, got {sys.n_obs}"
        )


def dense_oracle_loglik(
    theta: HyperParameters, sys: GaussianSystem, priors: PriorConfig
) -> float:
    """Exact marginal log likelihood via the full observation covariance."""
    _guard(sys)
    M = observation_matrix(sys)
    G = latent_prior_cov(theta, sys, priors)
    cov = M @ G @ M.T
    cov[np.diag_indices_from(cov)] += theta.sigma_eps**2
    L = checked_cholesky(cov)
    alpha = np.linalg.solve(L, sys.y)
    N = sys.n_obs
    return float(
        -0.5 * N * math.log(2.0 * math.pi)
        - np.sum(np.log(np.diag(L)))
        - 0.5 * alpha @ alpha
    )


@dataclass
class DenseConditional:
    """Gaussian conditional of the latent vector given the observations."""

    mean: np.ndarray  # (p + n + n T,)
    cov: np.ndarray
    n_coef: int
    n_stations: int
    n_days: int

    def coef_mean(self) -> np.ndarray:
        return self.mean[: self.n_coef]

    def site_mean(self) -> np.ndarray:
        return self.mean[self.n_coef : self.n_coef + self.n_stations]

    def field_mean(self) -> np.ndarray:
        """(n, T) conditional mean of the space-time field."""
        n, T = self.n_stations, self.n_days
        return self.mean[self.n_coef + n :].reshape(T, n).T


def dense_conditional(
    theta: HyperParameters, sys: GaussianSystem, priors: PriorConfig
) -> DenseConditional:
    """Condition the full latent vector on the observed log-differences."""
    _guard(sys)
    M = observation_matrix(sys)
    G = latent_prior_cov(theta, sys, priors)
    GMt = G @ M.T
    cov_y = M @ GMt
    cov_y[np.diag_indices_from(cov_y)] += theta.sigma_eps**2
    L = checked_cholesky(cov_y)
    solve = lambda b: np.linalg.solve(L.T, np.linalg.solve(L, b))
    mean = GMt @ solve(sys.y)
    cov = G - GMt @ solve(GMt.T)
    return DenseConditional(
        mean=mean,
        cov=0.5 * (cov + cov.T),
        n_coef=sys.n_coef,
        n_stations=sys.n_stations,
        n_days=sys.n_days,
    )
