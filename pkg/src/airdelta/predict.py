"""Posterior-predictive simulation on prediction points and weekly maps.

For every posterior draw the station-level field is carried to the
prediction points by purely spatial kriging weights (the separable
structure makes the weights day-invariant) plus a conditional-simulation
draw with the temporal-correlation-times-spatial-Schur-complement
covariance; fresh site effects and measurement noise complete the
observable log-difference.  Daily draws are mapped through exp(x) - 1 and
averaged per ISO week, split into working days (Mon-Sat) and Sundays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from airdelta.calendars import AlignedDay
from airdelta.covariance import (
    HyperParameters,
    checked_cholesky,
    matern_correlation,
    pairwise_distances,
    temporal_corr_matrix,
)
from airdelta.errors import DataError
from airdelta.kalman import KalmanModel, LatentSample
from airdelta.linalg import psd_factor
from airdelta.model import GaussianSystem
from airdelta.priors import PriorConfig

WORKING = "working"
SUNDAY = "sunday"
DAY_TYPES = (WORKING, SUNDAY)


@dataclass(frozen=True)
class GridGeometry:
    """Planar-km raster geometry; row 0 is the northernmost row."""

    xll: float
    yll: float
    cell_km: float
    n_cols: int
    n_rows: int

    def __post_init__(self):
        if self.cell_km <= 0 or self.n_cols < 1 or self.n_rows < 1:
            raise DataError(f"invalid grid geometry {self}")

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.xll + (col + 0.5) * self.cell_km
        y = self.yll + (self.n_rows - row - 0.5) * self.cell_km
        return x, y


@dataclass
class PredictionPoints:
    """Arbitrary prediction locations with their raw spatial covariates."""

    coords: np.ndarray  # (G, 2) km
    spatial_raw: np.ndarray  # (G, p_z)
    met_diffs_raw: np.ndarray | None = None  # (G, T, p_x); None = zeroed

    @property
    def n_points(self) -> int:
        return int(self.coords.shape[0])


@dataclass
class PredictionGrid:
    """Raster of prediction cells with per-cell spatial covariates."""

    geometry: GridGeometry
    spatial: dict[str, np.ndarray]  # name -> (n_rows, n_cols), NaN = missing
    valid: np.ndarray  # (n_rows, n_cols) bool

    def __post_init__(self):
        shape = (self.geometry.n_rows, self.geometry.n_cols)
        for name, arr in self.spatial.items():
            if arr.shape != shape:
                raise DataError(f"covariate raster {name!r} has shape {arr.shape}, want {shape}")
        if self.valid.shape != shape:
            raise DataError("validity mask shape mismatch")
        bad = self.valid & ~np.all(
            [np.isfinite(a) for a in self.spatial.values()] or [np.ones(shape, bool)],
            axis=0,
        )
        if np.any(bad):
            rows, cols = np.nonzero(bad)
            raise DataError(
                f"{bad.sum()} valid cells miss covariate values, "
                f"first at (row {rows[0]}, col {cols[0]})"
            )

    @classmethod
    def from_covariates(cls, geometry: GridGeometry, spatial: dict[str, np.ndarray]):
        shape = (geometry.n_rows, geometry.n_cols)
        valid = np.ones(shape, dtype=bool)
        for arr in spatial.values():
            valid &= np.isfinite(arr)
        return cls(geometry=geometry, spatial=spatial, valid=valid)

    @classmethod
    def over_bbox(
        cls,
        coords: np.ndarray,
        cell_km: float,
        spatial_fill: dict[str, float],
        margin_km: float = 0.0,
    ) -> "PredictionGrid":
        """Regular grid covering the coordinate bounding box, constant covariates."""
        coords = np.asarray(coords, dtype=float)
        x0, y0 = coords.min(axis=0) - margin_km
        x1, y1 = coords.max(axis=0) + margin_km
        n_cols = max(1, int(math.ceil((x1 - x0) / cell_km)))
        n_rows = max(1, int(math.ceil((y1 - y0) / cell_km)))
        geom = GridGeometry(float(x0), float(y0), float(cell_km), n_cols, n_rows)
        spatial = {
            name: np.full((n_rows, n_cols), float(value))
            for name, value in spatial_fill.items()
        }
        return cls.from_covariates(geom, spatial)

    def points(self, spatial_names: Sequence[str]) -> PredictionPoints:
        """Valid cells flattened row-major into prediction points."""
        rows, cols = np.nonzero(self.valid)
        coords = np.array(
            [self.geometry.cell_center(r, c) for r, c in zip(rows, cols)]
        ).reshape(-1, 2)
        missing = [n for n in spatial_names if n not in self.spatial]
        if missing:
            raise DataError(f"grid lacks covariate rasters for {missing}")
        spat = np.column_stack(
            [self.spatial[n][rows, cols] for n in spatial_names]
        ) if spatial_names else np.zeros((coords.shape[0], 0))
        return PredictionPoints(coords=coords, spatial_raw=spat)

    def to_raster(self, values: np.ndarray, nodata=np.nan) -> np.ndarray:
        """Scatter per-valid-cell values back onto the full raster."""
        out = np.full((self.geometry.n_rows, self.geometry.n_cols), nodata, dtype=float)
        out[self.valid] = values
        return out


@dataclass
class DeltaSamples:
    """Posterior-predictive draws of the log-difference field."""

    values: np.ndarray  # (K, T, G)
    calendar: list[AlignedDay]

    def __post_init__(self):
        if self.values.shape[0] < 2:
            raise DataError("need at least 2 posterior-predictive samples")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite posterior-predictive samples")

    @property
    def n_samples(self) -> int:
        return int(self.values.shape[0])


@dataclass
class ChangeMap:
    """Weekly relative-change summary (percent) for one day type."""

    iso_week: int
    day_type: str
    mean: np.ndarray  # (G,)
    q025: np.ndarray
    q975: np.ndarray
    significant: np.ndarray  # bool; credible interval excludes zero
    n_days: int

    def __post_init__(self):
        if self.day_type not in DAY_TYPES:
            raise DataError(f"unknown day type {self.day_type!r}")
        if np.any(self.q025 > self.q975 + 1e-12):
            raise DataError("lower quantile exceeds upper quantile")


def kriging_weights(
    point_coords: np.ndarray,
    station_coords: np.ndarray,
    range_km: float,
    smoothness: float = 1.0,
    jitter: float = 0.0,
) -> np.ndarray:
    """Day-invariant spatial weights carrying the station field to the points."""
    corr_ss = matern_correlation(
        pairwise_distances(station_coords), range_km, smoothness
    )
    corr_ss[np.diag_indices_from(corr_ss)] += jitter
    corr_ps = matern_correlation(
        pairwise_distances(point_coords, station_coords), range_km, smoothness
    )
    L = checked_cholesky(corr_ss)
    return np.linalg.solve(L.T, np.linalg.solve(L, corr_ps.T)).T


def conditional_spatial_cov(
    point_coords: np.ndarray,
    station_coords: np.ndarray,
    weights: np.ndarray,
    range_km: float,
    smoothness: float = 1.0,
) -> np.ndarray:
    """Schur-complement correlation of the points given the stations."""
    corr_pp = matern_correlation(
        pairwise_distances(point_coords), range_km, smoothness
    )
    corr_ps = matern_correlation(
        pairwise_distances(point_coords, station_coords), range_km, smoothness
    )
    schur = corr_pp - weights @ corr_ps.T
    return 0.5 * (schur + schur.T)


def _fixed_surface(
    latent: LatentSample,
    points: PredictionPoints,
    sys: GaussianSystem,
) -> np.ndarray:
    """(T, G) fixed-effect surface; meteorology zeroed unless points carry it."""
    T = sys.n_days
    std = sys.standardization
    z_std = std.apply_spatial(points.spatial_raw)
    fixed = latent.fixed
    day_term = fixed.intercept + fixed.day_slope * np.arange(1, T + 1)
    sunday_term = fixed.sunday * np.array(
        [1.0 if d.is_sunday else 0.0 for d in sys.calendar]
    )
    surface = (day_term + sunday_term)[:, None] + (z_std @ fixed.beta_spatial)[None, :]
    if points.met_diffs_raw is not None:
        met_std = std.apply_met(points.met_diffs_raw)  # (G, T, p_x)
        surface = surface + np.einsum("gtp,p->tg", met_std, fixed.beta_met)
    return surface


def predict_delta(
    draws: Sequence[tuple[HyperParameters, LatentSample]],
    points: PredictionPoints,
    sys: GaussianSystem,
    seed: int | Sequence[int],
    include_nugget: bool = True,
) -> DeltaSamples:
    """Posterior-predictive draws of the log-difference at the points.

    Each (hyperparameter, latent) draw is extended to the points by spatial
    kriging of the station field plus a conditional-simulation draw, a fresh
    site effect per point (constant over days) and, when `include_nugget`,
    measurement noise; `include_nugget=False` is the process-only surface.
    Deterministic given the seed; draw index k has its own RNG stream.
    """
    if points.met_diffs_raw is not None and points.met_diffs_raw.shape != (
        points.n_points,
        sys.n_days,
        sys.p_x,
    ):
        raise DataError(
            f"met_diffs shape {points.met_diffs_raw.shape} does not match "
            f"(points, days, met covariates) = "
            f"{(points.n_points, sys.n_days, sys.p_x)}"
        )
    K = len(draws)
    T, G = sys.n_days, points.n_points
    out = np.zeros((K, T, G))
    streams = np.random.SeedSequence(seed).spawn(K)
    for k, ((theta, latent), stream) in enumerate(zip(draws, streams)):
        rng = np.random.default_rng(stream)
        W = kriging_weights(
            points.coords,
            sys.coords,
            theta.range_km,
            theta.matern.smoothness,
            jitter=sys.jitter_scale,
        )
        schur = conditional_spatial_cov(
            points.coords, sys.coords, W, theta.range_km, theta.matern.smoothness
        )
        marginal_var = theta.sigma_omega**2
        if sys.raw_innovation:
            marginal_var /= 1.0 - theta.a**2
        factor = psd_factor(marginal_var * schur)
        temporal = temporal_corr_matrix(T, theta.ar1)  # correlation in both modes
        L_t = checked_cholesky(temporal)
        noise = factor @ rng.standard_normal((G, T)) @ L_t.T
        u_points = W @ latent.u + noise  # (G, T)
        surface = _fixed_surface(latent, points, sys) + u_points.T
        if include_nugget:
            surface = surface + theta.sigma_v * rng.standard_normal(G)[None, :]
            surface = surface + theta.sigma_eps * rng.standard_normal((T, G))
        out[k] = surface
    return DeltaSamples(values=out, calendar=list(sys.calendar))


def relative_change(delta_hat):
    """exp(x) - 1, the concentration-ratio change implied by a log-difference."""
    return np.expm1(delta_hat)


def empirical_quantile(samples: np.ndarray, p: float, axis: int = 0) -> np.ndarray:
    """Order-statistic quantile with linear interpolation at rank p(K-1)+1.

    p outside [0, 1] is an error; p = 0 and p = 1 return the extremes.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise DataError("quantile of an empty sample set")
    if not 0.0 <= p <= 1.0:
        raise DataError(f"quantile level must lie in [0, 1], got {p}")
    ordered = np.sort(samples, axis=axis)
    K = ordered.shape[axis]
    rank = p * (K - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, K - 1)
    frac = rank - lo
    take_lo = np.take(ordered, lo, axis=axis)
    take_hi = np.take(ordered, hi, axis=axis)
    return take_lo * (1.0 - frac) + take_hi * frac


def quantile(sorted_samples: Sequence[float], p: float) -> float:
    """Scalar empirical quantile of at least two samples."""
    arr = np.asarray(sorted_samples, dtype=float)
    if arr.size < 2:
        raise DataError("need at least 2 samples for an empirical quantile")
    return float(empirical_quantile(arr, p))


def aggregate_weekly(
    tilde_percent: np.ndarray,
    calendar: Sequence[AlignedDay],
    day_type: str,
) -> list[ChangeMap]:
    """Weekly maps of the percent relative change for one day type.

    `tilde_percent` is (K, T, G), already mapped through exp(x) - 1 and
    scaled to percent.  Per sample and cell, days of the requested type
    within each ISO week are averaged (equal weights); the per-cell mean,
    2.5% and 97.5% quantiles are then taken across samples.  Weeks with no
    day of the requested type yield no map.
    """
    tilde_percent = np.asarray(tilde_percent, dtype=float)
    if tilde_percent.ndim != 3 or tilde_percent.shape[0] == 0:
        raise DataError("expected a nonempty (samples, days, cells) array")
    if tilde_percent.shape[1] != len(calendar):
        raise DataError("calendar length does not match the day axis")
    if day_type not in DAY_TYPES:
        raise DataError(f"unknown day type {day_type!r}")
    wanted = (lambda d: d.is_sunday) if day_type == SUNDAY else (lambda d: not d.is_sunday)
    weeks: dict[int, list[int]] = {}
    for t, day in enumerate(calendar):
        if wanted(day):
            weeks.setdefault(day.iso_week, []).append(t)
    maps = []
    for week in sorted(weeks):
        days = weeks[week]
        weekly = tilde_percent[:, days, :].mean(axis=1)  # (K, G)
        q025 = empirical_quantile(weekly, 0.025, axis=0)
        q975 = empirical_quantile(weekly, 0.975, axis=0)
        maps.append(
            ChangeMap(
                iso_week=week,
                day_type=day_type,
                mean=weekly.mean(axis=0),
                q025=q025,
                q975=q975,
                significant=(q025 > 0.0) | (q975 < 0.0),
                n_days=len(days),
            )
        )
    return maps


def map_summary(cm: ChangeMap) -> dict:
    """Cellwise distribution summary of one weekly map."""
    mean = cm.mean
    q25 = float(empirical_quantile(mean, 0.25))
    q75 = float(empirical_quantile(mean, 0.75))
    n = mean.size
    return {
        "iso_week": cm.iso_week,
        "day_type": cm.day_type,
        "n_days": cm.n_days,
        "median_pct": float(np.median(mean)),
        "iqr_low_pct": q25,
        "iqr_high_pct": q75,
        "pct_cells_significant_negative": 100.0 * float(np.sum(cm.significant & (cm.mean < 0))) / n,
        "pct_cells_significant_positive": 100.0 * float(np.sum(cm.significant & (cm.mean > 0))) / n,
    }


def predictive_mean_at_points(
    theta: HyperParameters,
    sys: GaussianSystem,
    priors: PriorConfig,
    points: PredictionPoints,
) -> np.ndarray:
    """(T, G) plug-in predictive mean of the log-difference at the points.

    Conditional mean of the fixed effects and kriged field; the site effect
    and noise contribute zero mean at unobserved locations.
    """
    model = KalmanModel(theta, sys, priors)
    latent = model.conditional_mean()
    W = kriging_weights(
        points.coords, sys.coords, theta.range_km, theta.matern.smoothness,
        jitter=sys.jitter_scale,
    )
    return _fixed_surface(latent, points, sys) + (W @ latent.u).T


def fitted_values(
    theta: HyperParameters, sys: GaussianSystem, priors: PriorConfig
) -> np.ndarray:
    """(N,) in-sample conditional mean of the response at the observed rows."""
    latent = KalmanModel(theta, sys, priors).conditional_mean()
    coef = latent.fixed.as_vector()
    return (
        sys.X @ coef
        + latent.v[sys.station_of_row]
        + latent.u[sys.station_of_row, sys.day_of_row]
    )
