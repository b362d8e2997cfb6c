"""Joint Gaussian model of one month: design matrix, layout, standardization.

The response vector stacks the observed log-differences; the design matrix
columns are [intercept, day index, Sunday dummy, spatial covariates,
meteorology differences].  Covariate columns are centered and scaled by
the dataset's own statistics (the training statistics); the day index and
Sunday dummy stay raw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from airdelta.calendars import AlignedDay
from airdelta.covariance import DEFAULT_JITTER_SCALE
from airdelta.errors import DataError
from airdelta.pipeline import MonthDataset, Station

FIXED_BASE_NAMES = ["intercept", "day", "sunday"]


@dataclass(frozen=True)
class FixedEffects:
    """Linear-coefficient vector of the mean structure."""

    intercept: float
    day_slope: float
    sunday: float
    beta_spatial: np.ndarray
    beta_met: np.ndarray
    spatial_names: tuple[str, ...] = ()
    met_names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.beta_spatial) != len(self.spatial_names) or len(
            self.beta_met
        ) != len(self.met_names):
            raise DataError("fixed-effect lengths do not match covariate names")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.intercept, self.day_slope, self.sunday], self.beta_spatial, self.beta_met]
        )

    @classmethod
    def from_vector(
        cls, vec: np.ndarray, spatial_names, met_names
    ) -> "FixedEffects":
        vec = np.asarray(vec, dtype=float)
        p_z = len(spatial_names)
        p_x = len(met_names)
        if vec.size != 3 + p_z + p_x:
            raise DataError(f"coefficient vector has wrong length {vec.size}")
        return cls(
            intercept=float(vec[0]),
            day_slope=float(vec[1]),
            sunday=float(vec[2]),
            beta_spatial=vec[3 : 3 + p_z].copy(),
            beta_met=vec[3 + p_z :].copy(),
            spatial_names=tuple(spatial_names),
            met_names=tuple(met_names),
        )

    @property
    def names(self) -> list[str]:
        return FIXED_BASE_NAMES + list(self.spatial_names) + list(self.met_names)


@dataclass(frozen=True)
class Standardization:
    """Per-covariate centering/scaling statistics of the training data."""

    spatial_mean: np.ndarray
    spatial_sd: np.ndarray
    met_mean: np.ndarray
    met_sd: np.ndarray

    def apply_spatial(self, z: np.ndarray) -> np.ndarray:
        return (z - self.spatial_mean) / self.spatial_sd

    def apply_met(self, x: np.ndarray) -> np.ndarray:
        return (x - self.met_mean) / self.met_sd


def _column_stats(cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if cols.shape[1] == 0:
        return np.zeros(0), np.ones(0)
    mean = cols.mean(axis=0)
    sd = cols.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)  # constant columns pass through centered
    return mean, sd


@dataclass
class GaussianSystem:
    """Design matrices and index layout of one month's joint Gaussian model."""

    y: np.ndarray  # (N,) observed log-differences
    X: np.ndarray  # (N, p) fixed-effects design
    station_of_row: np.ndarray  # (N,) 0-based station index
    day_of_row: np.ndarray  # (N,) 0-based day index
    coords: np.ndarray  # (n, 2) station coordinates, km
    n_days: int
    spatial_names: list[str]
    met_names: list[str]
    standardization: Standardization
    calendar: list[AlignedDay]
    station_ids: list[str]
    raw_innovation: bool = False
    jitter_scale: float = DEFAULT_JITTER_SCALE
    rows_by_day: list[np.ndarray] = field(default_factory=list)
    row_of: dict[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        n_obs = self.y.size
        if self.X.shape != (n_obs, self.n_coef):
            raise DataError(
                f"design matrix shape {self.X.shape} does not match "
                f"{n_obs} observations x {self.n_coef} coefficients"
            )
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise DataError("non-finite entries in the design matrix or response")
        if not self.rows_by_day:
            self.rows_by_day = [
                np.flatnonzero(self.day_of_row == t) for t in range(self.n_days)
            ]
        if not self.row_of:
            self.row_of = {
                (int(s), int(t)): r
                for r, (s, t) in enumerate(zip(self.station_of_row, self.day_of_row))
            }

    @property
    def n_obs(self) -> int:
        return int(self.y.size)

    @property
    def n_stations(self) -> int:
        return int(self.coords.shape[0])

    @property
    def p_z(self) -> int:
        return len(self.spatial_names)

    @property
    def p_x(self) -> int:
        return len(self.met_names)

    @property
    def n_coef(self) -> int:
        return 3 + self.p_z + self.p_x

    @property
    def coef_names(self) -> list[str]:
        return FIXED_BASE_NAMES + list(self.spatial_names) + list(self.met_names)

    def day_tags(self) -> list[AlignedDay]:
        return self.calendar


def station_covariate_matrix(
    stations: list[Station], spatial_names: list[str]
) -> np.ndarray:
    """(n, p_z) raw spatial-covariate matrix in station order."""
    out = np.zeros((len(stations), len(spatial_names)))
    for i, s in enumerate(stations):
        for j, name in enumerate(spatial_names):
            if name not in s.spatial_covariates:
                raise DataError(f"station {s.id}: missing spatial covariate {name!r}")
            out[i, j] = s.spatial_covariates[name]
    return out


def build_system(
    dataset: MonthDataset,
    raw_innovation: bool = False,
    jitter_scale: float = DEFAULT_JITTER_SCALE,
    standardization: Standardization | None = None,
) -> GaussianSystem:
    """Assemble the joint Gaussian system from a month dataset.

    Passing `standardization` reuses existing (training) statistics instead
    of recomputing them, for held-out evaluation.
    """
    obs = dataset.observations
    if not obs:
        raise DataError(f"month {dataset.month}: no observations to fit")
    stations = dataset.stations
    station_index = {s.id: i for i, s in enumerate(stations)}
    n_obs = len(obs)

    z_raw = station_covariate_matrix(stations, dataset.spatial_names)
    met_raw = np.zeros((n_obs, len(dataset.met_names)))
    for r, o in enumerate(obs):
        for j, name in enumerate(dataset.met_names):
            if name not in o.met_diffs:
                raise DataError(
                    f"observation {o.station_id}/{o.date_ref}: missing meteorology {name!r}"
                )
            met_raw[r, j] = o.met_diffs[name]

    sta_rows = np.array([station_index[o.station_id] for o in obs], dtype=int)
    if standardization is None:
        z_mean, z_sd = _column_stats(z_raw[np.unique(sta_rows)])
        met_mean, met_sd = _column_stats(met_raw)
        standardization = Standardization(z_mean, z_sd, met_mean, met_sd)

    z_std = standardization.apply_spatial(z_raw)
    met_std = standardization.apply_met(met_raw)

    y = np.array([o.delta for o in obs])
    day_rows = np.array([o.day_index - 1 for o in obs], dtype=int)
    X = np.column_stack(
        [
            np.ones(n_obs),
            np.array([float(o.day_index) for o in obs]),
            np.array([1.0 if o.is_sunday else 0.0 for o in obs]),
            z_std[sta_rows],
            met_std,
        ]
    )
    coords = np.array([[s.x, s.y] for s in stations])
    return GaussianSystem(
        y=y,
        X=X,
        station_of_row=sta_rows,
        day_of_row=day_rows,
        coords=coords,
        n_days=dataset.n_days,
        spatial_names=list(dataset.spatial_names),
        met_names=list(dataset.met_names),
        standardization=standardization,
        calendar=list(dataset.calendar),
        station_ids=[s.id for s in stations],
        raw_innovation=raw_innovation,
        jitter_scale=jitter_scale,
    )
