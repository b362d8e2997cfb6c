"""Synthetic data generation from the exact generative model.

Used as the ground truth for recovery, calibration and map tests, and by
the `simulate` command to emit files in the same CSV schema as real data
(plus a truth sidecar).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from airdelta.calendars import AlignedDay, alignment_calendar, month_calendar
from airdelta.covariance import (
    HyperParameters,
    checked_cholesky,
    matern_cov,
    pairwise_distances,
)
from airdelta.errors import DataError
from airdelta.ingest import ProjectionSpec, inverse_project
from airdelta.model import FixedEffects
from airdelta.pipeline import AlignedObservation, MonthDataset, Station, StationType

DEFAULT_SPATIAL_NAMES = ["altitude", "dist_major_road", "agri_land_pct"]
DEFAULT_MET_NAMES = [
    "pbl_min",
    "pbl_max",
    "total_precipitation",
    "surface_pressure",
    "temperature_2m",
    "wind_speed",
    "wind_speed_prev_day",
    "relative_humidity",
    "net_irradiance",
    "diurnal_temperature_range",
]


def default_fixed_effects(
    spatial_names=DEFAULT_SPATIAL_NAMES, met_names=DEFAULT_MET_NAMES
) -> FixedEffects:
    rng = np.random.default_rng(20210301)
    return FixedEffects(
        intercept=-0.2,
        day_slope=-0.004,
        sunday=-0.08,
        beta_spatial=rng.uniform(0.02, 0.06, len(spatial_names)),
        beta_met=rng.uniform(-0.08, 0.08, len(met_names)),
        spatial_names=tuple(spatial_names),
        met_names=tuple(met_names),
    )


@dataclass
class SyntheticSpec:
    """Generative configuration: dimensions, truth and covariate settings."""

    n_stations: int
    theta: HyperParameters
    fixed: FixedEffects
    seed: int
    n_days: int | None = None  # None = the full aligned month calendar
    month: int = 3
    window_months: tuple[int, ...] = (3, 4)  # study window used for alignment
    ref_year: int = 2020
    base_year: int = 2019
    box_km: float = 300.0
    met_sd: float = 1.0
    baseline_log_mean: float = math.log(20.0)
    baseline_log_sd: float = 0.3
    missing_fraction: float = 0.0
    raw_innovation: bool = False
    center: tuple[float, float] = (10.5, 45.0)  # lon/lat used when writing files

    def __post_init__(self):
        if self.n_stations < 1:
            raise DataError("need at least one synthetic station")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise DataError("missing_fraction must lie in [0, 1)")


@dataclass
class SyntheticTruth:
    """Everything the generator drew, for recovery checks."""

    spec: SyntheticSpec
    stations: list[Station]
    calendar: list[AlignedDay]
    delta: np.ndarray  # (n, T) true log-differences (incl. noise)
    u: np.ndarray  # (n, T) space-time field
    v: np.ndarray  # (n,) site effects
    met_diffs: np.ndarray = field(default=None)  # (n, T, p_x)


def _simulate_field(
    theta: HyperParameters, coords: np.ndarray, T: int, rng: np.random.Generator,
    raw_innovation: bool, jitter_scale: float = 1e-10,
) -> np.ndarray:
    cov = matern_cov(pairwise_distances(coords), theta.matern)
    cov[np.diag_indices_from(cov)] += jitter_scale * theta.sigma_omega**2
    L = checked_cholesky(cov)
    n = coords.shape[0]
    a = theta.a
    u = np.zeros((n, T))
    if raw_innovation:
        init_scale, innov_scale = 1.0 / math.sqrt(1.0 - a * a), 1.0
    else:
        init_scale, innov_scale = 1.0, math.sqrt(1.0 - a * a)
    u[:, 0] = init_scale * (L @ rng.standard_normal(n))
    for t in range(1, T):
        u[:, t] = a * u[:, t - 1] + innov_scale * (L @ rng.standard_normal(n))
    return u


def simulate_month(spec: SyntheticSpec) -> tuple[MonthDataset, SyntheticTruth]:
    """Draw one month of aligned observations directly from the model.

    No coverage or outlier filtering is applied: the observations are the
    exact model draw (the file-based path through `prepare_months` does
    apply the filters).
    """
    rng = np.random.default_rng(spec.seed)
    window = spec.window_months if spec.month in spec.window_months else (spec.month,)
    calendar = month_calendar(
        alignment_calendar(spec.ref_year, spec.base_year, window), spec.month
    )
    if spec.n_days is not None:
        calendar = calendar[: spec.n_days]
    T = len(calendar)
    if T < 1:
        raise DataError("empty synthetic calendar")
    n = spec.n_stations
    fixed = spec.fixed
    spatial_names = list(fixed.spatial_names)
    met_names = list(fixed.met_names)

    coords = rng.uniform(0.0, spec.box_km, (n, 2))
    z = rng.standard_normal((n, len(spatial_names)))
    types = rng.choice([t.value for t in StationType], n)
    stations = [
        Station(
            id=f"st{i:03d}",
            x=float(coords[i, 0]),
            y=float(coords[i, 1]),
            elevation=float(200.0 + 50.0 * z[i, 0]) if spatial_names else 200.0,
            station_type=StationType(types[i]),
            spatial_covariates={name: float(z[i, j]) for j, name in enumerate(spatial_names)},
        )
        for i in range(n)
    ]

    met = spec.met_sd * rng.standard_normal((n, T, len(met_names)))
    u = _simulate_field(spec.theta, coords, T, rng, spec.raw_innovation)
    v = spec.theta.sigma_v * rng.standard_normal(n)
    eps = spec.theta.sigma_eps * rng.standard_normal((n, T))

    day_idx = np.arange(1, T + 1)
    sunday = np.array([1.0 if d.is_sunday else 0.0 for d in calendar])
    mean = (
        fixed.intercept
        + fixed.day_slope * day_idx[None, :]
        + fixed.sunday * sunday[None, :]
        + (z @ fixed.beta_spatial)[:, None]
        + met @ fixed.beta_met
        + v[:, None]
        + u
    )
    delta = mean + eps

    y_base = np.exp(
        spec.baseline_log_mean + spec.baseline_log_sd * rng.standard_normal((n, T))
    )
    keep = rng.random((n, T)) >= spec.missing_fraction

    observations = []
    for i in range(n):
        for t, day in enumerate(calendar):
            if not keep[i, t]:
                continue
            observations.append(
                AlignedObservation(
                    station_id=stations[i].id,
                    date_ref=day.date_ref,
                    date_base=day.date_base,
                    iso_week=day.iso_week,
                    weekday=day.weekday,
                    y_base=float(y_base[i, t]),
                    y_ref=float(y_base[i, t] * math.exp(delta[i, t])),
                    delta=float(delta[i, t]),
                    met_diffs={name: float(met[i, t, j]) for j, name in enumerate(met_names)},
                    month_index=1,
                    day_index=t + 1,
                )
            )
    dataset = MonthDataset(
        month_index=1,
        month=spec.month,
        observations=sorted(observations, key=lambda o: (o.station_id, o.date_ref)),
        stations=stations,
        spatial_names=spatial_names,
        met_names=met_names,
        calendar=calendar,
    )
    truth = SyntheticTruth(
        spec=spec, stations=stations, calendar=calendar, delta=delta, u=u, v=v,
        met_diffs=met,
    )
    return dataset, truth


def write_synthetic_files(spec: SyntheticSpec, outdir: str | Path) -> dict[str, Path]:
    """Emit synthetic data in the real-data CSV schema, plus the truth sidecar.

    Planar km coordinates are mapped back to lon/lat around the configured
    center so that the normal ingest path (projection included) applies.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dataset, truth = simulate_month(spec)
    proj = ProjectionSpec(*spec.center)
    centroid = np.array([[s.x, s.y] for s in dataset.stations]).mean(axis=0)

    paths = {
        "stations": outdir / "stations.csv",
        "measurements_ref": outdir / f"measurements_{spec.ref_year}.csv",
        "measurements_base": outdir / f"measurements_{spec.base_year}.csv",
        "meteorology_ref": outdir / f"meteorology_{spec.ref_year}.csv",
        "meteorology_base": outdir / f"meteorology_{spec.base_year}.csv",
        "truth": outdir / "truth.json",
    }

    import csv

    with open(paths["stations"], "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "lon", "lat", "elevation", "type"] + list(dataset.spatial_names))
        for s in dataset.stations:
            lon, lat = inverse_project(s.x - centroid[0], s.y - centroid[1], proj)
            writer.writerow(
                [s.id, repr(lon), repr(lat), repr(s.elevation), s.station_type.value]
                + [repr(s.spatial_covariates[name]) for name in dataset.spatial_names]
            )

    obs_by_station = {}
    for o in dataset.observations:
        obs_by_station.setdefault(o.station_id, []).append(o)

    for key, year_attr, value_attr, date_attr in (
        ("measurements_ref", "ref_year", "y_ref", "date_ref"),
        ("measurements_base", "base_year", "y_base", "date_base"),
    ):
        with open(paths[key], "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "date", "value"])
            for sid in sorted(obs_by_station):
                for o in obs_by_station[sid]:
                    writer.writerow(
                        [sid, getattr(o, date_attr).isoformat(), repr(getattr(o, value_attr))]
                    )

    # meteorology levels: an arbitrary smooth base plus the generated difference
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 77]))
    base_level = {
        name: 10.0 + 2.0 * rng.standard_normal() for name in dataset.met_names
    }
    for key, date_attr, is_ref in (
        ("meteorology_base", "date_base", False),
        ("meteorology_ref", "date_ref", True),
    ):
        with open(paths[key], "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "date"] + list(dataset.met_names))
            for sid in sorted(obs_by_station):
                for o in obs_by_station[sid]:
                    row = [sid, getattr(o, date_attr).isoformat()]
                    for name in dataset.met_names:
                        level = base_level[name] + (o.met_diffs[name] if is_ref else 0.0)
                        row.append(repr(level))
                    writer.writerow(row)

    truth_payload = {
        "seed": spec.seed,
        "n_stations": spec.n_stations,
        "n_days": len(dataset.calendar),
        "month": spec.month,
        "ref_year": spec.ref_year,
        "base_year": spec.base_year,
        "theta": {
            "a": spec.theta.a,
            "range_km": spec.theta.range_km,
            "sigma_eps": spec.theta.sigma_eps,
            "sigma_v": spec.theta.sigma_v,
            "sigma_omega": spec.theta.sigma_omega,
            "smoothness": spec.theta.matern.smoothness,
        },
        "fixed": {name: val for name, val in zip(spec.fixed.names, spec.fixed.as_vector())},
        "box_km": spec.box_km,
        "met_sd": spec.met_sd,
        "missing_fraction": spec.missing_fraction,
        "raw_innovation": spec.raw_innovation,
    }
    paths["truth"].write_text(
        json.dumps(truth_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return paths
