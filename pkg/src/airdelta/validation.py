"""Hold-out evaluation: stratified station splits, refits, error metrics.

Stations are split 10% (rounded up per type stratum) into a validation set;
the model is refit on the remainder and the held-out station-days are
predicted with their *observed* meteorology differences (model evaluation,
unlike the meteorology-normalized maps).  Metrics are RMSE and Pearson
correlation of the percent relative change.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from airdelta.errors import DataError
from airdelta.fit import FitOptions, HyperPosterior, map_estimate
from airdelta.model import build_system
from airdelta.pipeline import MonthDataset, Station
from airdelta.predict import (
    PredictionPoints,
    fitted_values,
    predictive_mean_at_points,
    relative_change,
)
from airdelta.priors import PriorConfig


def stratified_split(
    stations: list[Station], fraction: float, rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    """Split station ids into (training, validation) stratified by type.

    Each nonempty stratum contributes ceil(fraction * size) >= 1 validation
    stations; empty strata are skipped with a warning.
    """
    if not 0 < fraction < 1:
        raise DataError(f"holdout fraction must be in (0, 1), got {fraction}")
    strata: dict[str, list[str]] = {}
    for s in sorted(stations, key=lambda s: s.id):
        strata.setdefault(s.station_type.value, []).append(s.id)
    from airdelta.pipeline import StationType

    val: list[str] = []
    for stype in StationType:
        ids = strata.get(stype.value, [])
        if not ids:
            warnings.warn(f"stratum {stype.value!r} has zero stations; skipped")
            continue
        k = max(1, math.ceil(fraction * len(ids)))
        chosen = rng.choice(len(ids), size=k, replace=False)
        val.extend(ids[i] for i in sorted(chosen))
    val_set = set(val)
    train = [s.id for s in sorted(stations, key=lambda s: s.id) if s.id not in val_set]
    return train, sorted(val_set)


def subset_dataset(dataset: MonthDataset, station_ids: list[str]) -> MonthDataset:
    keep = set(station_ids)
    return MonthDataset(
        month_index=dataset.month_index,
        month=dataset.month,
        observations=[o for o in dataset.observations if o.station_id in keep],
        stations=[s for s in dataset.stations if s.id in keep],
        spatial_names=dataset.spatial_names,
        met_names=dataset.met_names,
        calendar=dataset.calendar,
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def _rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass
class ValidationRepeat:
    month: int
    repeat: int
    train_ids: list[str]
    val_ids: list[str]
    rmse_train_pct: float
    rmse_val_pct: float
    r_train: float
    r_val: float
    per_type: dict[str, dict] = field(default_factory=dict)
    theta_mode: dict | None = None

    def to_jsonable(self) -> dict:
        return {
            "month": self.month,
            "repeat": self.repeat,
            "n_train": len(self.train_ids),
            "n_validation": len(self.val_ids),
            "validation_stations": self.val_ids,
            "rmse_train_pct": self.rmse_train_pct,
            "rmse_val_pct": self.rmse_val_pct,
            "r_train": self.r_train,
            "r_val": self.r_val,
            "per_type": self.per_type,
            "theta_mode": self.theta_mode,
        }


def validate_month(
    dataset: MonthDataset,
    priors: PriorConfig,
    fit_options: FitOptions,
    fraction: float = 0.1,
    n_repeats: int = 3,
    seed: int = 0,
) -> list[ValidationRepeat]:
    """Stratified holdout repeats for one month."""
    out = []
    streams = np.random.SeedSequence([seed, dataset.month]).spawn(n_repeats)
    for r, stream in enumerate(streams, start=1):
        rng = np.random.default_rng(stream)
        train_ids, val_ids = stratified_split(dataset.stations, fraction, rng)
        out.append(
            _run_repeat(dataset, priors, fit_options, train_ids, val_ids, r)
        )
    return out


def _run_repeat(
    dataset: MonthDataset,
    priors: PriorConfig,
    fit_options: FitOptions,
    train_ids: list[str],
    val_ids: list[str],
    repeat: int,
) -> ValidationRepeat:
    train_ds = subset_dataset(dataset, train_ids)
    train_sys = build_system(train_ds)
    post: HyperPosterior = map_estimate(train_sys, priors, options=fit_options)
    theta = post.mode

    fitted = fitted_values(theta, train_sys, priors)
    obs_train_pct = 100.0 * relative_change(train_sys.y)
    fit_train_pct = 100.0 * relative_change(fitted)

    val_ds = subset_dataset(dataset, val_ids)
    station_by_id = {s.id: s for s in val_ds.stations}
    present_val_ids = [sid for sid in val_ids if sid in station_by_id]
    T = train_sys.n_days
    p_x = train_sys.p_x
    coords = np.array([[station_by_id[s].x, station_by_id[s].y] for s in present_val_ids])
    spatial_raw = np.array(
        [
            [station_by_id[s].spatial_covariates[n] for n in dataset.spatial_names]
            for s in present_val_ids
        ]
    ).reshape(len(present_val_ids), -1)
    met_raw = np.zeros((len(present_val_ids), T, p_x))
    observed = np.full((len(present_val_ids), T), np.nan)
    col_of = {sid: g for g, sid in enumerate(present_val_ids)}
    for o in val_ds.observations:
        g = col_of[o.station_id]
        t = o.day_index - 1
        observed[g, t] = o.delta
        for j, name in enumerate(dataset.met_names):
            met_raw[g, t, j] = o.met_diffs[name]
    points = PredictionPoints(coords=coords, spatial_raw=spatial_raw, met_diffs_raw=met_raw)
    pred = predictive_mean_at_points(theta, train_sys, priors, points)  # (T, G)

    mask = np.isfinite(observed)
    obs_val_pct = 100.0 * relative_change(observed[mask])
    pred_val_pct = 100.0 * relative_change(pred.T[mask])

    per_type = {}
    type_of = {sid: station_by_id[sid].station_type.value for sid in present_val_ids}
    for stype in sorted(set(type_of.values())):
        rows = [g for g, sid in enumerate(present_val_ids) if type_of[sid] == stype]
        m = mask[rows]
        o_pct = 100.0 * relative_change(observed[rows][m])
        p_pct = 100.0 * relative_change(pred.T[rows][m])
        per_type[stype] = {
            "n_stations": len(rows),
            "n_values": int(m.sum()),
            "rmse_val_pct": _rmse(o_pct, p_pct),
            "r_val": _pearson(o_pct, p_pct),
        }

    return ValidationRepeat(
        month=dataset.month,
        repeat=repeat,
        train_ids=train_ids,
        val_ids=present_val_ids,
        rmse_train_pct=_rmse(obs_train_pct, fit_train_pct),
        rmse_val_pct=_rmse(obs_val_pct, pred_val_pct),
        r_train=_pearson(obs_train_pct, fit_train_pct),
        r_val=_pearson(obs_val_pct, pred_val_pct),
        per_type=per_type,
        theta_mode={
            "a": theta.a,
            "range_km": theta.range_km,
            "sigma_eps": theta.sigma_eps,
            "sigma_v": theta.sigma_v,
            "sigma_omega": theta.sigma_omega,
        },
    )
