"""Command-line front end: align, fit, predict, validate, simulate.

Every command takes `--config <path>` plus targeted overrides and is a pure
function of (config, input files, seed): reruns are byte-identical.  Exit
codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from airdelta.calendars import alignment_calendar
from airdelta.config import RunConfig
from airdelta.covariance import HyperParameters
from airdelta.errors import ConfigError, DataError, NumericalError
from airdelta.fit import (
    FitOptions,
    HyperPosterior,
    coefficient_summaries,
    eta_to_theta,
    map_estimate,
    posterior_draw_pairs,
    sample_hyper,
)
from airdelta.ingest import (
    read_aligned_csv,
    read_measurements,
    read_meteorology,
    read_projected_stations,
    read_stations,
    write_aligned_csv,
    write_stations_csv,
)
from airdelta.model import FixedEffects, build_system
from airdelta.pipeline import prepare_months
from airdelta.predict import (
    DAY_TYPES,
    PredictionGrid,
    aggregate_weekly,
    empirical_quantile,
    map_summary,
    predict_delta,
    relative_change,
)
from airdelta.rasters import (
    month_label,
    raster_name,
    read_esri_ascii,
    write_change_map,
    write_projection_sidecar,
    write_summary_csv,
)
from airdelta.runfile import dataset_digest, read_run_file, write_run_file
from airdelta.synthetic import (
    DEFAULT_MET_NAMES,
    DEFAULT_SPATIAL_NAMES,
    SyntheticSpec,
    default_fixed_effects,
    write_synthetic_files,
)
from airdelta.validation import validate_month

LOCK_NAME = ".airdelta.lock"
HYPER_NAMES = ["a", "range_km", "sigma_eps", "sigma_v", "sigma_omega"]


@contextlib.contextmanager
def output_lock(outdir: Path):
    """Exclusive lock against concurrent writers of one output directory."""
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {outdir} is locked by another run "
            f"(remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _aligned_path(outdir: Path, month: int) -> Path:
    return outdir / f"aligned_m{month:02d}.csv"


def _load_month(config: RunConfig, outdir: Path, month: int):
    stations, projection, spatial_names = read_projected_stations(
        outdir / "stations_projected.csv"
    )
    calendar = alignment_calendar(
        config.ref_year, config.base_year, config.months, config.exclude_dates
    )
    month_index = config.months.index(month) + 1
    path = _aligned_path(outdir, month)
    if not path.exists():
        raise DataError(f"aligned dataset {path} not found; run `airdelta align` first")
    dataset = read_aligned_csv(
        path, stations, spatial_names, calendar, month, month_index
    )
    return dataset, projection, path


def cmd_align(config: RunConfig) -> int:
    outdir = config.path("output", must_exist=False)
    stations, projection, spatial_names = read_stations(config.path("stations"))
    series_ref = read_measurements(
        config.path("measurements_ref"), config.ref_year, config.half_lod
    )
    series_base = read_measurements(
        config.path("measurements_base"), config.base_year, config.half_lod
    )
    met_names: list[str] = []
    met_ref: dict = {}
    met_base: dict = {}
    if config.values["paths.meteorology_ref"] or config.values["paths.meteorology_base"]:
        met_ref, met_names = read_meteorology(config.path("meteorology_ref"))
        met_base, names_base = read_meteorology(config.path("meteorology_base"))
        if names_base != met_names:
            raise DataError(
                f"meteorology variable mismatch: {met_names} vs {names_base}"
            )
    datasets, report = prepare_months(
        stations,
        series_ref,
        series_base,
        met_ref,
        met_base,
        met_names,
        spatial_names,
        config.ref_year,
        config.base_year,
        config.months,
        config.exclude_dates,
    )
    kept = {s.id: s for d in datasets for s in d.stations}
    with output_lock(outdir):
        write_stations_csv(
            outdir / "stations_projected.csv",
            kept.values(),
            spatial_names,
            projection,
        )
        for dataset in datasets:
            write_aligned_csv(_aligned_path(outdir, dataset.month), dataset)
        payload = report.to_jsonable()
        payload["config"] = config.echo_text()
        (outdir / "alignment_report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    for dataset in datasets:
        print(
            f"aligned month {dataset.month}: {len(dataset.observations)} observations, "
            f"{dataset.n_days} days, {dataset.n_stations} stations"
        )
    print(f"outlier fraction: {report.outlier_fraction:.4f}")
    print(f"wrote {outdir / 'alignment_report.json'}")
    return 0


def _hyper_summaries(post: HyperPosterior, seed_entropy) -> list[dict]:
    """Posterior mean/sd/quantiles of the natural-scale hyperparameters (MC)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed_entropy))
    draws = sample_hyper(post, 20000, rng)
    cols = {
        "a": np.array([t.a for t in draws]),
        "range_km": np.array([t.range_km for t in draws]),
        "sigma_eps": np.array([t.sigma_eps for t in draws]),
        "sigma_v": np.array([t.sigma_v for t in draws]),
        "sigma_omega": np.array([t.sigma_omega for t in draws]),
    }
    out = []
    for name in HYPER_NAMES:
        arr = cols[name]
        out.append(
            {
                "name": name,
                "mean": float(arr.mean()),
                "sd": float(arr.std()),
                "q025": float(empirical_quantile(arr, 0.025)),
                "q975": float(empirical_quantile(arr, 0.975)),
                "mode": float(getattr(post.mode, name) if name != "range_km" else post.mode.range_km),
            }
        )
    return out


def cmd_fit(config: RunConfig) -> int:
    outdir = config.path("output", must_exist=False)
    seed = config.seed
    priors = config.prior_config()
    with output_lock(outdir):
        for month in config.months:
            dataset, projection, aligned_path = _load_month(config, outdir, month)
            sys_ = build_system(
                dataset,
                raw_innovation=config.raw_innovation,
                jitter_scale=config.jitter_scale,
            )
            post = map_estimate(sys_, priors, options=config.fit_options())
            theta = post.mode
            coef_rows = coefficient_summaries(theta, sys_, priors)
            hyper_rows = _hyper_summaries(post, [seed, month, 1])
            payload = {
                "month": month,
                "month_index": dataset.month_index,
                "seed": seed,
                "dataset_path": aligned_path.name,
                "dataset_digest": dataset_digest(aligned_path),
                "theta_mode": {
                    "a": theta.a,
                    "range_km": theta.range_km,
                    "sigma_eps": theta.sigma_eps,
                    "sigma_v": theta.sigma_v,
                    "sigma_omega": theta.sigma_omega,
                    "smoothness": theta.matern.smoothness,
                },
                "mode_eta": post.mode_eta.tolist(),
                "cov_eta": post.cov_eta.tolist(),
                "log_evidence": post.log_evidence,
                "diagnostics": post.diagnostics,
                "coefficients": coef_rows,
                "hyperparameters": hyper_rows,
                "spatial_names": sys_.spatial_names,
                "met_names": sys_.met_names,
                "standardization": {
                    "spatial_mean": sys_.standardization.spatial_mean.tolist(),
                    "spatial_sd": sys_.standardization.spatial_sd.tolist(),
                    "met_mean": sys_.standardization.met_mean.tolist(),
                    "met_sd": sys_.standardization.met_sd.tolist(),
                },
                "raw_innovation": config.raw_innovation,
                "jitter_scale": config.jitter_scale,
                "coef_sd": priors.coef_sd,
                "projection": {"lon0": projection.lon0, "lat0": projection.lat0},
                "config": config.echo_text(),
            }
            run_path = outdir / f"run_m{month:02d}.json"
            write_run_file(run_path, payload)
            write_summary_csv(outdir / f"coefficients_m{month:02d}.csv", coef_rows)
            write_summary_csv(outdir / f"hyperparameters_m{month:02d}.csv", hyper_rows)
            print(
                f"fit month {month}: log evidence {post.log_evidence:.3f}, "
                f"mode a={theta.a:.3f} range={theta.range_km:.1f} "
                f"sd_eps={theta.sigma_eps:.3f} sd_v={theta.sigma_v:.3f} "
                f"sd_omega={theta.sigma_omega:.3f}"
            )
            print(f"wrote {run_path}")
    return 0


def _grid_from_config(config: RunConfig, sys_, spatial_names) -> PredictionGrid:
    raster_dir = config.values["paths.covariate_raster_dir"]
    if raster_dir:
        raster_dir = config.path("covariate_raster_dir")
        rasters = {}
        missing = []
        for name in spatial_names:
            path = raster_dir / f"{name}.asc"
            if not path.exists():
                missing.append(name)
                continue
            rasters[name] = read_esri_ascii(path)
        if missing:
            raise DataError(
                f"covariate rasters missing for variables {missing} in {raster_dir}"
            )
        geometries = {name: geom for name, (geom, _) in rasters.items()}
        first = next(iter(geometries.values()))
        mismatched = [n for n, g in geometries.items() if g != first]
        if mismatched:
            raise DataError(f"covariate raster geometries differ: {mismatched}")
        return PredictionGrid.from_covariates(
            first, {name: arr for name, (_, arr) in rasters.items()}
        )
    fill = {
        name: float(mean)
        for name, mean in zip(spatial_names, sys_.standardization.spatial_mean)
    }
    return PredictionGrid.over_bbox(
        sys_.coords,
        config.float_value("predict.grid_km"),
        fill,
        margin_km=config.float_value("predict.margin_km"),
    )


def cmd_predict(config: RunConfig, run_path: str) -> int:
    outdir = config.path("output", must_exist=False)
    payload = read_run_file(run_path)
    month = int(payload["month"])
    dataset, projection, aligned_path = _load_month(config, outdir, month)
    digest = dataset_digest(aligned_path)
    if digest != payload["dataset_digest"]:
        raise DataError(
            f"aligned dataset {aligned_path} changed since the fit "
            f"(digest {digest[:12]} != {payload['dataset_digest'][:12]})"
        )
    sys_ = build_system(
        dataset,
        raw_innovation=bool(payload["raw_innovation"]),
        jitter_scale=float(payload["jitter_scale"]),
    )
    priors = config.prior_config()
    post = HyperPosterior(
        mode=eta_to_theta(np.array(payload["mode_eta"]), float(payload["theta_mode"]["smoothness"])),
        mode_eta=np.array(payload["mode_eta"]),
        cov_eta=np.array(payload["cov_eta"]),
        log_evidence=float(payload["log_evidence"]),
        smoothness=float(payload["theta_mode"]["smoothness"]),
    )
    K = config.n_samples
    if K < 10:
        warnings.warn(f"only {K} posterior samples: quantiles are degenerate")
    seed = config.seed
    grid = _grid_from_config(config, sys_, sys_.spatial_names)
    points = grid.points(sys_.spatial_names)
    pairs = posterior_draw_pairs(
        post, sys_, priors, K, [seed, month, 2], integration=config.integration
    )
    process_only = config.bool_value("predict.process_only")
    samples = predict_delta(
        pairs, points, sys_, seed=[seed, month, 3], include_nugget=not process_only
    )
    tilde_pct = 100.0 * relative_change(samples.values)
    summaries = []
    written = []
    with output_lock(outdir):
        write_projection_sidecar(
            outdir / "rasters_projection.json",
            {"lon0": projection.lon0, "lat0": projection.lat0},
        )
        for day_type in DAY_TYPES:
            for cm in aggregate_weekly(tilde_pct, samples.calendar, day_type):
                written.extend(
                    write_change_map(outdir, config.pollutant, month, cm, grid)
                )
                summaries.append(map_summary(cm))
                if config.bool_value("predict.png"):
                    from airdelta.rasters import render_png

                    png = outdir / raster_name(
                        config.pollutant, month, cm.iso_week, cm.day_type, "mean"
                    ).replace(".asc", ".png")
                    render_png(
                        png,
                        grid.geometry,
                        grid.to_raster(cm.mean),
                        grid.to_raster(cm.significant.astype(float)),
                        title=f"{config.pollutant} {month_label(month)} "
                        f"week {cm.iso_week} ({cm.day_type})",
                    )
        write_summary_csv(outdir / f"map_summary_m{month:02d}.csv", summaries)
    print(f"wrote {len(written)} rasters and {outdir / f'map_summary_m{month:02d}.csv'}")
    return 0


def cmd_validate(config: RunConfig) -> int:
    outdir = config.path("output", must_exist=False)
    priors = config.prior_config()
    repeats_out = []
    with output_lock(outdir):
        for month in config.months:
            dataset, _, _ = _load_month(config, outdir, month)
            repeats = validate_month(
                dataset,
                priors,
                config.fit_options(),
                fraction=config.float_value("validate.fraction"),
                n_repeats=config.int_value("validate.repeats"),
                seed=config.seed,
            )
            repeats_out.extend(repeats)
        report = {
            "config": config.echo_text(),
            "seed": config.seed,
            "repeats": [r.to_jsonable() for r in repeats_out],
        }
        (outdir / "validation_report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        rows = [
            {
                "month": r.month,
                "repeat": r.repeat,
                "rmse_train_pct": r.rmse_train_pct,
                "rmse_val_pct": r.rmse_val_pct,
                "r_train": r.r_train,
                "r_val": r.r_val,
                "n_validation": len(r.val_ids),
            }
            for r in repeats_out
        ]
        write_summary_csv(outdir / "validation_summary.csv", rows)
    for r in repeats_out:
        print(
            f"month {r.month} repeat {r.repeat}: "
            f"train r={r.r_train:.3f} rmse={r.rmse_train_pct:.2f}% | "
            f"validation r={r.r_val:.3f} rmse={r.rmse_val_pct:.2f}%"
        )
    print(f"wrote {outdir / 'validation_report.json'}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    outdir = config.path("output", must_exist=False)
    n_spatial = config.int_value("simulate.n_spatial")
    n_met = config.int_value("simulate.n_met")
    spatial_names = (
        DEFAULT_SPATIAL_NAMES[:n_spatial]
        if n_spatial <= len(DEFAULT_SPATIAL_NAMES)
        else DEFAULT_SPATIAL_NAMES
        + [f"zcov{i}" for i in range(len(DEFAULT_SPATIAL_NAMES), n_spatial)]
    )
    met_names = (
        DEFAULT_MET_NAMES[:n_met]
        if n_met <= len(DEFAULT_MET_NAMES)
        else DEFAULT_MET_NAMES + [f"met{i}" for i in range(len(DEFAULT_MET_NAMES), n_met)]
    )
    base = default_fixed_effects(spatial_names, met_names)
    fixed = FixedEffects(
        intercept=config.float_value("simulate.intercept"),
        day_slope=config.float_value("simulate.day_slope"),
        sunday=config.float_value("simulate.sunday"),
        beta_spatial=base.beta_spatial,
        beta_met=base.beta_met,
        spatial_names=tuple(spatial_names),
        met_names=tuple(met_names),
    )
    n_days_text = config.values["simulate.n_days"]
    spec = SyntheticSpec(
        n_stations=config.int_value("simulate.n_stations"),
        theta=config.synthetic_theta(),
        fixed=fixed,
        seed=config.seed,
        n_days=int(n_days_text) if n_days_text else None,
        month=config.int_value("simulate.month"),
        ref_year=config.ref_year,
        base_year=config.base_year,
        box_km=config.float_value("simulate.box_km"),
        met_sd=config.float_value("simulate.met_sd"),
        missing_fraction=config.float_value("simulate.missing_fraction"),
        raw_innovation=config.raw_innovation,
    )
    with output_lock(outdir):
        paths = write_synthetic_files(spec, outdir)
    for name, path in sorted(paths.items()):
        print(f"wrote {name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airdelta",
        description="Paired-year air-quality change mapping",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("align", "pair the two years and build per-month datasets"),
        ("fit", "estimate the month models from aligned data"),
        ("predict", "posterior-predictive weekly change maps"),
        ("validate", "stratified holdout evaluation"),
        ("simulate", "generate synthetic input files"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="run configuration file")
        cmd.add_argument("--seed", type=int, default=None, help="override run.seed")
        cmd.add_argument("--month", type=int, default=None, help="restrict to one month")
        if name == "predict":
            cmd.add_argument("--run", required=True, help="run file from `fit`")
            cmd.add_argument("--samples", type=int, default=None, help="override predict.samples")
            cmd.add_argument("--grid-km", type=float, default=None, help="override predict.grid_km")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict[str, str] = {}
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.month is not None:
        overrides["study.months"] = str(args.month)
    if getattr(args, "samples", None) is not None:
        overrides["predict.samples"] = str(args.samples)
    if getattr(args, "grid_km", None) is not None:
        overrides["predict.grid_km"] = str(args.grid_km)
    try:
        config = RunConfig.from_file(args.config, overrides)
        if args.command == "align":
            return cmd_align(config)
        if args.command == "fit":
            return cmd_fit(config)
        if args.command == "predict":
            return cmd_predict(config, args.run)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "simulate":
            return cmd_simulate(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
