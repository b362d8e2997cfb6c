"""Plain-text run configuration: `key = value` lines with [section] headers.

A `[section]` header prefixes subsequent keys with `section.`; `#` starts a
comment.  Unknown keys are configuration errors.  The full canonical text
is echoed into every output for provenance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from airdelta.covariance import DEFAULT_JITTER_SCALE, HyperParameters
from airdelta.errors import ConfigError
from airdelta.fit import FitOptions
from airdelta.priors import PcAr1Prior, PcMaternJointPrior, PcSdPrior, PriorConfig

_PATH_KEYS = [
    "paths.stations",
    "paths.measurements_ref",
    "paths.measurements_base",
    "paths.meteorology_ref",
    "paths.meteorology_base",
    "paths.covariate_raster_dir",
    "paths.output",
]

_DEFAULTS: dict[str, str] = {
    **{k: "" for k in _PATH_KEYS},
    "study.ref_year": "2020",
    "study.base_year": "2019",
    "study.months": "3,4",
    "study.pollutant": "no2",
    "study.half_lod": "false",
    "study.exclude_dates": "",
    "model.smoothness": "1.0",
    "model.coef_sd": "1000.0",
    "model.raw_innovation_variance": "false",
    "model.jitter_scale": str(DEFAULT_JITTER_SCALE),
    "prior.sd_eps.u": "1.0",
    "prior.sd_eps.alpha": "0.1",
    "prior.sd_v.u": "1.0",
    "prior.sd_v.alpha": "0.1",
    "prior.matern.u_range": "150.0",
    "prior.matern.alpha_range": "0.8",
    "prior.matern.u_sd": "1.0",
    "prior.matern.alpha_sd": "0.01",
    "prior.ar1.u": "0.8",
    "prior.ar1.alpha": "0.3",
    "fit.n_starts": "3",
    "fit.max_iter": "200",
    "fit.integration": "laplace",
    "predict.samples": "1000",
    "predict.grid_km": "10.0",
    "predict.margin_km": "0.0",
    "predict.process_only": "false",
    "predict.png": "false",
    "validate.fraction": "0.1",
    "validate.repeats": "3",
    "run.seed": "",
    "simulate.n_stations": "40",
    "simulate.n_days": "",
    "simulate.month": "3",
    "simulate.a": "0.64",
    "simulate.range_km": "74.0",
    "simulate.sigma_eps": "0.21",
    "simulate.sigma_v": "0.16",
    "simulate.sigma_omega": "0.37",
    "simulate.intercept": "-0.2",
    "simulate.day_slope": "-0.004",
    "simulate.sunday": "-0.08",
    "simulate.box_km": "300.0",
    "simulate.met_sd": "1.0",
    "simulate.n_spatial": "3",
    "simulate.n_met": "10",
    "simulate.missing_fraction": "0.0",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a flat dotted-key dictionary."""
    out: dict[str, str] = {}
    section = ""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        full = f"{section}.{key}" if section else key
        if full in out:
            raise ConfigError(f"line {line_no}: duplicate key {full!r}")
        out[full] = value
    return out


@dataclass
class RunConfig:
    """Typed view over the flat configuration."""

    values: dict[str, str]
    source_path: Path | None = None
    _problems: list[str] = field(default_factory=list)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, str] | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        values = dict(_DEFAULTS)
        parsed = parse_config_text(path.read_text(encoding="utf-8"))
        unknown = sorted(set(parsed) - set(_DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        values.update(parsed)
        for key, value in (overrides or {}).items():
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown override key {key!r}")
            values[key] = value
        return cls(values=values, source_path=path)

    # -- typed accessors ----------------------------------------------------

    def float_value(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: not a number ({self.values[key]!r})") from exc

    def int_value(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: not an integer ({self.values[key]!r})") from exc

    def bool_value(self, key: str) -> bool:
        text = self.values[key].lower()
        if text in ("true", "1", "yes"):
            return True
        if text in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {self.values[key]!r}")

    def path(self, key: str, must_exist: bool = True) -> Path:
        text = self.values[f"paths.{key}"]
        if not text:
            raise ConfigError(f"paths.{key} is required by this command")
        p = Path(text)
        if not p.is_absolute() and self.source_path is not None:
            p = self.source_path.parent / p
        if must_exist and not p.exists():
            raise ConfigError(f"paths.{key}: {p} does not exist")
        return p

    @property
    def seed(self) -> int:
        if not self.values["run.seed"]:
            raise ConfigError("run.seed is required (reproducibility is mandatory)")
        return self.int_value("run.seed")

    @property
    def ref_year(self) -> int:
        return self.int_value("study.ref_year")

    @property
    def base_year(self) -> int:
        return self.int_value("study.base_year")

    @property
    def months(self) -> list[int]:
        try:
            months = [int(m) for m in self.values["study.months"].split(",") if m.strip()]
        except ValueError as exc:
            raise ConfigError("study.months: expected comma-separated month numbers") from exc
        if not months or any(not 1 <= m <= 12 for m in months):
            raise ConfigError(f"study.months: invalid months {months}")
        return months

    @property
    def pollutant(self) -> str:
        return self.values["study.pollutant"]

    @property
    def half_lod(self) -> bool:
        return self.bool_value("study.half_lod")

    @property
    def exclude_dates(self) -> list[date]:
        text = self.values["study.exclude_dates"]
        try:
            return [date.fromisoformat(part.strip()) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigError("study.exclude_dates: expected ISO dates") from exc

    @property
    def smoothness(self) -> float:
        return self.float_value("model.smoothness")

    @property
    def raw_innovation(self) -> bool:
        return self.bool_value("model.raw_innovation_variance")

    @property
    def jitter_scale(self) -> float:
        return self.float_value("model.jitter_scale")

    @property
    def n_samples(self) -> int:
        k = self.int_value("predict.samples")
        if k < 2:
            raise ConfigError("predict.samples must be >= 2")
        return k

    @property
    def integration(self) -> str:
        mode = self.values["fit.integration"]
        if mode not in ("laplace", "grid"):
            raise ConfigError(f"fit.integration: unknown mode {mode!r}")
        return mode

    def prior_config(self) -> PriorConfig:
        return PriorConfig(
            sd_eps=PcSdPrior(self.float_value("prior.sd_eps.u"), self.float_value("prior.sd_eps.alpha")),
            sd_v=PcSdPrior(self.float_value("prior.sd_v.u"), self.float_value("prior.sd_v.alpha")),
            matern=PcMaternJointPrior(
                self.float_value("prior.matern.u_range"),
                self.float_value("prior.matern.alpha_range"),
                self.float_value("prior.matern.u_sd"),
                self.float_value("prior.matern.alpha_sd"),
            ),
            ar1=PcAr1Prior(self.float_value("prior.ar1.u"), self.float_value("prior.ar1.alpha")),
            coef_sd=self.float_value("model.coef_sd"),
        )

    def fit_options(self) -> FitOptions:
        return FitOptions(
            n_starts=self.int_value("fit.n_starts"),
            max_iter=self.int_value("fit.max_iter"),
            smoothness=self.smoothness,
        )

    def synthetic_theta(self) -> HyperParameters:
        return HyperParameters.make(
            a=self.float_value("simulate.a"),
            range_km=self.float_value("simulate.range_km"),
            sigma_eps=self.float_value("simulate.sigma_eps"),
            sigma_v=self.float_value("simulate.sigma_v"),
            sigma_omega=self.float_value("simulate.sigma_omega"),
            smoothness=self.smoothness,
        )

    def echo_text(self) -> str:
        """Canonical flat rendering of the effective configuration."""
        lines = [f"{key} = {self.values[key]}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def validate_common(self):
        if not math.isfinite(self.seed):
            raise ConfigError("run.seed must be finite")
