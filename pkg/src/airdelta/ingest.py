"""File ingestion and the planar projection.

CSV schemas (UTF-8, '.' decimal separator, empty field = missing):

  * stations:     id,lon,lat,elevation,type,<spatial covariate columns...>
  * measurements: id,date,value          (daily)
                  id,date,hour,value     (hourly, hour 0-23)
  * meteorology:  id,date,<variable columns...>

Station longitude/latitude are projected at ingest onto a planar km grid
via a spherical Lambert azimuthal equal-area projection centered on the
domain centroid (configurable center).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Optional

from airdelta.errors import DataError
from airdelta.pipeline import (
    AlignedObservation,
    DailySeries,
    MonthDataset,
    Station,
    StationType,
    daily_average,
)
from airdelta.calendars import AlignedDay, month_calendar

EARTH_RADIUS_KM = 6371.0088
HALF_LOD_VALUE = 0.5  # ingested for below-detection-limit entries like "<1"


@dataclass(frozen=True)
class ProjectionSpec:
    lon0: float
    lat0: float
    earth_radius_km: float = EARTH_RADIUS_KM


def project_lonlat(lon: float, lat: float, spec: ProjectionSpec) -> tuple[float, float]:
    """Lambert azimuthal equal-area forward projection, output in km."""
    lam = math.radians(lon - spec.lon0)
    phi = math.radians(lat)
    phi0 = math.radians(spec.lat0)
    denom = 1.0 + math.sin(phi0) * math.sin(phi) + math.cos(phi0) * math.cos(phi) * math.cos(lam)
    if denom <= 1e-12:
        raise DataError(f"location ({lon}, {lat}) is antipodal to the projection center")
    k = math.sqrt(2.0 / denom)
    x = spec.earth_radius_km * k * math.cos(phi) * math.sin(lam)
    y = spec.earth_radius_km * k * (
        math.cos(phi0) * math.sin(phi) - math.sin(phi0) * math.cos(phi) * math.cos(lam)
    )
    return x, y


def inverse_project(x: float, y: float, spec: ProjectionSpec) -> tuple[float, float]:
    """Inverse of `project_lonlat`."""
    R = spec.earth_radius_km
    rho = math.hypot(x, y)
    if rho < 1e-12:
        return spec.lon0, spec.lat0
    c = 2.0 * math.asin(min(1.0, rho / (2.0 * R)))
    phi0 = math.radians(spec.lat0)
    phi = math.asin(
        math.cos(c) * math.sin(phi0) + y * math.sin(c) * math.cos(phi0) / rho
    )
    lam = math.atan2(
        x * math.sin(c),
        rho * math.cos(phi0) * math.cos(c) - y * math.sin(phi0) * math.sin(c),
    )
    return spec.lon0 + math.degrees(lam), math.degrees(phi)


def parse_value(text: str, half_lod: bool) -> Optional[float]:
    """Concentration field: empty = missing; '<x' = half the detection limit."""
    text = text.strip()
    if not text:
        return None
    if text.startswith("<"):
        if not half_lod:
            raise DataError(
                f"below-detection-limit entry {text!r} requires the half-lod flag"
            )
        try:
            limit = float(text[1:])
        except ValueError as exc:
            raise DataError(f"malformed below-detection-limit entry {text!r}") from exc
        return limit / 2.0
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"malformed numeric field {text!r}") from exc


def _read_rows(path: Path, required: list[str]) -> tuple[list[str], list[dict]]:
    if not path.exists():
        raise DataError(f"input file {path} does not exist")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    return header, rows


def read_stations(
    path: str | Path, center: tuple[float, float] | None = None
) -> tuple[list[Station], ProjectionSpec, list[str]]:
    """Load station metadata and project coordinates to planar km.

    Returns the stations, the projection used (centered on the coordinate
    centroid unless `center` is given) and the spatial covariate names.
    """
    path = Path(path)
    header, rows = _read_rows(path, ["id", "lon", "lat", "elevation", "type"])
    spatial_names = [c for c in header if c not in ("id", "lon", "lat", "elevation", "type")]
    if not rows:
        raise DataError(f"{path}: no stations")
    parsed = []
    for line_no, row in enumerate(rows, start=2):
        try:
            parsed.append(
                (
                    row["id"].strip(),
                    float(row["lon"]),
                    float(row["lat"]),
                    float(row["elevation"]),
                    StationType(row["type"].strip().lower()),
                    {name: float(row[name]) for name in spatial_names},
                )
            )
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
    ids = [p[0] for p in parsed]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate station ids")
    if center is None:
        lon0 = sum(p[1] for p in parsed) / len(parsed)
        lat0 = sum(p[2] for p in parsed) / len(parsed)
    else:
        lon0, lat0 = center
    spec = ProjectionSpec(lon0, lat0)
    stations = []
    for sid, lon, lat, elev, stype, covs in parsed:
        x, y = project_lonlat(lon, lat, spec)
        stations.append(
            Station(
                id=sid, x=x, y=y, elevation=elev, station_type=stype,
                spatial_covariates=covs,
            )
        )
    return stations, spec, spatial_names


def read_measurements(
    path: str | Path, year: int, half_lod: bool = False
) -> dict[str, DailySeries]:
    """Load a long-format measurement CSV into per-station daily series.

    An `hour` column switches to hourly mode: days are averaged with the
    18-of-24 validity rule.
    """
    path = Path(path)
    header, rows = _read_rows(path, ["id", "date", "value"])
    hourly = "hour" in header
    if hourly:
        slots: dict[tuple[str, date], list[Optional[float]]] = {}
        for line_no, row in enumerate(rows, start=2):
            try:
                d = date.fromisoformat(row["date"].strip())
                hour = int(row["hour"])
                if not 0 <= hour <= 23:
                    raise ValueError(f"hour {hour} out of range")
                value = parse_value(row["value"], half_lod)
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            key = (row["id"].strip(), d)
            slots.setdefault(key, [None] * 24)[hour] = value
        daily: dict[str, dict[date, float]] = {}
        for (sid, d), hours in sorted(slots.items()):
            avg = daily_average(hours)
            if avg is not None:
                daily.setdefault(sid, {})[d] = avg
    else:
        daily = {}
        for line_no, row in enumerate(rows, start=2):
            try:
                d = date.fromisoformat(row["date"].strip())
                value = parse_value(row["value"], half_lod)
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            if value is not None:
                daily.setdefault(row["id"].strip(), {})[d] = value
    out = {}
    for sid, values in daily.items():
        try:
            out[sid] = DailySeries(station_id=sid, year=year, values=values)
        except DataError as exc:
            raise DataError(f"{path}: station {sid}: {exc}") from exc
    return out


def read_meteorology(
    path: str | Path,
) -> tuple[dict[str, dict[date, dict[str, float]]], list[str]]:
    """Load a long-format meteorology CSV: station -> day -> variable values.

    A day with any missing variable is dropped for that station (no
    imputation), which later removes the corresponding observation.
    """
    path = Path(path)
    header, rows = _read_rows(path, ["id", "date"])
    var_names = [c for c in header if c not in ("id", "date")]
    if not var_names:
        raise DataError(f"{path}: no meteorology variable columns")
    out: dict[str, dict[date, dict[str, float]]] = {}
    for line_no, row in enumerate(rows, start=2):
        try:
            d = date.fromisoformat(row["date"].strip())
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        values = {}
        complete = True
        for name in var_names:
            text = (row.get(name) or "").strip()
            if not text:
                complete = False
                break
            try:
                values[name] = float(text)
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: bad value for {name!r}") from exc
        if complete:
            out.setdefault(row["id"].strip(), {})[d] = values
    return out, var_names


# -- aligned-dataset files ---------------------------------------------------

ALIGNED_FIXED_COLUMNS = [
    "station_id",
    "date_ref",
    "date_base",
    "month_index",
    "day_index",
    "iso_week",
    "weekday",
    "y_base",
    "y_ref",
    "delta",
]


def write_aligned_csv(path: str | Path, dataset: MonthDataset) -> None:
    met_cols = [f"met_{name}" for name in dataset.met_names]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALIGNED_FIXED_COLUMNS + met_cols)
        for o in dataset.observations:
            writer.writerow(
                [
                    o.station_id,
                    o.date_ref.isoformat(),
                    o.date_base.isoformat(),
                    o.month_index,
                    o.day_index,
                    o.iso_week,
                    o.weekday,
                    repr(o.y_base),
                    repr(o.y_ref),
                    repr(o.delta),
                ]
                + [repr(o.met_diffs[name]) for name in dataset.met_names]
            )


def read_aligned_csv(
    path: str | Path,
    stations: list[Station],
    spatial_names: list[str],
    calendar: list[AlignedDay],
    month: int,
    month_index: int,
) -> MonthDataset:
    path = Path(path)
    header, rows = _read_rows(path, ALIGNED_FIXED_COLUMNS)
    met_names = [c[len("met_") :] for c in header if c.startswith("met_")]
    observations = []
    present: set[str] = set()
    for line_no, row in enumerate(rows, start=2):
        try:
            obs = AlignedObservation(
                station_id=row["station_id"],
                date_ref=date.fromisoformat(row["date_ref"]),
                date_base=date.fromisoformat(row["date_base"]),
                iso_week=int(row["iso_week"]),
                weekday=int(row["weekday"]),
                y_base=float(row["y_base"]),
                y_ref=float(row["y_ref"]),
                delta=float(row["delta"]),
                met_diffs={name: float(row[f"met_{name}"]) for name in met_names},
                month_index=int(row["month_index"]),
                day_index=int(row["day_index"]),
            )
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        observations.append(obs)
        present.add(obs.station_id)
    station_subset = [s for s in stations if s.id in present]
    missing = present - {s.id for s in station_subset}
    if missing:
        raise DataError(f"{path}: stations absent from metadata: {sorted(missing)}")
    return MonthDataset(
        month_index=month_index,
        month=month,
        observations=observations,
        stations=sorted(station_subset, key=lambda s: s.id),
        spatial_names=list(spatial_names),
        met_names=met_names,
        calendar=month_calendar(calendar, month),
    )


def write_stations_csv(
    path: str | Path,
    stations: Iterable[Station],
    spatial_names: list[str],
    projection: ProjectionSpec,
) -> None:
    """Echo the kept stations with projected planar coordinates (km)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["id", "x_km", "y_km", "elevation", "type"]
            + list(spatial_names)
            + ["proj_lon0", "proj_lat0"]
        )
        for s in sorted(stations, key=lambda s: s.id):
            writer.writerow(
                [s.id, repr(s.x), repr(s.y), repr(s.elevation), s.station_type.value]
                + [repr(s.spatial_covariates[name]) for name in spatial_names]
                + [repr(projection.lon0), repr(projection.lat0)]
            )


def read_projected_stations(
    path: str | Path,
) -> tuple[list[Station], ProjectionSpec, list[str]]:
    path = Path(path)
    header, rows = _read_rows(path, ["id", "x_km", "y_km", "elevation", "type"])
    skip = {"id", "x_km", "y_km", "elevation", "type", "proj_lon0", "proj_lat0"}
    spatial_names = [c for c in header if c not in skip]
    stations = []
    lon0 = lat0 = 0.0
    for line_no, row in enumerate(rows, start=2):
        try:
            stations.append(
                Station(
                    id=row["id"],
                    x=float(row["x_km"]),
                    y=float(row["y_km"]),
                    elevation=float(row["elevation"]),
                    station_type=StationType(row["type"]),
                    spatial_covariates={n: float(row[n]) for n in spatial_names},
                )
            )
            lon0, lat0 = float(row["proj_lon0"]), float(row["proj_lat0"])
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
    if not stations:
        raise DataError(f"{path}: no stations")
    return stations, ProjectionSpec(lon0, lat0), spatial_names
