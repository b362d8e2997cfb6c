"""Station-data preparation: coverage rules, pairing, log-differences.

Turns raw daily series of two years into per-month datasets of aligned
observations carrying the log-difference response and the differenced
meteorological regressors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from typing import Mapping, Optional, Sequence

from airdelta.calendars import AlignedDay, month_calendar
from airdelta.errors import DataError

MIN_VALID_HOURS = 18
MAX_STATION_MISSING = 0.25
MAX_ABS_RELATIVE_CHANGE = 1.0  # pairs with |y_ref/y_base - 1| > 1 are discarded


class StationType(str, Enum):
    URBAN = "urban"
    SUBURBAN = "suburban"
    RURAL = "rural"


@dataclass(frozen=True)
class Station:
    """Monitoring site with projected planar coordinates in km."""

    id: str
    x: float
    y: float
    elevation: float
    station_type: StationType
    spatial_covariates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.spatial_covariates.items():
            if value is None or not math.isfinite(value):
                raise DataError(
                    f"station {self.id}: spatial covariate {name!r} missing or non-finite"
                )


@dataclass
class DailySeries:
    """Daily concentrations of one station for one year; absent date = missing."""

    station_id: str
    year: int
    values: dict[date, float] = field(default_factory=dict)

    def __post_init__(self):
        for d, v in self.values.items():
            if v <= 0:
                raise DataError(
                    f"station {self.station_id}: nonpositive concentration {v} on {d}"
                )


@dataclass(frozen=True)
class AlignedObservation:
    """One station-day pair of matched reference/baseline concentrations."""

    station_id: str
    date_ref: date
    date_base: date
    iso_week: int
    weekday: int  # ISO: 1 = Monday .. 7 = Sunday
    y_base: float  # baseline-year concentration (e.g. 2019)
    y_ref: float  # reference-year concentration (e.g. 2020)
    delta: float  # ln(y_ref) - ln(y_base)
    met_diffs: dict[str, float] = field(default_factory=dict)
    month_index: int = 0  # 1-based position of the month in the study window
    day_index: int = 0  # 1-based position within the month's aligned calendar

    @property
    def is_sunday(self) -> bool:
        return self.weekday == 7


@dataclass
class MonthDataset:
    """All aligned observations of one month plus the station inventory."""

    month_index: int
    month: int  # calendar month (reference year)
    observations: list[AlignedObservation]
    stations: list[Station]
    spatial_names: list[str]
    met_names: list[str]
    calendar: list[AlignedDay]  # day_index i corresponds to calendar[i - 1]

    @property
    def n_days(self) -> int:
        return len(self.calendar)

    @property
    def n_stations(self) -> int:
        return len(self.stations)


@dataclass
class AlignmentReport:
    """Bookkeeping emitted by the alignment step."""

    ref_year: int
    base_year: int
    months: list[int]
    stations_total: int
    dropped_stations: dict[str, str]
    calendar_days_per_week: dict[int, int]
    calendar_weekdays_per_week: dict[int, list[int]]
    pairs_per_week: dict[int, int]
    pairs_kept: int
    outliers_discarded: int
    days_per_month: dict[int, int]
    observations_per_month: dict[int, int]

    @property
    def outlier_fraction(self) -> float:
        total = self.pairs_kept + self.outliers_discarded
        return self.outliers_discarded / total if total else 0.0

    def to_jsonable(self) -> dict:
        return {
            "ref_year": self.ref_year,
            "base_year": self.base_year,
            "months": self.months,
            "stations_total": self.stations_total,
            "stations_kept": self.stations_total - len(self.dropped_stations),
            "dropped_stations": dict(sorted(self.dropped_stations.items())),
            "calendar_days_per_week": {str(k): v for k, v in sorted(self.calendar_days_per_week.items())},
            "calendar_weekdays_per_week": {str(k): v for k, v in sorted(self.calendar_weekdays_per_week.items())},
            "pairs_per_week": {str(k): v for k, v in sorted(self.pairs_per_week.items())},
            "pairs_kept": self.pairs_kept,
            "outliers_discarded": self.outliers_discarded,
            "outlier_fraction": self.outlier_fraction,
            "days_per_month": {str(k): v for k, v in sorted(self.days_per_month.items())},
            "observations_per_month": {str(k): v for k, v in sorted(self.observations_per_month.items())},
        }


def daily_average(hourly: Sequence[Optional[float]]) -> Optional[float]:
    """Mean of the valid hourly slots, or None below the 18-of-24 coverage rule."""
    if len(hourly) != 24:
        raise DataError(f"expected 24 hourly slots, got {len(hourly)}")
    valid = [v for v in hourly if v is not None]
    for v in valid:
        if v < 0:
            raise DataError(f"negative hourly value {v}")
    if len(valid) < MIN_VALID_HOURS:
        return None
    return sum(valid) / len(valid)


def station_filter(series: DailySeries, window: Sequence[date]) -> bool:
    """Keep a station iff its missing fraction over the window is below 25%."""
    if not window:
        raise DataError("empty station-filter window")
    missing = sum(1 for d in window if d not in series.values)
    return missing / len(window) < MAX_STATION_MISSING


def make_observation(
    day: AlignedDay,
    y_base: float,
    y_ref: float,
    met_base: Optional[Mapping[str, float]] = None,
    met_ref: Optional[Mapping[str, float]] = None,
) -> Optional[AlignedObservation]:
    """Build one aligned observation, or None when the pair is an outlier.

    The pair is kept iff |y_ref / y_base - 1| <= 1 (boundary inclusive).
    Meteorology enters as reference-minus-baseline differences; both sides
    must provide the same variable names.
    """
    if y_base <= 0 or y_ref <= 0:
        raise DataError(
            f"nonpositive concentration in pair ({y_base}, {y_ref}) on {day.date_ref}"
        )
    met_base = dict(met_base or {})
    met_ref = dict(met_ref or {})
    if set(met_base) != set(met_ref):
        raise DataError(
            f"meteorology schema mismatch on {day.date_ref}: "
            f"{sorted(set(met_base) ^ set(met_ref))}"
        )
    if abs(y_ref / y_base - 1.0) > MAX_ABS_RELATIVE_CHANGE:
        return None
    return AlignedObservation(
        station_id="",
        date_ref=day.date_ref,
        date_base=day.date_base,
        iso_week=day.iso_week,
        weekday=day.weekday,
        y_base=y_base,
        y_ref=y_ref,
        delta=math.log(y_ref) - math.log(y_base),
        met_diffs={k: met_ref[k] - met_base[k] for k in met_base},
    )


def build_month_dataset(
    stations: Sequence[Station],
    observations: Sequence[AlignedObservation],
    month_index: int,
    month: int,
    calendar: Sequence[AlignedDay],
    spatial_names: Sequence[str],
    met_names: Sequence[str],
) -> MonthDataset:
    """Assemble a MonthDataset, assigning day indices from the aligned calendar.

    Day indices follow the sorted reference dates of the month's calendar.
    Stations may miss days; an observation whose station is not listed is an
    error.  An empty observation list is permitted (surfaced at fit time).
    """
    cal = month_calendar(calendar, month)
    day_of_date = {d.date_ref: i + 1 for i, d in enumerate(cal)}
    known = {s.id for s in stations}
    indexed = []
    for obs in observations:
        if obs.station_id not in known:
            raise DataError(f"observation references unknown station {obs.station_id!r}")
        if obs.date_ref not in day_of_date:
            raise DataError(
                f"observation date {obs.date_ref} outside the month-{month} calendar"
            )
        indexed.append(
            replace(
                obs, month_index=month_index, day_index=day_of_date[obs.date_ref]
            )
        )
    indexed.sort(key=lambda o: (o.station_id, o.date_ref))
    return MonthDataset(
        month_index=month_index,
        month=month,
        observations=indexed,
        stations=sorted(stations, key=lambda s: s.id),
        spatial_names=list(spatial_names),
        met_names=list(met_names),
        calendar=cal,
    )


def prepare_months(
    stations: Sequence[Station],
    series_ref: dict[str, DailySeries],
    series_base: dict[str, DailySeries],
    met_ref: dict[str, dict[date, dict[str, float]]],
    met_base: dict[str, dict[date, dict[str, float]]],
    met_names: Sequence[str],
    spatial_names: Sequence[str],
    ref_year: int,
    base_year: int,
    months: Sequence[int],
    exclude_dates: Sequence[date] = (),
) -> tuple[list[MonthDataset], AlignmentReport]:
    """Full preparation: station filter, alignment, pairing, outlier discard.

    Stations are filtered first (missingness in either year's window drops
    the station), then pairs with absolute relative change above 100% are
    discarded.  Output ordering is deterministic (station id, then date).
    """
    from airdelta.calendars import align_dates, window_dates

    ref_window = window_dates(ref_year, months)
    base_window = window_dates(base_year, months)
    dropped: dict[str, str] = {}
    kept_stations = []
    for s in sorted(stations, key=lambda s: s.id):
        sr = series_ref.get(s.id)
        sb = series_base.get(s.id)
        if sr is None or not sr.values:
            dropped[s.id] = f"no data in {ref_year}"
        elif sb is None or not sb.values:
            dropped[s.id] = f"no data in {base_year}"
        elif not station_filter(sr, ref_window):
            dropped[s.id] = f"missing fraction >= 25% in {ref_year}"
        elif not station_filter(sb, base_window):
            dropped[s.id] = f"missing fraction >= 25% in {base_year}"
        else:
            kept_stations.append(s)

    calendar = align_dates(ref_window, base_window, exclude_dates)
    cal_days_per_week: dict[int, int] = {}
    cal_weekdays: dict[int, list[int]] = {}
    for d in calendar:
        cal_days_per_week[d.iso_week] = cal_days_per_week.get(d.iso_week, 0) + 1
        cal_weekdays.setdefault(d.iso_week, []).append(d.weekday)

    pairs_per_week: dict[int, int] = {}
    outliers = 0
    obs_by_month: dict[int, list[AlignedObservation]] = {m: [] for m in months}
    for s in kept_stations:
        sr = series_ref[s.id]
        sb = series_base[s.id]
        mr = met_ref.get(s.id, {})
        mb = met_base.get(s.id, {})
        for day in calendar:
            y_ref = sr.values.get(day.date_ref)
            y_base = sb.values.get(day.date_base)
            if y_ref is None or y_base is None:
                continue
            met_r = mr.get(day.date_ref)
            met_b = mb.get(day.date_base)
            if met_names and (met_r is None or met_b is None):
                continue  # missing meteorology kills the day
            obs = make_observation(day, y_base, y_ref, met_b or {}, met_r or {})
            if obs is None:
                outliers += 1
                continue
            obs = replace(obs, station_id=s.id)
            obs_by_month[day.date_ref.month].append(obs)
            pairs_per_week[day.iso_week] = pairs_per_week.get(day.iso_week, 0) + 1

    datasets = []
    for idx, month in enumerate(months, start=1):
        month_obs = obs_by_month[month]
        month_station_ids = {o.station_id for o in month_obs}
        month_stations = [s for s in kept_stations if s.id in month_station_ids]
        datasets.append(
            build_month_dataset(
                month_stations,
                month_obs,
                month_index=idx,
                month=month,
                calendar=calendar,
                spatial_names=spatial_names,
                met_names=met_names,
            )
        )
    report = AlignmentReport(
        ref_year=ref_year,
        base_year=base_year,
        months=list(months),
        stations_total=len(stations),
        dropped_stations=dropped,
        calendar_days_per_week=cal_days_per_week,
        calendar_weekdays_per_week=cal_weekdays,
        pairs_per_week=pairs_per_week,
        pairs_kept=sum(len(v) for v in obs_by_month.values()),
        outliers_discarded=outliers,
        days_per_month={d.month: d.n_days for d in datasets},
        observations_per_month={d.month: len(d.observations) for d in datasets},
    )
    return datasets, report
