import math
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airdelta.calendars import AlignedDay, alignment_calendar, window_dates
from airdelta.errors import DataError
from airdelta.pipeline import (
    DailySeries,
    Station,
    StationType,
    build_month_dataset,
    daily_average,
    make_observation,
    prepare_months,
    station_filter,
)

A_DAY = AlignedDay(date(2020, 3, 2), date(2019, 3, 4), 10, 1)
A_SUNDAY = AlignedDay(date(2020, 3, 1), date(2019, 3, 3), 9, 7)


# -- daily_average -----------------------------------------------------------

def test_daily_average_constant():
    assert daily_average([10.0] * 24) == 10.0


def test_daily_average_17_valid_is_missing():
    hourly = [5.0] * 17 + [None] * 7
    assert daily_average(hourly) is None


def test_daily_average_18_valid_uses_only_valid():
    values = [float(v) for v in range(1, 19)]
    hourly = values + [None] * 6
    assert daily_average(hourly) == pytest.approx(sum(values) / 18)


def test_daily_average_rejects_negative():
    with pytest.raises(DataError):
        daily_average([-1.0] + [5.0] * 23)


def test_daily_average_needs_24_slots():
    with pytest.raises(DataError):
        daily_average([1.0] * 23)


@given(
    values=st.lists(st.floats(min_value=0.0, max_value=500.0), min_size=18, max_size=24),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=60, deadline=None)
def test_daily_average_invariant_to_missing_positions(values, seed):
    import random

    n_missing = 24 - len(values)
    slots = list(values) + [None] * n_missing
    rng = random.Random(seed)
    shuffled = slots.copy()
    rng.shuffle(shuffled)
    assert daily_average(shuffled) == pytest.approx(daily_average(slots))


# -- station_filter ----------------------------------------------------------

def _series_with_missing(n_days: int, n_missing: int) -> tuple[DailySeries, list[date]]:
    window = window_dates(2020, (3, 4))[:n_days]
    values = {d: 10.0 for d in window[n_missing:]}
    return DailySeries("s1", 2020, values), window


def test_station_filter_no_missing_keeps():
    series, window = _series_with_missing(61, 0)
    assert station_filter(series, window)


def test_station_filter_16_of_61_drops():
    series, window = _series_with_missing(61, 16)
    assert not station_filter(series, window)  # 16/61 = 26.2%


def test_station_filter_15_of_61_keeps():
    series, window = _series_with_missing(61, 15)
    assert station_filter(series, window)  # 15/61 = 24.6%


def test_station_filter_empty_window_errors():
    series, _ = _series_with_missing(10, 0)
    with pytest.raises(DataError):
        station_filter(series, [])


# -- make_observation --------------------------------------------------------

def test_make_observation_equal_values():
    obs = make_observation(A_DAY, 20.0, 20.0)
    assert obs is not None
    assert obs.delta == 0.0


def test_make_observation_log_ratio():
    obs = make_observation(A_DAY, 20.0, 15.0)
    assert obs.delta == pytest.approx(math.log(0.75), abs=1e-12)
    assert obs.delta == pytest.approx(-0.28768, abs=5e-6)


def test_make_observation_discards_150pct_increase():
    assert make_observation(A_DAY, 10.0, 25.0) is None


def test_make_observation_outlier_boundary_is_inclusive_keep():
    assert make_observation(A_DAY, 10.0, 20.0) is not None  # ratio exactly 2
    assert make_observation(A_DAY, 10.0, 20.0 + 1e-9) is None  # ratio 2 + eps
    # lower side: ratio -> 0 never reaches |ratio - 1| > 1 (positivity)
    assert make_observation(A_DAY, 10.0, 1e-9) is not None


def test_make_observation_rejects_nonpositive():
    with pytest.raises(DataError):
        make_observation(A_DAY, 0.0, 5.0)
    with pytest.raises(DataError):
        make_observation(A_DAY, 5.0, -1.0)


def test_make_observation_met_diffs_and_schema():
    obs = make_observation(A_DAY, 10.0, 10.0, {"t2m": 1.0}, {"t2m": 3.5})
    assert obs.met_diffs == {"t2m": 2.5}
    with pytest.raises(DataError):
        make_observation(A_DAY, 10.0, 10.0, {"t2m": 1.0}, {"wind": 3.5})


@given(
    y1=st.floats(min_value=0.1, max_value=100.0),
    ratio=st.floats(min_value=0.2, max_value=2.0),
)
@settings(max_examples=60, deadline=None)
def test_delta_antisymmetry(y1, ratio):
    y2 = y1 * ratio
    forward = make_observation(A_DAY, y1, y2)
    backward = make_observation(A_DAY, y2, y1)
    assert forward is not None
    if backward is not None:
        assert forward.delta == pytest.approx(-backward.delta, abs=1e-12)


def test_sunday_flag_consistency():
    obs = make_observation(A_SUNDAY, 10.0, 10.0)
    assert obs.is_sunday
    assert not make_observation(A_DAY, 10.0, 10.0).is_sunday


# -- build_month_dataset -----------------------------------------------------

def _station(sid: str) -> Station:
    return Station(sid, 0.0, 0.0, 100.0, StationType.URBAN, {})


def _obs_for(sid: str, day: AlignedDay):
    obs = make_observation(day, 10.0, 12.0)
    return type(obs)(**{**obs.__dict__, "station_id": sid})


def test_build_month_dataset_counts():
    cal = alignment_calendar(2020, 2019, (3,))[:3]
    stations = [_station("a"), _station("b")]
    obs = [_obs_for(s.id, d) for s in stations for d in cal]
    ds = build_month_dataset(stations, obs, 1, 3, cal, [], [])
    assert len(ds.observations) == 6
    assert ds.n_days == 3
    assert [o.day_index for o in ds.observations if o.station_id == "a"] == [1, 2, 3]


def test_build_month_dataset_allows_missing_days():
    cal = alignment_calendar(2020, 2019, (3,))[:3]
    stations = [_station("a"), _station("b")]
    obs = [_obs_for("a", d) for d in cal] + [_obs_for("b", d) for d in cal[:2]]
    ds = build_month_dataset(stations, obs, 1, 3, cal, [], [])
    assert len(ds.observations) == 5
    assert ds.n_days == 3


def test_build_month_dataset_empty_is_allowed():
    cal = alignment_calendar(2020, 2019, (3,))[:3]
    ds = build_month_dataset([_station("a")], [], 1, 3, cal, [], [])
    assert ds.observations == []


def test_build_month_dataset_unknown_station_errors():
    cal = alignment_calendar(2020, 2019, (3,))[:3]
    with pytest.raises(DataError):
        build_month_dataset([_station("a")], [_obs_for("zz", cal[0])], 1, 3, cal, [], [])


# -- prepare_months ----------------------------------------------------------

def _full_series(sid: str, year: int, months, value=20.0) -> DailySeries:
    return DailySeries(sid, year, {d: value for d in window_dates(year, months)})


def test_prepare_months_self_alignment_zero_deltas():
    months = (3,)
    stations = [_station("a"), _station("b")]
    series = {s.id: _full_series(s.id, 2019, months) for s in stations}
    datasets, report = prepare_months(
        stations, series, series, {}, {}, [], [], 2019, 2019, months
    )
    assert report.outliers_discarded == 0
    assert all(o.delta == 0.0 for o in datasets[0].observations)
    assert all(o.date_ref == o.date_base for o in datasets[0].observations)


def test_prepare_months_drops_high_missingness_station():
    months = (3,)
    stations = [_station("a"), _station("b")]
    window = window_dates(2020, months)
    good = _full_series("a", 2020, months)
    sparse = DailySeries("b", 2020, {d: 20.0 for d in window[: len(window) // 2]})
    base = {sid: _full_series(sid, 2019, months) for sid in ("a", "b")}
    datasets, report = prepare_months(
        stations, {"a": good, "b": sparse}, base, {}, {}, [], [], 2020, 2019, months
    )
    assert "b" in report.dropped_stations
    assert datasets[0].n_stations == 1


def test_prepare_months_missing_meteorology_kills_day():
    months = (3,)
    stations = [_station("a")]
    ref = {"a": _full_series("a", 2020, months)}
    base = {"a": _full_series("a", 2019, months)}
    cal = alignment_calendar(2020, 2019, months)
    met_ref = {"a": {d.date_ref: {"t2m": 1.0} for d in cal if d.date_ref.day != 5}}
    met_base = {"a": {d.date_base: {"t2m": 0.5} for d in cal}}
    datasets, _ = prepare_months(
        stations, ref, base, met_ref, met_base, ["t2m"], [], 2020, 2019, months
    )
    dates = {o.date_ref for o in datasets[0].observations}
    assert date(2020, 3, 5) not in dates
    assert len(dates) == len(cal) - 1


def test_prepare_months_counts_outliers():
    months = (3,)
    stations = [_station("a")]
    cal = alignment_calendar(2020, 2019, months)
    base = {"a": _full_series("a", 2019, months)}
    values = {d.date_ref: 20.0 for d in cal}
    outlier_days = [d.date_ref for d in cal[:3]]
    for d in outlier_days:
        values[d] = 50.0  # ratio 2.5
    ref = {"a": DailySeries("a", 2020, values)}
    datasets, report = prepare_months(
        stations, ref, base, {}, {}, [], [], 2020, 2019, months
    )
    assert report.outliers_discarded == 3
    assert report.pairs_kept == len(cal) - 3
    assert report.outlier_fraction == pytest.approx(3 / len(cal))
