"""ISO-8601 week/weekday alignment of two years of daily dates.

Days of the reference year (the intervention year) are paired with days of
the baseline year that fall in the same ISO week number and on the same
weekday, so that Mondays compare with Mondays and Sundays with Sundays.
Reference days whose counterpart is missing from the baseline window are
dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Sequence

SUNDAY = 7  # ISO weekday number


@dataclass(frozen=True)
class AlignedDay:
    """One matched pair of calendar days (reference year vs baseline year)."""

    date_ref: date
    date_base: date
    iso_week: int
    weekday: int  # ISO: 1 = Monday .. 7 = Sunday

    @property
    def is_sunday(self) -> bool:
        return self.weekday == SUNDAY


def window_dates(year: int, months: Sequence[int]) -> list[date]:
    """All calendar dates of `year` falling in the given months, sorted."""
    out = []
    d = date(year, 1, 1)
    while d.year == year:
        if d.month in months:
            out.append(d)
        d += timedelta(days=1)
    return out


def _iso_key(d: date) -> tuple[int, int, int]:
    """(ISO-year offset from the calendar year, ISO week, ISO weekday).

    The offset disambiguates early-January days that belong to the previous
    ISO year's week 52/53 from late-December days, so a window may span a
    whole calendar year.
    """
    iso_year, week, wday = d.isocalendar()
    return (iso_year - d.year, week, wday)


def align_dates(
    ref_dates: Iterable[date],
    base_dates: Iterable[date],
    exclude: Iterable[date] = (),
) -> list[AlignedDay]:
    """Pair reference dates with baseline dates by (ISO week, ISO weekday).

    The pairing is 1-to-1: a (week, weekday) combination occurs at most once
    per calendar year.  Reference dates without a counterpart are dropped.
    Dates listed in `exclude` (either year) are skipped.
    """
    excluded = set(exclude)
    base_by_key: dict[tuple[int, int, int], date] = {}
    for d in base_dates:
        if d in excluded:
            continue
        key = _iso_key(d)
        if key in base_by_key:
            raise ValueError(f"duplicate ISO (week, weekday) {key[1:]} in baseline window")
        base_by_key[key] = d

    out = []
    seen: set[tuple[int, int, int]] = set()
    for d in sorted(set(ref_dates)):
        if d in excluded:
            continue
        key = _iso_key(d)
        if key in seen:
            raise ValueError(f"duplicate ISO (week, weekday) {key[1:]} in reference window")
        seen.add(key)
        counterpart = base_by_key.get(key)
        if counterpart is not None:
            out.append(AlignedDay(d, counterpart, key[1], key[2]))
    return out


def alignment_calendar(
    ref_year: int,
    base_year: int,
    months: Sequence[int],
    exclude: Iterable[date] = (),
) -> list[AlignedDay]:
    """Aligned calendar for the study window of a reference/baseline year pair."""
    return align_dates(
        window_dates(ref_year, months), window_dates(base_year, months), exclude
    )


def month_calendar(calendar: Sequence[AlignedDay], month: int) -> list[AlignedDay]:
    """Restrict an aligned calendar to reference dates in one month, sorted."""
    return sorted(
        (d for d in calendar if d.date_ref.month == month), key=lambda d: d.date_ref
    )
