"""Shared builders for the test suite."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from airdelta.calendars import AlignedDay
from airdelta.covariance import HyperParameters
from airdelta.model import GaussianSystem, Standardization
from airdelta.priors import PriorConfig


def synthetic_calendar(n_days: int, start: date = date(2020, 3, 2)) -> list[AlignedDay]:
    """Consecutive reference dates with correct ISO tags (for in-memory tests)."""
    out = []
    for t in range(n_days):
        d = start + timedelta(days=t)
        _, week, wday = d.isocalendar()
        out.append(AlignedDay(d, d - timedelta(days=364), week, wday))
    return out


def make_system(
    rng: np.random.Generator,
    n_stations: int = 4,
    n_days: int = 3,
    p_z: int = 1,
    p_x: int = 1,
    missing: float = 0.1,
    box_km: float = 120.0,
    y: np.ndarray | None = None,
    jitter_scale: float = 1e-8,
    raw_innovation: bool = False,
) -> GaussianSystem:
    """Small random system with O(1)-scale covariates."""
    coords = rng.uniform(0.0, box_km, (n_stations, 2))
    rows = [
        (t, i)
        for t in range(n_days)
        for i in range(n_stations)
        if rng.random() >= missing
    ]
    if not rows:
        rows = [(0, 0)]
    day = np.array([r[0] for r in rows])
    sta = np.array([r[1] for r in rows])
    n_obs = len(rows)
    calendar = synthetic_calendar(n_days)
    sunday = np.array([1.0 if calendar[t].is_sunday else 0.0 for t in day])
    X = np.column_stack(
        [np.ones(n_obs), day + 1.0, sunday, rng.standard_normal((n_obs, p_z + p_x))]
    )
    std = Standardization(np.zeros(p_z), np.ones(p_z), np.zeros(p_x), np.ones(p_x))
    return GaussianSystem(
        y=rng.standard_normal(n_obs) if y is None else y,
        X=X,
        station_of_row=sta,
        day_of_row=day,
        coords=coords,
        n_days=n_days,
        spatial_names=[f"z{i}" for i in range(p_z)],
        met_names=[f"m{i}" for i in range(p_x)],
        standardization=std,
        calendar=calendar,
        station_ids=[f"s{i:02d}" for i in range(n_stations)],
        jitter_scale=jitter_scale,
        raw_innovation=raw_innovation,
    )


def simulate_system(
    rng: np.random.Generator,
    theta: HyperParameters,
    n_stations: int,
    n_days: int,
    box_km: float = 300.0,
    p_z: int = 0,
    p_x: int = 0,
    coefs: np.ndarray | None = None,
    missing: float = 0.0,
) -> tuple[GaussianSystem, dict]:
    """System whose response is an exact draw from the generative model.

    Covariates are standard Gaussian (standardization is the identity);
    `coefs` is the raw-scale truth [intercept, day, sunday, z..., met...],
    zeros when omitted.
    """
    import math

    from airdelta.covariance import matern_cov, pairwise_distances

    coords = rng.uniform(0.0, box_km, (n_stations, 2))
    cov = matern_cov(pairwise_distances(coords), theta.matern)
    cov[np.diag_indices_from(cov)] += 1e-10 * theta.sigma_omega**2
    L = np.linalg.cholesky(cov)
    a = theta.a
    u = np.zeros((n_stations, n_days))
    u[:, 0] = L @ rng.standard_normal(n_stations)
    for t in range(1, n_days):
        u[:, t] = a * u[:, t - 1] + math.sqrt(1 - a * a) * (
            L @ rng.standard_normal(n_stations)
        )
    v = theta.sigma_v * rng.standard_normal(n_stations)
    calendar = synthetic_calendar(n_days)

    rows = [
        (t, i)
        for t in range(n_days)
        for i in range(n_stations)
        if rng.random() >= missing
    ]
    day = np.array([r[0] for r in rows])
    sta = np.array([r[1] for r in rows])
    n_obs = len(rows)
    z = rng.standard_normal((n_stations, p_z))
    met = rng.standard_normal((n_obs, p_x))
    sunday = np.array([1.0 if calendar[t].is_sunday else 0.0 for t in day])
    X = np.column_stack([np.ones(n_obs), day + 1.0, sunday, z[sta], met])
    p = 3 + p_z + p_x
    coefs = np.zeros(p) if coefs is None else np.asarray(coefs, dtype=float)
    eps = theta.sigma_eps * rng.standard_normal(n_obs)
    y = X @ coefs + v[sta] + u[sta, day] + eps
    std = Standardization(np.zeros(p_z), np.ones(p_z), np.zeros(p_x), np.ones(p_x))
    sys = GaussianSystem(
        y=y,
        X=X,
        station_of_row=sta,
        day_of_row=day,
        coords=coords,
        n_days=n_days,
        spatial_names=[f"z{i}" for i in range(p_z)],
        met_names=[f"m{i}" for i in range(p_x)],
        standardization=std,
        calendar=calendar,
        station_ids=[f"s{i:03d}" for i in range(n_stations)],
    )
    truth = {"u": u, "v": v, "coefs": coefs, "theta": theta}
    return sys, truth


def subset_days(sys: GaussianSystem, n_days: int) -> GaussianSystem:
    """Restrict a system to its first `n_days` days."""
    import dataclasses

    keep = sys.day_of_row < n_days
    return dataclasses.replace(
        sys,
        y=sys.y[keep],
        X=sys.X[keep],
        station_of_row=sys.station_of_row[keep],
        day_of_row=sys.day_of_row[keep],
        n_days=n_days,
        calendar=sys.calendar[:n_days],
        rows_by_day=[],
        row_of={},
    )


def random_theta(rng: np.random.Generator) -> HyperParameters:
    return HyperParameters.make(
        a=rng.uniform(-0.9, 0.9),
        range_km=rng.uniform(15.0, 150.0),
        sigma_eps=rng.uniform(0.05, 0.9),
        sigma_v=rng.uniform(0.05, 0.9),
        sigma_omega=rng.uniform(0.05, 0.9),
    )


@pytest.fixture
def table3_march_theta() -> HyperParameters:
    return HyperParameters.make(
        a=0.64, range_km=74.0, sigma_eps=0.21, sigma_v=0.16, sigma_omega=0.37
    )


@pytest.fixture
def default_priors() -> PriorConfig:
    return PriorConfig()


@pytest.fixture
def moderate_priors() -> PriorConfig:
    """Default PC priors but a desk-scale coefficient sd for oracle accuracy."""
    return PriorConfig(coef_sd=8.0)


def subset_stations(sys: GaussianSystem, keep: np.ndarray) -> GaussianSystem:
    """Restrict a system to the given station indices (remapping rows)."""
    import dataclasses

    keep = np.asarray(keep, dtype=int)
    remap = -np.ones(sys.n_stations, dtype=int)
    remap[keep] = np.arange(keep.size)
    rows = np.flatnonzero(remap[sys.station_of_row] >= 0)
    return dataclasses.replace(
        sys,
        y=sys.y[rows],
        X=sys.X[rows],
        station_of_row=remap[sys.station_of_row[rows]],
        day_of_row=sys.day_of_row[rows],
        coords=sys.coords[keep],
        station_ids=[sys.station_ids[i] for i in keep],
        rows_by_day=[],
        row_of={},
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    entries = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                entries[nodeid.split("::")[-1]] = status
    if entries:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name in sorted(entries):
            label = "PASS" if entries[name] == "passed" else "FAIL"
            terminalreporter.write_line(f"{label}  {name}")
