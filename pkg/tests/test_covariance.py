import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airdelta.covariance import (
    Ar1Params,
    HyperParameters,
    MaternParams,
    ar1_stationary_cov,
    checked_cholesky,
    matern_cov,
    pairwise_distances,
    separable_cov,
    spatial_cov_matrix,
    temporal_corr_matrix,
)
from airdelta.errors import CholeskyError, DataError

MARCH_SD = 0.37  # spatial-field sd used across these tests


def bessel_k1_oracle(x: float) -> float:
    """Independent modified-Bessel evaluation (mpmath)."""
    import mpmath

    return float(mpmath.besselk(1, x))


def test_matern_at_zero_is_variance():
    p = MaternParams(MARCH_SD, 74.0)
    assert matern_cov(0.0, p) == pytest.approx(MARCH_SD**2, abs=1e-15)
    assert matern_cov(0.0, p) == pytest.approx(0.1369, abs=1e-12)


def test_matern_correlation_at_range_matches_bessel_oracle():
    p = MaternParams(1.0, 50.0, smoothness=1.0)
    z = math.sqrt(8.0)  # kappa * range for smoothness 1
    expected = z * bessel_k1_oracle(z)
    assert matern_cov(50.0, p) == pytest.approx(expected, rel=1e-12)
    assert matern_cov(50.0, p) == pytest.approx(0.139, abs=1e-3)


def test_matern_far_field_decays_to_zero():
    p = MaternParams(1.0, 10.0)  # kappa = sqrt(8)/10; kappa*h > 40 for h > 142
    assert matern_cov(200.0, p) == pytest.approx(0.0, abs=1e-12)
    assert matern_cov(1e6, p) == 0.0


def test_matern_rejects_negative_distance():
    with pytest.raises(DataError):
        matern_cov(-0.1, MaternParams(1.0, 10.0))


def test_matern_monotone_nonincreasing():
    p = MaternParams(0.8, 60.0)
    grid = np.linspace(0.0, 400.0, 4001)
    vals = matern_cov(grid, p)
    assert np.all(np.diff(vals) <= 1e-15)


@given(
    nu=st.floats(min_value=0.3, max_value=3.0),
    h=st.floats(min_value=0.0, max_value=500.0),
    rho=st.floats(min_value=5.0, max_value=300.0),
)
@settings(max_examples=80, deadline=None)
def test_matern_bounded_by_variance(nu, h, rho):
    p = MaternParams(0.5, rho, nu)
    val = matern_cov(h, p)
    assert 0.0 <= val <= 0.25 + 1e-12


def test_spatial_cov_matrix_single_site():
    p = MaternParams(MARCH_SD, 74.0)
    cov = spatial_cov_matrix(np.array([[10.0, 20.0]]), p, jitter=1e-3)
    assert cov.shape == (1, 1)
    assert cov[0, 0] == pytest.approx(MARCH_SD**2 + 1e-3, abs=1e-15)


def test_spatial_cov_matrix_coincident_sites_zero_jitter_errors():
    p = MaternParams(0.5, 50.0)
    coords = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(CholeskyError) as err:
        spatial_cov_matrix(coords, p, jitter=0.0)
    assert err.value.pivot == 1


def test_spatial_cov_matrix_matches_elementwise_oracle():
    rng = np.random.default_rng(42)
    coords = rng.uniform(0, 200, (5, 2))
    p = MaternParams(0.6, 80.0)
    cov = spatial_cov_matrix(coords, p, jitter=0.0)
    for i in range(5):
        for j in range(5):
            h = float(np.linalg.norm(coords[i] - coords[j]))
            assert cov[i, j] == pytest.approx(float(matern_cov(h, p)), abs=1e-14)


@given(seed=st.integers(min_value=0, max_value=10_000), n=st.integers(min_value=2, max_value=12))
@settings(max_examples=40, deadline=None)
def test_spatial_cov_matrix_spd_with_jitter(seed, n):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 150, (n, 2))
    p = MaternParams(0.5, 60.0)
    cov = spatial_cov_matrix(coords, p, jitter=1e-10)
    checked_cholesky(cov)  # would raise on failure


def test_ar1_examples():
    assert ar1_stationary_cov(3, 3, Ar1Params(0.9)) == 1.0
    assert ar1_stationary_cov(5, 4, Ar1Params(0.64)) == pytest.approx(0.64)
    assert ar1_stationary_cov(2, 9, Ar1Params(0.0)) == 0.0


def test_ar1_rejects_unit_root():
    with pytest.raises(DataError):
        Ar1Params(1.0)


def test_temporal_matrix_raw_scaling():
    a = 0.6
    base = temporal_corr_matrix(4, Ar1Params(a))
    raw = temporal_corr_matrix(4, Ar1Params(a), raw_innovation=True)
    assert np.allclose(raw, base / (1 - a**2))
    assert base[0, 0] == 1.0
    assert base[0, 3] == pytest.approx(a**3)


def test_separable_cov_examples():
    theta = HyperParameters.make(
        a=0.64, range_km=74.0, sigma_eps=0.21, sigma_v=0.16, sigma_omega=MARCH_SD
    )
    s = np.array([5.0, 5.0])
    assert separable_cov(2, s, 2, s, theta) == pytest.approx(MARCH_SD**2)
    assert separable_cov(2, s, 3, s, theta) == pytest.approx(0.64 * 0.1369, abs=1e-12)
    s2 = s + np.array([74.0, 0.0])
    corr_at_range = float(matern_cov(74.0, theta.matern)) / MARCH_SD**2
    assert separable_cov(1, s, 1, s2, theta) == pytest.approx(
        corr_at_range * MARCH_SD**2, rel=1e-12
    )
    assert corr_at_range == pytest.approx(0.139, abs=1e-3)


@given(
    seed=st.integers(min_value=0, max_value=5000),
    t1=st.integers(min_value=0, max_value=6),
    t2=st.integers(min_value=0, max_value=6),
)
@settings(max_examples=40, deadline=None)
def test_separable_cov_factorizes(seed, t1, t2):
    rng = np.random.default_rng(seed)
    theta = HyperParameters.make(
        a=rng.uniform(-0.9, 0.9),
        range_km=rng.uniform(20, 120),
        sigma_eps=0.2,
        sigma_v=0.2,
        sigma_omega=rng.uniform(0.1, 0.8),
    )
    s1, s2 = rng.uniform(0, 100, (2, 2))
    lhs = separable_cov(t1, s1, t2, s2, theta) * separable_cov(t1, s1, t1, s1, theta)
    rhs = separable_cov(t1, s1, t2, s1, theta) * separable_cov(t1, s1, t1, s2, theta)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_ar1_recursion_reaches_stationary_marginal():
    """Simulating the recursion with scaled innovations keeps Var(u_t) fixed."""
    rng = np.random.default_rng(7)
    theta = HyperParameters.make(
        a=0.7, range_km=60.0, sigma_eps=0.1, sigma_v=0.1, sigma_omega=0.5
    )
    coords = rng.uniform(0, 100, (3, 2))
    cov = matern_cov(pairwise_distances(coords), theta.matern)
    L = np.linalg.cholesky(cov + 1e-12 * np.eye(3))
    n_rep, T = 4000, 6
    u = L @ rng.standard_normal((3, n_rep))
    scale = math.sqrt(1 - theta.a**2)
    for t in range(1, T + 1):
        u = theta.a * u + scale * (L @ rng.standard_normal((3, n_rep)))
        emp = u.var(axis=1)
        se = theta.sigma_omega**2 * math.sqrt(2.0 / n_rep)
        assert np.all(np.abs(emp - theta.sigma_omega**2) < 3.0 * se * 1.5)


def test_hyper_parameter_invariants():
    with pytest.raises(DataError):
        HyperParameters.make(a=0.5, range_km=50, sigma_eps=0.0, sigma_v=0.1, sigma_omega=0.1)
    with pytest.raises(DataError):
        MaternParams(0.5, -1.0)
