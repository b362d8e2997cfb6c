import math

import numpy as np
import pytest
from scipy.integrate import quad

from airdelta.errors import DataError
from airdelta.priors import (
    PcAr1Prior,
    PcMaternJointPrior,
    PcSdPrior,
    PriorConfig,
    _ar1_cdf_below,
    coef_logprior,
    hyper_logprior,
    pc_ar1_logdensity,
    pc_ar1_quantile,
    pc_matern_joint_logdensity,
    pc_sd_logdensity,
)

QUAD_TOL = 1e-6


def test_defaults_match_the_configured_regime():
    cfg = PriorConfig()
    assert cfg.sd_eps == PcSdPrior(1.0, 0.1)
    assert cfg.sd_v == PcSdPrior(1.0, 0.1)
    assert cfg.matern == PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    assert cfg.ar1 == PcAr1Prior(0.8, 0.3)
    assert cfg.coef_sd == 1000.0


def test_sd_prior_rate_and_survival():
    prior = PcSdPrior(1.0, 0.1)
    assert prior.rate == pytest.approx(-math.log(0.1), rel=1e-12)
    assert prior.rate == pytest.approx(2.302585, abs=1e-6)
    survival, _ = quad(lambda s: math.exp(pc_sd_logdensity(s, prior)), 1.0, 60.0)
    assert survival == pytest.approx(0.1, abs=QUAD_TOL)


def test_sd_prior_density_at_origin_limit():
    prior = PcSdPrior(1.0, 0.1)
    assert pc_sd_logdensity(1e-12, prior) == pytest.approx(math.log(prior.rate), abs=1e-9)


def test_sd_prior_integrates_to_one():
    prior = PcSdPrior(1.0, 0.1)
    total, _ = quad(lambda s: math.exp(pc_sd_logdensity(s, prior)), 0.0, 80.0)
    assert total == pytest.approx(1.0, abs=QUAD_TOL)


def test_sd_prior_monotone_decreasing():
    prior = PcSdPrior(1.0, 0.1)
    grid = np.linspace(0.01, 5.0, 200)
    vals = [pc_sd_logdensity(s, prior) for s in grid]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_sd_prior_rejects_nonpositive():
    with pytest.raises(DataError):
        pc_sd_logdensity(0.0, PcSdPrior(1.0, 0.1))


def test_matern_joint_range_rate_closed_form():
    prior = PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    assert prior.rate_range == pytest.approx(-150.0 * math.log(0.8), rel=1e-12)
    assert prior.rate_range == pytest.approx(33.472, abs=1e-3)


def test_matern_joint_range_quantile_constraint():
    prior = PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    density = lambda r: math.exp(pc_matern_joint_logdensity(r, 1.0, prior)) / math.exp(
        math.log(prior.rate_sd) - prior.rate_sd * 1.0
    )
    below, _ = quad(density, 1e-6, 150.0, limit=200)
    assert below == pytest.approx(0.8, abs=QUAD_TOL)


def test_matern_joint_sd_tail_constraint():
    prior = PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    density = lambda s: math.exp(pc_matern_joint_logdensity(100.0, s, prior)) / (
        prior.rate_range * 100.0**-2 * math.exp(-prior.rate_range / 100.0)
    )
    tail, _ = quad(density, 1.0, 40.0, limit=200)
    assert tail == pytest.approx(0.01, abs=QUAD_TOL)


def test_matern_joint_rejects_nonpositive():
    prior = PcMaternJointPrior(150.0, 0.8, 1.0, 0.01)
    with pytest.raises(DataError):
        pc_matern_joint_logdensity(-1.0, 1.0, prior)
    with pytest.raises(DataError):
        pc_matern_joint_logdensity(1.0, 0.0, prior)


def test_ar1_prior_tail_constraint_by_quadrature():
    prior = PcAr1Prior(0.8, 0.3)
    tail, _ = quad(lambda a: math.exp(pc_ar1_logdensity(a, prior)), 0.8, 1.0, limit=300)
    assert tail == pytest.approx(0.3, abs=QUAD_TOL)


def test_ar1_prior_integrates_to_one():
    prior = PcAr1Prior(0.8, 0.3)
    total, _ = quad(lambda a: math.exp(pc_ar1_logdensity(a, prior)), -1.0, 1.0, limit=300)
    assert total == pytest.approx(1.0, abs=QUAD_TOL)


def test_ar1_rate_root_is_unique_and_bracketed():
    """The tail probability is strictly monotone in the rate, so the solved
    rate is the unique root; for the default configuration it is negative
    (a tail this small is unreachable with a nonnegative rate, whose
    infimum tail is sqrt((1 - u)/2) ~ 0.3162)."""
    prior = PcAr1Prior(0.8, 0.3)
    d0 = math.sqrt(1.0 - prior.u)
    grid = np.linspace(-5.0, 5.0, 101)
    tails = [_ar1_cdf_below(d0, lam) for lam in grid]
    assert all(b > a for a, b in zip(tails, tails[1:]))  # strictly increasing
    assert _ar1_cdf_below(d0, prior.rate) == pytest.approx(0.3, abs=1e-10)
    assert prior.rate < 0
    assert math.sqrt((1 - prior.u) / 2) > prior.alpha
    # a configuration with alpha above the infimum solves to a positive rate
    wide = PcAr1Prior(0.0, 0.9)
    assert wide.rate > 0
    tail, _ = quad(lambda a: math.exp(pc_ar1_logdensity(a, wide)), 0.0, 1.0, limit=300)
    assert tail == pytest.approx(0.9, abs=QUAD_TOL)


def test_ar1_quantile_inverts_the_cdf():
    prior = PcAr1Prior(0.8, 0.3)
    med = pc_ar1_quantile(0.5, prior)
    below, _ = quad(lambda a: math.exp(pc_ar1_logdensity(a, prior)), -1.0, med, limit=300)
    assert below == pytest.approx(0.5, abs=1e-5)


def test_ar1_rejects_out_of_range():
    with pytest.raises(DataError):
        pc_ar1_logdensity(1.0, PcAr1Prior(0.8, 0.3))


def test_coef_logprior_mode_and_symmetry():
    sd = 1000.0
    zeros = coef_logprior(np.zeros(4), sd)
    beta = np.array([1.0, -2.0, 0.5, 3.0])
    assert zeros > coef_logprior(beta, sd)
    assert coef_logprior(beta, sd) == coef_logprior(-beta, sd)


def test_coef_logprior_matches_hand_gaussian():
    sd = 3.0
    x = 1.7
    expected = -0.5 * math.log(2 * math.pi) - math.log(sd) - 0.5 * x**2 / sd**2
    assert coef_logprior(np.array([x]), sd) == pytest.approx(expected, rel=1e-12)


def test_interior_log_densities_are_finite():
    cfg = PriorConfig()
    for sigma in (1e-6, 0.1, 1.0, 30.0):
        assert math.isfinite(pc_sd_logdensity(sigma, cfg.sd_eps))
    for r, s in ((0.5, 0.01), (50.0, 0.5), (500.0, 3.0)):
        assert math.isfinite(pc_matern_joint_logdensity(r, s, cfg.matern))
    for a in (-0.999, -0.5, 0.0, 0.5, 0.999):
        assert math.isfinite(pc_ar1_logdensity(a, cfg.ar1))


def test_hyper_logprior_is_sum_of_the_four_terms():
    cfg = PriorConfig()
    total = hyper_logprior(0.5, 80.0, 0.2, 0.15, 0.4, cfg)
    parts = (
        pc_sd_logdensity(0.2, cfg.sd_eps)
        + pc_sd_logdensity(0.15, cfg.sd_v)
        + pc_matern_joint_logdensity(80.0, 0.4, cfg.matern)
        + pc_ar1_logdensity(0.5, cfg.ar1)
    )
    assert total == pytest.approx(parts, rel=1e-14)


def test_invalid_prior_parameters_rejected():
    with pytest.raises(DataError):
        PcSdPrior(0.0, 0.1)
    with pytest.raises(DataError):
        PcSdPrior(1.0, 1.0)
    with pytest.raises(DataError):
        PcAr1Prior(1.5, 0.3)
    with pytest.raises(DataError):
        PcMaternJointPrior(150.0, 0.8, 1.0, 0.0)
