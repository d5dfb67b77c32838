import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from dynsurv.errors import DomainError
from dynsurv.kernels import (
    GUMBEL_MIXTURE,
    LOG_CHISQ_MIXTURE,
    gig_logkernel,
    gig_mean,
    log_f_scaled_density,
    log_f_scaled_density_at_log,
    sample_categorical_log,
    sample_f_scaled,
    sample_gig,
    sample_scaled_beta,
)


def test_gumbel_mixture_cdf_close_to_gumbel():
    x = np.linspace(-10.0, 5.0, 10_000)
    exact = np.exp(-np.exp(-x))
    assert np.max(np.abs(GUMBEL_MIXTURE.cdf(x) - exact)) < 0.01


def test_mixture_densities_integrate_to_one():
    for table in (GUMBEL_MIXTURE, LOG_CHISQ_MIXTURE):
        total, _ = integrate.quad(lambda t: math.exp(table.logpdf(t)), -60, 60, limit=400)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_log_chisq_mixture_tracks_log_chisq():
    x = np.linspace(-20.0, 4.0, 5000)
    exact = stats.chi2(1).cdf(np.exp(x))
    assert np.max(np.abs(LOG_CHISQ_MIXTURE.cdf(x) - exact)) < 0.01


def test_mixture_checksum_is_stable():
    assert GUMBEL_MIXTURE.checksum() == GUMBEL_MIXTURE.checksum()
    assert GUMBEL_MIXTURE.checksum() != LOG_CHISQ_MIXTURE.checksum()
    assert GUMBEL_MIXTURE.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_categorical_frequencies(rng):
    w = np.array([0.1, 0.2, 0.3, 0.4])
    draws = sample_categorical_log(np.tile(np.log(w), (40_000, 1)), rng)
    counts = np.bincount(draws, minlength=4)
    assert stats.chisquare(counts, 40_000 * w).pvalue > 1e-3


def test_categorical_handles_minus_inf_and_rejects_empty_rows(rng):
    lw = np.array([[-np.inf, 0.0, -np.inf]] * 100)
    assert np.all(sample_categorical_log(lw, rng) == 1)
    with pytest.raises(DomainError):
        sample_categorical_log(np.full((2, 3), -np.inf), rng)


GIG_CASES = [
    (-5.0, 2.0, 0.5),
    (-0.5, 1.0, 1.0),
    (0.05, 0.01, 0.02),   # non-T-concave region
    (0.4, 3.0, 1e-4),
    (3.0, 0.5, 7.0),
    (-10.5, 0.05, 40.0),
    (-0.4, 2e-3, 5.0),
]


def _gig_cdf(p, a, b):
    omega, scale = math.sqrt(a * b), math.sqrt(b / a)
    return stats.geninvgauss(p, omega, scale=scale).cdf


@pytest.mark.parametrize("p,a,b", GIG_CASES)
def test_gig_matches_reference_distribution(p, a, b):
    rng = np.random.default_rng(7)
    x = sample_gig(p, a, b, rng, size=20_000)
    assert np.all(x > 0)
    assert stats.kstest(x, _gig_cdf(p, a, b)).pvalue > 1e-3


def test_gig_cdf_by_quadrature_of_kernel():
    # independent of the scipy parametrization: integrate the kernel directly
    p, a, b = -1.3, 0.7, 2.2
    rng = np.random.default_rng(3)
    x = sample_gig(p, a, b, rng, size=20_000)
    log_norm = math.log(integrate.quad(lambda t: math.exp(gig_logkernel(t, p, a, b)), 0, np.inf)[0])

    def cdf(t):
        t = np.atleast_1d(t)
        grid = np.concatenate([[0.0], np.sort(t)])
        parts = [integrate.quad(lambda u: math.exp(gig_logkernel(u, p, a, b) - log_norm), lo, hi)[0]
                 if hi > lo else 0.0 for lo, hi in zip(grid[:-1], grid[1:])]
        out = np.cumsum(parts)
        return out[np.argsort(np.argsort(t))]

    sub = x[:2000]
    assert stats.kstest(sub, cdf).pvalue > 1e-3


@pytest.mark.parametrize("p,a,b", [(0.3, 1.0, 1e-14), (-3.0, 4e-13, 1.0)])
def test_gig_tiny_omega_matches_reference(p, a, b):
    rng = np.random.default_rng(8)
    x = sample_gig(p, a, b, rng, size=20_000)
    assert stats.kstest(x, _gig_cdf(p, a, b)).pvalue > 1e-3


@pytest.mark.parametrize("a,b", [(1e-100, 1e-120), (2e-6, 5e-7)])
def test_gig_small_omega_large_lambda_is_gamma(a, b):
    # with lambda = 52 the 1/x term moves the density by about omega^2 / 200
    rng = np.random.default_rng(9)
    x = sample_gig(-52.0, a, b, rng, size=20_000)
    assert np.all(np.isfinite(x)) and np.all(x > 0)
    assert stats.kstest(1.0 / x, stats.gamma(52.0, scale=2.0 / b).cdf).pvalue > 1e-3


def test_gig_limits_are_gamma_and_inverse_gamma(rng):
    g = sample_gig(2.0, 3.0, 0.0, rng, size=20_000)
    assert stats.kstest(g, stats.gamma(2.0, scale=2.0 / 3.0).cdf).pvalue > 1e-3
    ig = sample_gig(-1.5, 0.0, 4.0, rng, size=20_000)
    assert stats.kstest(ig, stats.invgamma(1.5, scale=2.0).cdf).pvalue > 1e-3


def test_gig_mean_agrees_with_quadrature():
    p, a, b = 0.3, 1.2, 0.8
    num = integrate.quad(lambda t: t * math.exp(gig_logkernel(t, p, a, b)), 0, np.inf)[0]
    den = integrate.quad(lambda t: math.exp(gig_logkernel(t, p, a, b)), 0, np.inf)[0]
    assert gig_mean(p, a, b) == pytest.approx(num / den, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(
    p=st.floats(-4, 4),
    a=st.floats(0.05, 20),
    b=st.floats(0.05, 20),
    c=st.floats(0.1, 10),
)
def test_gig_scale_equivariance(p, a, b, c):
    # c X ~ GIG(p, a / c, b c); same stream gives proportional draws only in
    # distribution, so compare sample means against the closed form
    rng = np.random.default_rng(11)
    x = sample_gig(p, a / c, b * c, rng, size=4000)
    mean = c * gig_mean(p, a, b)
    sd = c * math.sqrt(max(
        gig_mean(p + 2, a, b) * gig_mean(p + 1, a, b) - gig_mean(p, a, b) ** 2, 1e-300))
    assert abs(x.mean() - mean) < 5 * sd / math.sqrt(4000)


@pytest.mark.parametrize("p,a,b", [(1.0, 0.0, 0.0), (-1.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, -1.0, 1.0),
                                   (math.nan, 1.0, 1.0)])
def test_gig_rejects_non_normalizable(p, a, b, rng):
    with pytest.raises(DomainError):
        sample_gig(p, a, b, rng)


def test_gig_is_deterministic_given_seed():
    a = sample_gig(0.2, 0.3, 0.4, np.random.default_rng(5), size=50)
    b = sample_gig(0.2, 0.3, 0.4, np.random.default_rng(5), size=50)
    assert np.array_equal(a, b)


def test_f_scaled_density_integrates_and_matches_sampler(rng):
    a, c = 0.3, 0.4
    total = integrate.quad(lambda k: math.exp(log_f_scaled_density(k, a, c)), 0, np.inf, limit=400)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    x = sample_f_scaled(a, c, rng, size=20_000)
    ref = stats.f(2 * a, 2 * c, scale=2.0)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_scaled_beta_moments(rng):
    x = sample_scaled_beta(5.0, 5.0, rng, size=50_000)
    assert x.max() < 0.5
    assert x.mean() == pytest.approx(0.25, abs=0.002)
    assert x.var() == pytest.approx(0.25 * 25 / (100 * 11), rel=0.05)


@pytest.mark.parametrize("p", [1e-100, 2.5e-234, 5e-324])
def test_gig_subnormal_lambda_matches_zero(p):
    # lambda this small is zero to double precision; compare with the p = 0 law
    x = sample_gig(p, 0.25, 0.125, np.random.default_rng(4), size=20_000)
    ref = stats.geninvgauss(0.0, math.sqrt(0.25 * 0.125), scale=math.sqrt(0.5))
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_f_density_from_log_handles_products_below_float_range():
    a, c = 0.2, 0.3
    assert log_f_scaled_density_at_log(math.log(3.0), a, c) == pytest.approx(log_f_scaled_density(3.0, a, c), rel=1e-13)
    # kappa = 1e-300 * 1e-300 is zero in floating point but not in logs
    lk = 2 * math.log(1e-300)
    expect = log_f_scaled_density(1e-300, a, c) + (a - 1.0) * math.log(1e-300)
    assert log_f_scaled_density_at_log(lk, a, c) == pytest.approx(expect, rel=1e-12)
