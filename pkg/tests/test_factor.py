import math

import numpy as np
import pytest
from scipy import stats

from dynsurv.factor import (
    FactorBlock,
    SVPrior,
    SVState,
    boosting_conditional,
    boosting_index,
    boosting_step,
    draw_sv_prior,
    identify_signs,
    sample_factor,
    sample_loadings,
    sample_sv,
)


def transformed_log_density(u, loadings, factor, logvol, prior_var):
    """Log density of phi_m^2 = u from the joint prior of (phi, f) and the Jacobian.

    Keeping phi* and f* fixed, phi_g = phi*_g sqrt(u) and f_j = f*_j / sqrt(u);
    the map (phi_m, phi*, f*) -> (phi, f) has Jacobian phi_m^(G-1-J) and
    d phi_m / du = 1 / (2 sqrt(u)).
    """
    m = int(np.argmax(np.abs(loadings)))
    star = loadings / loadings[m]
    f_star = factor * loadings[m]
    r = math.sqrt(u)
    phi = star * r
    f = f_star / r
    g, j = loadings.size, factor.size
    out = float(np.sum(stats.norm.logpdf(phi, 0.0, np.sqrt(prior_var))))
    out += float(np.sum(stats.norm.logpdf(f, 0.0, np.exp(0.5 * logvol))))
    out += (g - 1 - j) * math.log(r) - math.log(2.0 * r)
    return out


def test_loadings_conjugate_example():
    rng = np.random.default_rng(0)
    draws = np.array([sample_loadings(np.array([2.0]), np.array([1.0]), np.array([1.0]), np.array([0]),
                                      np.array([1.0]), rng)[0] for _ in range(40_000)])
    assert draws.mean() == pytest.approx(1.0, abs=4 * math.sqrt(0.5 / 40_000))
    assert draws.var() == pytest.approx(0.5, rel=0.03)


def test_loadings_without_information_follow_prior():
    rng = np.random.default_rng(0)
    # group 1 has only f = 0 rows, group 2 has no rows
    resid = rng.standard_normal(6)
    f = np.array([0.3, -1.0, 0.0, 0.0, 0.0, 0.7])
    group = np.array([0, 0, 1, 1, 1, 0])
    draws = np.array([sample_loadings(resid, np.ones(6), f, group, np.array([1.0, 4.0, 9.0]), rng)
                      for _ in range(20_000)])
    assert stats.kstest(draws[:, 1], stats.norm(0, 2).cdf).pvalue > 1e-3
    assert stats.kstest(draws[:, 2], stats.norm(0, 3).cdf).pvalue > 1e-3
    tiny = sample_loadings(resid, np.ones(6), f, group, np.full(3, 1e-14), rng)
    assert np.all(np.abs(tiny) < 1e-5)


def test_factor_conjugate_example():
    rng = np.random.default_rng(1)
    draws = np.array([sample_factor(np.array([0.5]), np.array([1.0]), np.array([1.0]), np.array([0]),
                                    np.array([0.0]), rng)[0] for _ in range(40_000)])
    assert draws.mean() == pytest.approx(0.25, abs=4 * math.sqrt(0.5 / 40_000))
    assert draws.var() == pytest.approx(0.5, rel=0.03)


def test_factor_with_zero_loadings_is_prior_draw(rng):
    h = np.array([0.0, 1.0, -1.0])
    draws = np.array([sample_factor(rng.standard_normal(9), np.ones(9), np.zeros(9), np.repeat(np.arange(3), 3),
                                    h, rng) for _ in range(20_000)])
    for j in range(3):
        assert stats.kstest(draws[:, j], stats.norm(0, math.exp(h[j] / 2)).cdf).pvalue > 1e-3


def test_factor_mean_is_odd_in_residuals():
    resid = np.array([0.4, -1.2, 0.3, 2.0])
    args = (np.ones(4), np.array([0.5, 1.0, -0.3, 0.8]), np.array([0, 0, 1, 1]), np.zeros(2))
    up = sample_factor(resid, *args, np.random.default_rng(3))
    down = sample_factor(-resid, *args, np.random.default_rng(3))
    noise = sample_factor(np.zeros(4), *args, np.random.default_rng(3))
    assert np.allclose(up + down, 2 * noise, atol=1e-14)


def test_boosting_index_and_gig_order():
    assert boosting_index(np.array([0.5, -2.0, 2.0])) == 1
    m, p, a, b = boosting_conditional(np.array([0.1, 0.5, -0.2]), np.ones(5), np.zeros(5), np.ones(3))
    assert m == 1 and p == -1.0


def test_boosting_conditional_matches_transformed_density(rng):
    for _ in range(5):
        g, j = rng.integers(2, 6), rng.integers(2, 8)
        phi = rng.standard_normal(g)
        f = rng.standard_normal(j)
        h = rng.normal(0, 0.5, j)
        var = rng.uniform(0.2, 3.0, g)
        m, p, a, b = boosting_conditional(phi, f, h, var)
        us = np.geomspace(0.05, 20.0, 25)
        direct = np.array([transformed_log_density(u, phi, f, h, var) for u in us])
        closed = (p - 1) * np.log(us) - 0.5 * (a * us + b / us)
        diff = direct - closed
        assert np.ptp(diff) < 1e-8


def test_boosting_preserves_ratios_and_products(rng):
    phi = np.array([0.3, -1.1, 0.6, 0.05])
    f = rng.standard_normal(7)
    new_phi, new_f = boosting_step(phi, f, np.zeros(7), np.ones(4), rng)
    assert np.sign(new_phi[1]) == np.sign(phi[1])
    assert np.allclose(new_phi / new_phi[0], phi / phi[0], rtol=1e-14)
    assert np.allclose(np.outer(new_phi, new_f), np.outer(phi, f), rtol=1e-12)


def test_boosting_skips_all_zero_loadings(rng):
    assert boosting_step(np.zeros(3), np.ones(4), np.zeros(4), np.ones(3), rng) is None


def test_sv_prior_draws(rng):
    prior = SVPrior()
    draws = [draw_sv_prior(prior, 3, rng) for _ in range(20_000)]
    phi = np.array([d.persistence for d in draws])
    var = np.array([d.variance for d in draws])
    h0 = np.array([d.logvol[0] for d in draws])
    assert stats.kstest((phi + 1) / 2, stats.beta(5.0, 1.5).cdf).pvalue > 1e-3
    assert stats.kstest(var, stats.gamma(0.5, scale=2.0).cdf).pvalue > 1e-3
    z = h0 / np.sqrt(var / (1 - phi ** 2))
    assert stats.kstest(z, stats.norm().cdf).pvalue > 1e-3


def test_sv_update_keeps_prior_marginals():
    """One SV sweep from a joint prior draw of (phi_f, sigma2_f, h, f)."""
    rng = np.random.default_rng(5)
    prior = SVPrior()
    phi, var = [], []
    for _ in range(5000):
        sv = draw_sv_prior(prior, 8, rng)
        f = np.exp(0.5 * sv.logvol[1:]) * rng.standard_normal(8)
        sample_sv(f, sv, prior, rng)
        phi.append(sv.persistence)
        var.append(sv.variance)
    assert stats.kstest((np.array(phi) + 1) / 2, stats.beta(5.0, 1.5).cdf).pvalue > 1e-3
    assert stats.kstest(var, stats.gamma(0.5, scale=2.0).cdf).pvalue > 1e-3


def test_sv_recovers_constant_volatility():
    rng = np.random.default_rng(6)
    j = 400
    f = rng.standard_normal(j)
    sv = SVState(logvol=np.full(j + 1, -10.0))
    total = np.zeros(j + 1)
    kept = 0
    for it in range(3000):
        sample_sv(f, sv, SVPrior(), rng)
        if it >= 1000:
            total += sv.logvol
            kept += 1
    mean = total / kept
    assert np.all(np.abs(mean[1:]) < 0.3)
    assert 0 < sv.acceptance_rate <= 1


def test_identify_signs_examples():
    phi, f = identify_signs(np.array([[-1.0, 2.0]]), np.array([[3.0]]))
    assert phi.tolist() == [[1.0, -2.0]] and f.tolist() == [[-3.0]]
    phi_in, f_in = np.array([[0.5, -2.0], [0.0, 1.0]]), np.array([[1.0, 2.0], [3.0, 4.0]])
    phi, f = identify_signs(phi_in, f_in)
    assert np.array_equal(phi, phi_in) and np.array_equal(f, f_in)


def test_identify_signs_keeps_products(rng):
    phi = rng.standard_normal((500, 3))
    f = rng.standard_normal((500, 6))
    new_phi, new_f = identify_signs(phi, f)
    assert np.all(new_phi[:, 0] >= 0)
    before = np.einsum("sg,sj->sgj", phi, f)
    after = np.einsum("sg,sj->sgj", new_phi, new_f)
    assert np.max(np.abs(before - after)) <= 1e-12


def test_factor_block_defaults_and_offset():
    fb = FactorBlock(3, 4)
    assert np.all(fb.loadings == 0) and np.all(fb.factor == 0) and np.all(fb.sv.logvol == -10)
    assert (fb.sv.persistence, fb.sv.variance) == (0.9, 0.1)
    fb.loadings = np.array([1.0, 2.0, 3.0])
    fb.factor = np.array([0.5, 0.0, -1.0, 2.0])
    assert fb.offset(np.array([2, 0]), np.array([3, 0])).tolist() == [6.0, 0.5]
