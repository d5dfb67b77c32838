import math

import numpy as np
import pytest
from scipy import stats

from dynsurv import ChainConfig, ModelPriors, PosteriorDraws, PriorConfig, posterior_predictive, run_chain, run_chains
from dynsurv.engine import Sampler, sample_piecewise_times
from dynsurv.errors import ConfigError, DomainError, NumericalError

FAST = ChainConfig(iterations=60, burn_in=20, thin=2, seed=3)


def constant_draws(rates, points, n_draws=4000):
    """Intercept-only draws whose log hazards are fixed at ``log(rates)``."""
    beta = np.zeros((n_draws, len(rates) + 1, 1))
    beta[:, 1:, 0] = np.log(rates)
    meta = {"points": list(points), "families": {}}
    return PosteriorDraws({"beta": beta}, np.arange(1, n_draws + 1), meta, {})


def test_retained_count_and_keep_rule():
    cfg = ChainConfig(iterations=100_000, burn_in=20_000, thin=20)
    assert cfg.retained == 4000
    kept = [it for it in range(100) if ChainConfig(iterations=100, burn_in=40, thin=20).keeps(it)]
    assert kept == [59, 79, 99]


@pytest.mark.parametrize("kwargs", [
    dict(iterations=0), dict(iterations=10, burn_in=10), dict(thin=0),
    dict(state_sampler="gibbs"), dict(iterations=10, burn_in=5, thin=6),
])
def test_chain_config_rejects(kwargs):
    with pytest.raises(ConfigError):
        ChainConfig(**kwargs)


def test_same_seed_is_bit_identical(grouped_data):
    ds, g = grouped_data
    a = run_chain(ds, g, config=FAST)
    b = run_chain(ds, g, config=FAST)
    assert a.arrays.keys() == b.arrays.keys()
    for name in a.arrays:
        assert np.array_equal(a.arrays[name], b.arrays[name]), name
    c = run_chain(ds, g, config=FAST, chain_index=1)
    assert not np.array_equal(a.arrays["beta"], c.arrays["beta"])


def test_draw_shapes_and_signs(grouped_data):
    ds, g = grouped_data
    out = run_chain(ds, g, config=FAST)
    s = FAST.retained
    assert out.iterations.tolist() == list(range(22, 61, 2))
    assert out.arrays["beta"].shape == (s, g.n_intervals + 1, 2)
    assert out.arrays["phi"].shape == (s, 3) and out.arrays["f"].shape == (s, g.n_intervals)
    assert np.all(out.arrays["phi"][:, 0] >= 0)
    assert np.all(np.isfinite(out.arrays["loglik"]))


def test_sweep_order_with_factor(grouped_data):
    ds, g = grouped_data
    names = []
    run_chain(ds, g, config=ChainConfig(iterations=2, burn_in=0), trace=names.append)
    one = ["states", "shrinkage", "loadings", "factor", "boosting", "loading_scales", "factor", "sv", "augmentation"]
    assert names == ["augmentation"] + one + one


def test_sweep_order_without_factor(small_data):
    ds, g = small_data
    names = []
    run_chain(ds, g, config=ChainConfig(iterations=1, burn_in=0), trace=names.append)
    assert names == ["augmentation", "states", "shrinkage", "augmentation"]


def test_zero_information_chain_reproduces_ridge_prior(small_data):
    ds, g = small_data
    priors = ModelPriors(theta=PriorConfig(family="ridge"), beta=PriorConfig(family="ridge"))
    out = run_chain(ds, g, priors, ChainConfig(iterations=6000, burn_in=1000, thin=5, seed=9), likelihood=False)
    # ridge global 20: both the means and the roots are N(0, 2/20)
    sd = math.sqrt(0.1)
    for k in range(3):
        assert stats.kstest(out.arrays["beta_mean"][:, k], stats.norm(0, sd).cdf).pvalue > 1e-3
        assert stats.kstest(out.arrays["sqrt_theta"][:, k], stats.norm(0, sd).cdf).pvalue > 1e-3
    # beta_J = mean + root * (sum of J + 1 standard normals)
    j = g.n_intervals
    rng = np.random.default_rng(1)
    z = rng.standard_normal((3, 50_000))
    ref = sd * z[0] + sd * z[1] * math.sqrt(j + 1) * z[2]
    assert stats.ks_2samp(out.arrays["beta"][:, j, 1], ref).pvalue > 1e-3


def test_one_sweep_from_prior_keeps_prior_with_factor(grouped_data):
    ds, g = grouped_data
    priors = ModelPriors(phi=PriorConfig(family="triple"))
    sampler = Sampler(ds, g, priors, ChainConfig(iterations=1, burn_in=0), np.random.default_rng(7),
                      likelihood=False)
    before, after = [], []
    for _ in range(3000):
        sampler.draw_from_prior()
        before.append(sampler.snapshot())
        sampler.augment()
        sampler.update_parameters()
        after.append(sampler.snapshot())
    for name, idx in (("beta_mean", 0), ("sqrt_theta", 1), ("phi", 2), ("f", 1), ("h", 2)):
        x = np.array([s[name][idx] for s in before])
        y = np.array([s[name][idx] for s in after])
        assert stats.ks_2samp(x, y).pvalue > 1e-3, name
    for name in ("phi_f", "sigma2_f"):
        x = np.array([s[name] for s in before])
        y = np.array([s[name] for s in after])
        assert stats.ks_2samp(x, y).pvalue > 1e-3, name


def test_update_requires_augmentation(small_data):
    ds, g = small_data
    s = Sampler(ds, g, ModelPriors(), ChainConfig(iterations=1, burn_in=0), np.random.default_rng(0))
    with pytest.raises(DomainError):
        s.update_parameters()


def test_numerical_error_names_module_and_iteration(small_data, monkeypatch):
    ds, g = small_data
    import dynsurv.engine as engine

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("matrix is not positive definite")

    monkeypatch.setattr(engine, "draw_states_and_statics", broken)
    with pytest.raises(NumericalError) as info:
        run_chain(ds, g, config=ChainConfig(iterations=5, burn_in=0))
    assert info.value.module == "states" and info.value.iteration == 1


def test_run_chains_matches_single_chains(small_data):
    ds, g = small_data
    cfg = ChainConfig(iterations=20, burn_in=5, seed=4, chains=2)
    pooled = run_chains(ds, g, config=cfg, workers=2)
    serial = [run_chain(ds, g, config=cfg, chain_index=i) for i in range(2)]
    for a, b in zip(pooled, serial):
        assert np.array_equal(a.arrays["beta"], b.arrays["beta"])
    assert [d.meta["seed"] for d in pooled] == [4, 5]


def test_piecewise_times_examples():
    rng = np.random.default_rng(0)
    n = 200_000
    t = sample_piecewise_times(np.ones((n, 2)), np.array([0.0, 1.0, 2.0]), rng)
    assert abs(np.median(t) - math.log(2)) < 0.01
    doubled = sample_piecewise_times(np.full((n, 2), 2.0), np.array([0.0, 1.0, 2.0]), rng)
    assert stats.ks_2samp(2 * doubled, t).pvalue > 1e-3
    # the last hazard continues past the grid
    assert stats.kstest(t, stats.expon().cdf).pvalue > 1e-3


def test_predictive_survival_with_rates_one_then_three():
    draws = constant_draws([1.0, 3.0], [0.0, 1.0, 2.0], 200_000)
    t = posterior_predictive(draws, np.zeros(0), np.random.default_rng(1))
    p = math.exp(-4.0)
    assert abs(np.mean(t > 2.0) - p) < 3 * math.sqrt(p * (1 - p) / t.size)


def test_predictive_medians_are_monotone_in_a_positive_effect():
    n = 4000
    beta = np.zeros((n, 3, 2))
    rng = np.random.default_rng(2)
    beta[:, 1:, 1] = rng.uniform(0.2, 0.8, (n, 1))
    draws = PosteriorDraws({"beta": beta}, np.arange(n), {"points": [0.0, 1.0, 3.0], "families": {}}, {})
    medians = [np.median(posterior_predictive(draws, np.array([x]), np.random.default_rng(5)))
               for x in (-1.0, 0.0, 1.0, 2.0)]
    assert np.all(np.diff(medians) < 0)


def test_predictive_with_factor_and_unseen_group(grouped_data):
    ds, g = grouped_data
    out = run_chain(ds, g, config=FAST)
    seen = posterior_predictive(out, np.array([0.5]), np.random.default_rng(0), group=1)
    unseen = posterior_predictive(out, np.array([0.5]), np.random.default_rng(0), group=None)
    assert seen.shape == unseen.shape == (FAST.retained,)
    assert np.all(seen > 0) and np.all(unseen > 0)
    with pytest.raises(DomainError):
        posterior_predictive(out, np.array([0.5, 1.0]), np.random.default_rng(0))
    with pytest.raises(DomainError):
        posterior_predictive(out, np.array([np.nan]), np.random.default_rng(0))
