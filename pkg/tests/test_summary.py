import numpy as np
import pytest

from dynsurv import PosteriorDraws, summarize
from dynsurv.summary import effective_sample_size, split_rhat


def draws(values):
    values = np.asarray(values, dtype=float)
    return PosteriorDraws({"x": values[:, None]}, np.arange(values.shape[0]), {}, {})


def test_constant_chain():
    rows = summarize(draws(np.full(500, 2.5)))
    assert len(rows) == 1
    r = rows[0]
    assert r["ess"] == 500 and r["q2.5"] == r["q97.5"] == 2.5 and r["sd"] == 0.0
    assert np.isnan(r["rhat"])


def test_normal_quantiles(rng):
    r = summarize(draws(rng.standard_normal(200_000)))[0]
    assert r["q2.5"] == pytest.approx(-1.96, abs=0.02)
    assert r["q97.5"] == pytest.approx(1.96, abs=0.02)
    assert r["median"] == pytest.approx(0.0, abs=0.01)
    assert r["index"] == (0,)


def test_ess_of_iid_and_ar1(rng):
    n = 20_000
    iid = rng.standard_normal(n)
    assert 0.85 * n < effective_sample_size(iid) <= n
    rho = 0.9
    ar = np.empty(n)
    ar[0] = rng.standard_normal()
    for t in range(1, n):
        ar[t] = rho * ar[t - 1] + np.sqrt(1 - rho ** 2) * rng.standard_normal()
    # n (1 - rho) / (1 + rho)
    assert effective_sample_size(ar) == pytest.approx(n * 0.1 / 1.9, rel=0.25)


def test_rhat(rng):
    x = rng.standard_normal(4000)
    assert split_rhat([x, x]) <= 1.01
    assert split_rhat([x, x + 3.0]) > 1.5
    assert split_rhat([np.ones(10), np.ones(10)]) == 1.0
    rows = summarize([draws(x), draws(x)])
    assert rows[0]["rhat"] <= 1.01


def test_empty_raises():
    with pytest.raises(ValueError):
        summarize([])
