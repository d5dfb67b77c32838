import numpy as np
import pytest

from dynsurv import SurvivalDataset, compute_exposures
from dynsurv.engine import sample_piecewise_times


def simulate_piecewise(rng, n, points, log_hazard, covariates=None, censor=None, group=None):
    """Survival data from a piecewise-constant hazard.

    ``log_hazard`` is ``(N, J)``; times beyond the last point (or past
    ``censor``) are censored there.
    """
    points = np.asarray(points, dtype=float)
    t = sample_piecewise_times(np.exp(log_hazard), points, rng)
    end = points[-1] if censor is None else np.minimum(censor, points[-1])
    d = (t <= end).astype(int)
    y = np.minimum(t, end)
    z = np.zeros((n, 0)) if covariates is None else covariates
    return SurvivalDataset(y, d, z, group=group)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_data(rng):
    n, pts = 40, np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    z = rng.standard_normal((n, 2))
    eta = np.full((n, 4), -0.3) + z @ np.array([0.4, -0.2])[:, None]
    ds = simulate_piecewise(rng, n, pts, eta, covariates=z)
    return ds, compute_exposures(ds, pts)


@pytest.fixture
def grouped_data(rng):
    n, pts = 60, np.array([0.0, 0.4, 0.8, 1.2, 2.0])
    z = rng.standard_normal((n, 1))
    grp = np.arange(n) % 3
    eta = np.full((n, 4), -0.2) + 0.3 * z
    ds = simulate_piecewise(rng, n, pts, eta, covariates=z, group=grp)
    return ds, compute_exposures(ds, pts)
