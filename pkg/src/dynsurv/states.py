"""Sampling of time-varying coefficient paths and their static parameters.

The random walk ``beta_j = beta_{j-1} + w_j, w_j ~ N(0, diag(theta))`` with
``beta_0 ~ N(beta_mean, diag(theta))`` is handled in its non-centered form
``beta_kj = beta_mean_k + sqrt_theta_k * std_kj`` where the standardized paths
follow a unit random walk started from N(0, 1).  ``sqrt_theta`` is a signed,
real-valued regression coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy import linalg

from .data import RiskSetLayout
from .errors import NumericalError
from .kernels import sample_gig

# smallest innovation variance the centered step hands back; below it theta underflows
THETA_FLOOR = 1e-300

PSD_TOL = 1e-8


@dataclass
class StateBlock:
    """Current values of the coefficient paths and their statics.

    ``std_paths`` has shape ``(J + 1, P)``; row 0 is the initial state.
    """

    beta_mean: np.ndarray
    sqrt_theta: np.ndarray
    std_paths: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.sqrt_theta ** 2

    @property
    def paths(self) -> np.ndarray:
        return self.beta_mean + self.sqrt_theta * self.std_paths

    def copy(self) -> "StateBlock":
        return StateBlock(self.beta_mean.copy(), self.sqrt_theta.copy(), self.std_paths.copy())


# --- sufficient statistics per interval ---------------------------------------------


def interval_crossprods(
    layout: RiskSetLayout, y: np.ndarray, v: np.ndarray, design: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """``H_j = Z_j' V_j^-1 Z_j`` and ``b_j = Z_j' V_j^-1 y_j`` for every interval."""
    z = layout.design if design is None else design
    p = z.shape[1]
    n_int = layout.n_intervals
    h = np.zeros((n_int, p, p))
    b = np.zeros((n_int, p))
    zw = z * (1.0 / v)[:, None]
    off = layout.offsets
    for j in range(n_int):
        lo, hi = off[j], off[j + 1]
        if hi > lo:
            zj = zw[lo:hi].T
            h[j] = zj @ z[lo:hi]
            b[j] = zj @ y[lo:hi]
    return h, b


def blocks_to_crossprods(x_blocks, z_blocks, v_blocks) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(z_blocks[0]).shape[1]
    h = np.zeros((len(x_blocks), p, p))
    b = np.zeros((len(x_blocks), p))
    for j, (x, z, v) in enumerate(zip(x_blocks, z_blocks, v_blocks)):
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            continue
        z = np.asarray(z, dtype=float).reshape(x.size, p)
        zw = z.T / np.asarray(v, dtype=float)
        h[j] = zw @ z
        b[j] = zw @ x
    return h, b


# --- covariance-form forward filtering, backward sampling ----------------------------


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _draw_mvn_psd(mean: np.ndarray, cov: np.ndarray, rng: Generator, where: int) -> np.ndarray:
    cov = _sym(cov)
    try:
        chol = np.linalg.cholesky(cov)
        return mean + chol @ rng.standard_normal(mean.size)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -PSD_TOL * scale:
        raise NumericalError(
            f"smoothing covariance not positive semi-definite at interval {where} "
            f"(min eigenvalue {vals.min():.3g})",
            module="states",
        )
    vals = np.clip(vals, 0.0, None)
    return mean + vecs @ (np.sqrt(vals) * rng.standard_normal(mean.size))


def ffbs_crossprods(
    h: np.ndarray,
    b: np.ndarray,
    q_diag: np.ndarray,
    m0: np.ndarray,
    p0: np.ndarray,
    rng: Generator,
) -> np.ndarray:
    """FFBS from per-interval sufficient statistics.

    ``h[j-1]``, ``b[j-1]`` summarize the observations of interval ``j``
    (``j = 1..J``); an all-zero block is a pure prediction step.  Returns a
    ``(J + 1, P)`` draw of the states ``beta_0..beta_J``.
    """
    n_int, p = b.shape
    q = np.diag(np.asarray(q_diag, dtype=float))
    eye = np.eye(p)
    means = np.empty((n_int + 1, p))
    covs = np.empty((n_int + 1, p, p))
    means[0] = m0
    covs[0] = _sym(np.atleast_2d(p0).astype(float))
    m, cov = means[0], covs[0]
    for j in range(n_int):
        pred = _sym(cov + q)
        a = eye + pred @ h[j]
        m = np.linalg.solve(a, m + pred @ b[j])
        cov = _sym(np.linalg.solve(a, pred))
        vals = np.linalg.eigvalsh(cov)
        if vals.min() < -PSD_TOL * max(1.0, vals.max()) or not np.all(np.isfinite(vals)):
            raise NumericalError(f"filter covariance lost positive definiteness at interval {j + 1}",
                                 module="states")
        means[j + 1] = m
        covs[j + 1] = cov

    draw = np.empty((n_int + 1, p))
    draw[n_int] = _draw_mvn_psd(means[n_int], covs[n_int], rng, n_int)
    for j in range(n_int - 1, -1, -1):
        cj = covs[j]
        pred = _sym(cj + q)
        gain = linalg.lstsq(pred, cj, cond=1e-12)[0].T  # cj @ pred^-1
        mean = means[j] + gain @ (draw[j + 1] - means[j])
        cov = cj - gain @ cj
        draw[j] = _draw_mvn_psd(mean, cov, rng, j)
    return draw


def ffbs(x_blocks, z_blocks, v_blocks, q_diag, m0, p0, rng: Generator) -> np.ndarray:
    """Joint draw of ``beta_0..beta_J`` in ``x_j = Z_j beta_j + e_j``, ``e_j ~ N(0, diag(V_j))``.

    Blocks are per interval ``j = 1..J``; empty blocks are allowed.
    """
    h, b = blocks_to_crossprods(x_blocks, z_blocks, v_blocks)
    return ffbs_crossprods(h, b, q_diag, np.asarray(m0, float), np.asarray(p0, float), rng)


# --- joint sampling from the banded precision ------------------------------------


def _banded_lower(h: np.ndarray, q_inv: np.ndarray, p0_inv: np.ndarray) -> np.ndarray:
    """Lower banded storage of the joint precision of ``(beta_0..beta_J)``."""
    n_int, p, _ = h.shape
    n = (n_int + 1) * p
    # off-diagonal blocks are diagonal, so the lower bandwidth is p
    ab = np.zeros((p + 1, n))
    diag_blocks = np.empty((n_int + 1, p, p))
    diag_blocks[0] = p0_inv + np.diag(q_inv)
    diag_blocks[1:] = h + 2.0 * np.diag(q_inv)
    diag_blocks[n_int] -= np.diag(q_inv)
    # within-block lower triangle
    for r in range(p):
        for c in range(r + 1):
            ab[r - c, c::p][: n_int + 1] = diag_blocks[:, r, c]
    # off-diagonal block (j+1, j) = -diag(q_inv): element (p*(j+1)+k, p*j+k)
    ab[p, : n - p] = np.tile(-q_inv, n_int)
    return ab


def sample_banded_gaussian(ab: np.ndarray, rhs: np.ndarray, rng: Generator, module: str = "states") -> np.ndarray:
    """Draw from ``N(Q^-1 rhs, Q^-1)`` with ``Q`` given in lower banded storage."""
    try:
        chol = linalg.cholesky_banded(ab, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"precision matrix not positive definite: {exc}", module=module) from None
    mean = linalg.cho_solve_banded((chol, True), rhs, check_finite=False)
    # L^T in upper banded storage for the back-substitution
    bw = chol.shape[0] - 1
    n = chol.shape[1]
    upper = np.zeros_like(chol)
    for d in range(bw + 1):
        upper[bw - d, d:] = chol[d, : n - d]
    noise = linalg.solve_banded((0, bw), upper, rng.standard_normal(n), check_finite=False)
    return mean + noise


def sample_rw_precision(
    h: np.ndarray,
    b: np.ndarray,
    q_diag: np.ndarray,
    p0_diag: np.ndarray,
    rng: Generator,
) -> np.ndarray:
    """Joint draw of a diagonal-variance random walk started at ``N(0, diag(p0))``.

    Same target as :func:`ffbs_crossprods` with zero prior mean, but in one
    banded Cholesky factorization of the ``(J+1)P`` precision matrix.
    Requires strictly positive ``q_diag`` and ``p0_diag``.
    """
    n_int, p = b.shape
    q_inv = 1.0 / np.asarray(q_diag, dtype=float)
    p0_inv = np.diag(1.0 / np.asarray(p0_diag, dtype=float))
    ab = _banded_lower(h, q_inv, p0_inv)
    rhs = np.concatenate([np.zeros(p), b.ravel()])
    draw = sample_banded_gaussian(ab, rhs, rng, module="states")
    return draw.reshape(n_int + 1, p)


# --- non-centered paths, statics and interweaving ----------------------------------


def sample_std_paths(
    layout: RiskSetLayout,
    y: np.ndarray,
    v: np.ndarray,
    sqrt_theta: np.ndarray,
    rng: Generator,
    method: str = "precision",
) -> np.ndarray:
    """Standardized paths given ``y = x - offset - Z beta_mean``."""
    h, b = interval_crossprods(layout, y, v)
    s = np.asarray(sqrt_theta, dtype=float)
    h = h * s[None, :, None] * s[None, None, :]
    b = b * s[None, :]
    p = s.size
    if method == "precision":
        return sample_rw_precision(h, b, np.ones(p), np.ones(p), rng)
    if method == "ffbs":
        return ffbs_crossprods(h, b, np.ones(p), np.zeros(p), np.eye(p), rng)
    raise ValueError(f"unknown state sampler {method!r}")


def sample_statics(
    layout: RiskSetLayout,
    y: np.ndarray,
    v: np.ndarray,
    std_paths: np.ndarray,
    tau2: np.ndarray,
    xi2: np.ndarray,
    rng: Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint Gaussian draw of ``(beta_mean, sqrt_theta)``.

    ``y`` excludes any offset; the regression design is ``[Z, Z * std_path]``
    with independent ``N(0, tau2)`` and ``N(0, xi2)`` priors.
    """
    z = layout.design
    p = z.shape[1]
    w = np.hstack([z, z * std_paths[layout.interval + 1]])
    ww = w * (1.0 / v)[:, None]
    prec = w.T @ ww
    prec[np.diag_indices(2 * p)] += 1.0 / np.concatenate([tau2, xi2])
    rhs = ww.T @ y
    try:
        chol = linalg.cholesky(prec, lower=True)
    except linalg.LinAlgError:
        raise NumericalError("statics precision is singular", module="states") from None
    mean = linalg.cho_solve((chol, True), rhs)
    draw = mean + linalg.solve_triangular(chol.T, rng.standard_normal(2 * p), lower=False)
    return draw[:p], draw[p:]


def interweave_step(
    beta_mean: np.ndarray,
    paths: np.ndarray,
    tau2: np.ndarray,
    xi2: np.ndarray,
    rng: Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centered-parametrization update used for ancillarity-sufficiency interweaving.

    ``theta_k | paths, beta_mean_k ~ GIG(-J/2, 1/xi2_k, S_k)`` with
    ``S_k = (beta_k0 - beta_mean_k)^2 + sum_j (beta_kj - beta_k,j-1)^2``, then
    ``beta_mean_k | beta_k0, theta_k`` from its normal conditional.
    """
    n_int = paths.shape[0] - 1
    p = paths.shape[1]
    new_mean = np.empty(p)
    new_root = np.empty(p)
    for k in range(p):
        ss = float(np.sum(np.diff(paths[:, k]) ** 2) + (paths[0, k] - beta_mean[k]) ** 2)
        theta = max(sample_gig(-0.5 * n_int, 1.0 / xi2[k], max(ss, 1e-300), rng), THETA_FLOOR)
        var = 1.0 / (1.0 / tau2[k] + 1.0 / theta)
        new_mean[k] = var * paths[0, k] / theta + np.sqrt(var) * rng.standard_normal()
        sign = 1.0 if rng.random() < 0.5 else -1.0
        new_root[k] = sign * np.sqrt(theta)
    std = (paths - new_mean) / new_root
    return new_mean, new_root, std


def draw_states_and_statics(
    layout: RiskSetLayout,
    x: np.ndarray,
    v: np.ndarray,
    state: StateBlock,
    tau2: np.ndarray,
    xi2: np.ndarray,
    rng: Generator,
    offset: np.ndarray | None = None,
    method: str = "precision",
    interweaving: bool = True,
) -> StateBlock:
    """One complete update of paths, means and signed innovation roots."""
    y = x if offset is None else x - offset
    fitted_mean = layout.design @ state.beta_mean
    std = sample_std_paths(layout, y - fitted_mean, v, state.sqrt_theta, rng, method=method)
    beta_mean, sqrt_theta = sample_statics(layout, y, v, std, tau2, xi2, rng)
    if interweaving:
        paths = beta_mean + sqrt_theta * std
        beta_mean, sqrt_theta, std = interweave_step(beta_mean, paths, tau2, xi2, rng)
    out = StateBlock(beta_mean, sqrt_theta, std)
    if not (np.all(np.isfinite(out.std_paths)) and np.all(np.isfinite(out.beta_mean))
            and np.all(np.isfinite(out.sqrt_theta))):
        raise NumericalError("non-finite coefficient paths", module="states")
    return out
