"""Grouped single latent factor with stochastic volatility.

The linear predictor of an at-risk pair gains ``phi_g f_j`` where ``g`` is
the individual's group.  ``f_j ~ N(0, exp(h_j))`` and the log-volatilities
follow a zero-mean AR(1): ``h_j | h_{j-1} ~ N(phi_f h_{j-1}, sigma2_f)`` with
``h_0 ~ N(0, sigma2_f / (1 - phi_f^2))``.

Loadings and factor are only identified up to a joint sign flip;
:func:`identify_signs` fixes ``phi_1 >= 0`` after sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator

from .errors import DomainError
from .kernels import LOG_CHISQ_MIXTURE, sample_categorical_log, sample_gig
from .shrinkage import PriorConfig, ShrinkageBlock, _log_beta_density
from .states import sample_banded_gaussian

# log(f^2) is undefined at f = 0
LOG_SQUARE_OFFSET = 1e-300


@dataclass(frozen=True)
class SVPrior:
    """``(phi_f + 1) / 2 ~ B(a0, b0)`` and ``sigma2_f ~ G(1/2, 1 / (2 b_sigma))``."""

    a0: float = 5.0
    b0: float = 1.5
    b_sigma: float = 1.0

    def __post_init__(self):
        for name in ("a0", "b0", "b_sigma"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive, got {val}")


@dataclass
class SVState:
    logvol: np.ndarray  # h_0..h_J
    persistence: float = 0.9
    variance: float = 0.1
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


@dataclass
class FactorBlock:
    """Loadings, factor path, log-volatilities and the loading shrinkage."""

    n_groups: int
    n_intervals: int
    loading_prior: PriorConfig = field(default_factory=PriorConfig)
    sv_prior: SVPrior = field(default_factory=SVPrior)
    loadings: np.ndarray = field(default=None)
    factor: np.ndarray = field(default=None)
    sv: SVState = field(default=None)
    scales: ShrinkageBlock = field(default=None)
    boost_skipped: int = 0

    def __post_init__(self):
        if self.n_groups < 1:
            raise DomainError("a factor block needs at least one group")
        if self.loadings is None:
            self.loadings = np.zeros(self.n_groups)
        if self.factor is None:
            self.factor = np.zeros(self.n_intervals)
        if self.sv is None:
            self.sv = SVState(logvol=np.full(self.n_intervals + 1, -10.0))
        if self.scales is None:
            self.scales = ShrinkageBlock(self.loading_prior, self.n_groups)

    def offset(self, group: np.ndarray, interval: np.ndarray) -> np.ndarray:
        """``phi_g f_j`` per at-risk pair."""
        return self.loadings[group] * self.factor[interval]


# --- conjugate regressions ------------------------------------------------------------


def sample_loadings(
    resid: np.ndarray,
    v: np.ndarray,
    f_pairs: np.ndarray,
    group: np.ndarray,
    prior_var: np.ndarray,
    rng: Generator,
) -> np.ndarray:
    """Per-group conjugate normal draw of the loadings.

    Precision ``sum f^2 / V + 1 / prior_var``, mean ``sum resid f / V`` over
    precision.  A group without rows is drawn from its prior.
    """
    n_groups = prior_var.size
    w = f_pairs / v
    prec = np.bincount(group, weights=f_pairs * w, minlength=n_groups) + 1.0 / prior_var
    lin = np.bincount(group, weights=resid * w, minlength=n_groups)
    var = 1.0 / prec
    return var * lin + np.sqrt(var) * rng.standard_normal(n_groups)


def sample_factor(
    resid: np.ndarray,
    v: np.ndarray,
    phi_pairs: np.ndarray,
    interval: np.ndarray,
    logvol: np.ndarray,
    rng: Generator,
) -> np.ndarray:
    """``f_j`` from ``N(0, exp(h_j))`` updated by the interval's rows.

    ``logvol`` holds ``h_1..h_J``.
    """
    n_int = logvol.size
    w = phi_pairs / v
    prec = np.bincount(interval, weights=phi_pairs * w, minlength=n_int) + np.exp(-logvol)
    lin = np.bincount(interval, weights=resid * w, minlength=n_int)
    var = 1.0 / prec
    return var * lin + np.sqrt(var) * rng.standard_normal(n_int)


# --- boosting -------------------------------------------------------------------------


def boosting_index(loadings: np.ndarray) -> int:
    """Position of the largest loading in absolute value; ties go to the lowest index."""
    return int(np.argmax(np.abs(loadings)))


def boosting_conditional(
    loadings: np.ndarray, factor: np.ndarray, logvol: np.ndarray, prior_var: np.ndarray
) -> tuple[int, float, float, float]:
    """``(m, p, a, b)`` of the GIG full conditional of ``phi_m^2``.

    ``logvol`` holds ``h_1..h_J``.  With ``phi* = phi / phi_m`` and
    ``f* = f phi_m`` the conditional is
    ``GIG((G - J) / 2, 1 / s_m + sum_{g != m} phi*_g^2 / s_g, sum_j f*_j^2 exp(-h_j))``.
    """
    m = boosting_index(loadings)
    phi_m = loadings[m]
    if phi_m == 0.0:
        raise DomainError("all loadings are zero")
    star = loadings / phi_m
    f_star = factor * phi_m
    others = np.arange(loadings.size) != m
    a = 1.0 / prior_var[m] + float(np.sum(star[others] ** 2 / prior_var[others]))
    b = float(np.sum(f_star ** 2 * np.exp(-logvol)))
    return m, 0.5 * (loadings.size - factor.size), a, b


def boosting_step(
    loadings: np.ndarray, factor: np.ndarray, logvol: np.ndarray, prior_var: np.ndarray, rng: Generator
) -> tuple[np.ndarray, np.ndarray] | None:
    """Rescale loadings and factor through a fresh draw of ``phi_m^2``.

    Returns None (and leaves the inputs alone) when every loading is zero.
    Products ``phi_g f_j`` are preserved for every ``g != m``.
    """
    if not np.any(loadings != 0.0):
        return None
    m, p, a, b = boosting_conditional(loadings, factor, logvol, prior_var)
    phi_m = loadings[m]
    star = loadings / phi_m
    f_star = factor * phi_m
    new_m = math.copysign(math.sqrt(sample_gig(p, a, max(b, 1e-300), rng)), phi_m)
    return star * new_m, f_star / new_m


# --- stochastic volatility ----------------------------------------------------------


def _logvol_precision(persistence: float, variance: float, n: int, obs_prec: np.ndarray) -> np.ndarray:
    """Lower banded precision of ``h_0..h_J`` (bandwidth 1)."""
    phi = persistence
    ab = np.zeros((2, n))
    ab[0, :] = (1.0 + phi * phi) / variance
    ab[0, 0] = 1.0 / variance
    ab[0, -1] = 1.0 / variance
    ab[0, 1:] += obs_prec
    ab[1, :-1] = -phi / variance
    return ab


def sample_logvol(
    factor: np.ndarray, sv: SVState, rng: Generator, mixture=LOG_CHISQ_MIXTURE
) -> np.ndarray:
    """Auxiliary-mixture draw of ``h_0..h_J`` given ``f_1..f_J``."""
    ystar = np.log(factor ** 2 + LOG_SQUARE_OFFSET)
    comp = sample_categorical_log(mixture.component_logpdf(ystar - sv.logvol[1:]), rng)
    obs_prec = 1.0 / mixture.variances[comp]
    ab = _logvol_precision(sv.persistence, sv.variance, sv.logvol.size, obs_prec)
    rhs = np.concatenate([[0.0], (ystar - mixture.means[comp]) * obs_prec])
    return sample_banded_gaussian(ab, rhs, rng, module="factor")


def _log_persistence_target(phi: float, h0: float, variance: float, prior: SVPrior) -> float:
    # prior on (phi + 1) / 2 plus the stationary initial-state term
    return (_log_beta_density(0.5 * (phi + 1.0), prior.a0, prior.b0)
            + 0.5 * math.log1p(-phi * phi) - 0.5 * h0 * h0 * (1.0 - phi * phi) / variance)


def sample_sv_parameters(sv: SVState, prior: SVPrior, rng: Generator) -> None:
    """Update ``sigma2_f`` (GIG) and ``phi_f`` (independence MH) given ``h``."""
    h = sv.logvol
    phi = sv.persistence
    ss = (1.0 - phi * phi) * h[0] ** 2 + float(np.sum((h[1:] - phi * h[:-1]) ** 2))
    n_int = h.size - 1
    sv.variance = sample_gig(-0.5 * n_int, 1.0 / prior.b_sigma, max(ss, 1e-300), rng)

    lag = h[:-1]
    denom = float(lag @ lag)
    mean = float(lag @ h[1:]) / denom
    prop = mean + math.sqrt(sv.variance / denom) * rng.standard_normal()
    sv.proposed += 1
    if not -1.0 < prop < 1.0:
        return
    log_ratio = (_log_persistence_target(prop, h[0], sv.variance, prior)
                 - _log_persistence_target(phi, h[0], sv.variance, prior))
    if log_ratio >= 0.0 or math.log(rng.random()) < log_ratio:
        sv.persistence = prop
        sv.accepted += 1


def sample_sv(factor: np.ndarray, sv: SVState, prior: SVPrior, rng: Generator) -> SVState:
    """One sweep: log-volatilities, then ``sigma2_f`` and ``phi_f``."""
    sv.logvol = sample_logvol(factor, sv, rng)
    sample_sv_parameters(sv, prior, rng)
    return sv


def draw_sv_prior(prior: SVPrior, n_intervals: int, rng: Generator) -> SVState:
    """Joint prior draw of ``(phi_f, sigma2_f, h_0..h_J)``."""
    phi = 2.0 * rng.beta(prior.a0, prior.b0) - 1.0
    var = rng.gamma(0.5, 2.0 * prior.b_sigma)
    h = np.empty(n_intervals + 1)
    h[0] = math.sqrt(var / (1.0 - phi * phi)) * rng.standard_normal()
    for j in range(1, n_intervals + 1):
        h[j] = phi * h[j - 1] + math.sqrt(var) * rng.standard_normal()
    return SVState(logvol=h, persistence=phi, variance=var)


# --- post-processing ------------------------------------------------------------------


def identify_signs(loadings: np.ndarray, factor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip loadings and factor jointly in every draw where ``phi_1 < 0``.

    ``loadings`` is ``(S, G)`` and ``factor`` is ``(S, J)``; copies are returned.
    """
    loadings = np.array(loadings, dtype=float, copy=True)
    factor = np.array(factor, dtype=float, copy=True)
    flip = loadings[:, 0] < 0.0
    loadings[flip] *= -1.0
    factor[flip] *= -1.0
    return loadings, factor
