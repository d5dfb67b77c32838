"""Auxiliary survival times and Gumbel-mixture indicators.

Conditional on the augmented pairs ``(tau_ij, r_ij)`` the model is a linear
Gaussian state space model with observations ``-log tau_ij - m_r`` and
variances ``v_r``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from .data import RiskSetLayout
from .errors import DomainError
from .kernels import GUMBEL_MIXTURE, MixtureTable, sample_categorical_log


@dataclass
class AugmentedData:
    """Per-pair augmented quantities, aligned with a :class:`RiskSetLayout`."""

    tau: np.ndarray
    component: np.ndarray
    x: np.ndarray
    v: np.ndarray


def sample_augmented_times(layout: RiskSetLayout, hazards: np.ndarray, rng: Generator) -> np.ndarray:
    """``tau = u + Exp(hazard)`` except for failure exits, where ``tau = u``.

    ``hazards`` is per pair, aligned with ``layout``.
    """
    lam = np.asarray(hazards, dtype=float)
    if lam.shape != (layout.n_pairs,):
        raise DomainError("one hazard per at-risk pair expected")
    if np.any(~(lam > 0)) or np.any(~np.isfinite(lam)):
        raise DomainError("hazards must be finite and positive")
    residual = rng.standard_exponential(layout.n_pairs) / lam
    return np.where(layout.fixed_tau, layout.exposure, layout.exposure + residual)


def component_log_weights(tau: np.ndarray, eta: np.ndarray, mixture: MixtureTable = GUMBEL_MIXTURE) -> np.ndarray:
    """Unnormalized log posterior weights of the mixture components, shape ``(n, R)``."""
    resid = -np.log(tau) - eta
    return mixture.component_logpdf(resid)


def sample_component_indicators(
    tau: np.ndarray,
    eta: np.ndarray,
    rng: Generator,
    mixture: MixtureTable = GUMBEL_MIXTURE,
) -> np.ndarray:
    """0-based component index per pair."""
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("augmented times must be positive")
    return sample_categorical_log(component_log_weights(tau, eta, mixture), rng)


def build_observations(tau: np.ndarray, component: np.ndarray, mixture: MixtureTable = GUMBEL_MIXTURE):
    x = -np.log(tau) - mixture.means[component]
    v = mixture.variances[component]
    return x, v


def interval_blocks(layout: RiskSetLayout, x: np.ndarray, v: np.ndarray) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-interval ``(x_j, V_j, Z_j)`` views."""
    blocks = []
    for j in range(layout.n_intervals):
        sl = layout.interval_slice(j)
        blocks.append((x[sl], v[sl], layout.design[sl]))
    return blocks


def augment(
    layout: RiskSetLayout,
    eta: np.ndarray,
    rng: Generator,
    mixture: MixtureTable = GUMBEL_MIXTURE,
) -> AugmentedData:
    """One full augmentation sweep given the per-pair linear predictor."""
    hazards = np.exp(eta)
    tau = sample_augmented_times(layout, hazards, rng)
    comp = sample_component_indicators(tau, eta, rng, mixture)
    x, v = build_observations(tau, comp, mixture)
    return AugmentedData(tau=tau, component=comp, x=x, v=v)
