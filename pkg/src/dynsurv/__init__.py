"""Bayesian dynamic survival models.

Piecewise-exponential hazards with random-walk coefficients, triple gamma,
double gamma and ridge shrinkage on the innovation variances and initial
means, an optional grouped latent factor with stochastic volatility, and
posterior-predictive sampling of survival times.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    IntervalGrid,
    Schema,
    SurvivalDataset,
    compute_exposures,
    division_points,
    load_dataset,
    piecewise_loglik,
)
from .engine import ChainConfig, ModelPriors, PosteriorDraws, posterior_predictive, run_chain, run_chains  # noqa: E402
from .errors import ConfigError, DataError, DomainError, DynSurvError, NumericalError  # noqa: E402
from .factor import SVPrior, identify_signs  # noqa: E402
from .shrinkage import PriorConfig  # noqa: E402
from .summary import summarize  # noqa: E402

__all__ = [
    "ChainConfig",
    "ConfigError",
    "DataError",
    "DomainError",
    "DynSurvError",
    "IntervalGrid",
    "ModelPriors",
    "NumericalError",
    "PosteriorDraws",
    "PriorConfig",
    "SVPrior",
    "Schema",
    "SurvivalDataset",
    "compute_exposures",
    "division_points",
    "identify_signs",
    "load_dataset",
    "piecewise_loglik",
    "posterior_predictive",
    "run_chain",
    "run_chains",
    "summarize",
]
