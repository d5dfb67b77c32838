"""Gibbs sampler orchestration, retained draws and posterior-predictive sampling."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.random import Generator

from .augment import AugmentedData, augment
from .data import IntervalGrid, RiskSetLayout, SurvivalDataset, build_layout
from .errors import ConfigError, DomainError, DynSurvError, NumericalError
from .factor import (
    FactorBlock,
    SVPrior,
    boosting_step,
    draw_sv_prior,
    identify_signs,
    sample_factor,
    sample_loadings,
    sample_sv,
)
from .shrinkage import PriorConfig, ShrinkageBlock, sample_prior_variance
from .states import StateBlock, draw_states_and_statics

# hazards are exp(eta); beyond this the exponent overflows
ETA_LIMIT = 700.0
THREADS_ENV = "DYNSURV_THREADS"
STATE_SAMPLERS = ("precision", "ffbs")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    chains: int = 1
    state_sampler: str = "precision"
    interweaving: bool = True
    repeat_factor_step: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must lie in [0, iterations)")
        if self.thin < 1:
            raise ConfigError("thin must be positive")
        if self.chains < 1:
            raise ConfigError("chains must be positive")
        if self.state_sampler not in STATE_SAMPLERS:
            raise ConfigError(f"state_sampler must be one of {STATE_SAMPLERS}")
        if self.retained < 1:
            raise ConfigError("the configuration retains no draws")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keeps(self, iteration: int) -> bool:
        """Whether the 0-based ``iteration`` is stored."""
        done = iteration + 1 - self.burn_in
        return done > 0 and done % self.thin == 0


@dataclass(frozen=True)
class ModelPriors:
    theta: PriorConfig = field(default_factory=PriorConfig)
    beta: PriorConfig = field(default_factory=PriorConfig)
    phi: PriorConfig = field(default_factory=PriorConfig)
    sv: SVPrior = field(default_factory=SVPrior)

    def resolved(self) -> "ModelPriors":
        return ModelPriors(self.theta.resolved(), self.beta.resolved(), self.phi.resolved(), self.sv)


@dataclass
class PosteriorDraws:
    """Retained draws of one chain.

    ``arrays`` maps a quantity name to an array whose first axis runs over
    retained iterations; ``iterations`` holds the matching 1-based sweep numbers.
    """

    arrays: dict[str, np.ndarray]
    iterations: np.ndarray
    meta: dict
    diagnostics: dict

    @property
    def n_draws(self) -> int:
        return self.iterations.size

    @property
    def has_factor(self) -> bool:
        return "phi" in self.arrays


def _guard(module: str, iteration: int | None):
    """Decorator-free wrapper adding provenance to numerical failures."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, kind, exc, tb):
            if exc is None or not isinstance(exc, (DynSurvError, ArithmeticError, np.linalg.LinAlgError)):
                return False
            if isinstance(exc, NumericalError) and exc.module is not None and exc.iteration is not None:
                return False
            raise NumericalError(str(exc), module=module, iteration=iteration) from exc

    return _Ctx()


class Sampler:
    """Full model state plus the Gibbs sweep.

    With ``likelihood=False`` the data carry no information (zero-information
    switch): observations are fixed at zero with infinite variance, so every
    block is drawn from its prior conditional.
    """

    def __init__(
        self,
        dataset: SurvivalDataset,
        grid: IntervalGrid,
        priors: ModelPriors,
        config: ChainConfig,
        rng: Generator,
        likelihood: bool = True,
        trace: Callable[[str], None] | None = None,
    ):
        self.priors = priors.resolved()
        self.config = config
        self.rng = rng
        self.likelihood = likelihood
        self.trace = trace
        self.iteration: int | None = None
        self.set_data(dataset, grid)
        p = dataset.k + 1
        rate = max(float(dataset.status.sum()), 0.5) / float(dataset.time.sum())
        beta_mean = np.zeros(p)
        beta_mean[0] = math.log(rate)
        self.states = StateBlock(beta_mean, np.full(p, math.sqrt(0.01)), np.zeros((grid.n_intervals + 1, p)))
        self.theta_block = ShrinkageBlock(self.priors.theta, p)
        self.beta_block = ShrinkageBlock(self.priors.beta, p)
        self.factor: FactorBlock | None = None
        if dataset.group is not None:
            self.factor = FactorBlock(dataset.n_groups, grid.n_intervals, self.priors.phi, self.priors.sv)
        self.aug: AugmentedData | None = None

    # -- data --------------------------------------------------------------------------

    def set_data(self, dataset: SurvivalDataset, grid: IntervalGrid) -> None:
        if self.__dict__.get("grid") is not None and grid.n_intervals != self.grid.n_intervals:
            raise DomainError("replacement grid must keep the number of intervals")
        self.dataset = dataset
        self.grid = grid
        self.layout: RiskSetLayout = build_layout(dataset, grid)
        self.aug = None

    def _step(self, name: str):
        if self.trace is not None:
            self.trace(name)
        return _guard(name, self.iteration)

    # -- linear predictor --------------------------------------------------------------

    def factor_offset(self) -> np.ndarray | None:
        if self.factor is None:
            return None
        return self.factor.offset(self.layout.group, self.layout.interval)

    def covariate_part(self) -> np.ndarray:
        paths = self.states.paths
        return np.einsum("ik,ik->i", self.layout.design, paths[self.layout.interval + 1])

    def eta(self) -> np.ndarray:
        out = self.covariate_part()
        off = self.factor_offset()
        return out if off is None else out + off

    def loglik(self) -> float:
        eta = np.clip(self.eta(), -ETA_LIMIT, ETA_LIMIT)
        lay = self.layout
        return float(-np.sum(np.exp(eta) * lay.exposure) + np.sum(eta[lay.fixed_tau]))

    # -- sweep -------------------------------------------------------------------------

    def augment(self) -> None:
        with self._step("augmentation"):
            if not self.likelihood:
                n = self.layout.n_pairs
                self.aug = AugmentedData(np.ones(n), np.zeros(n, dtype=np.int64), np.zeros(n),
                                         np.full(n, np.inf))
                return
            eta = np.clip(self.eta(), -ETA_LIMIT, ETA_LIMIT)
            self.aug = augment(self.layout, eta, self.rng)

    def update_parameters(self, adapt: bool = False) -> None:
        """Everything except the augmentation, in the order of the factor algorithm."""
        if self.aug is None:
            raise DomainError("augment() must run before the parameter updates")
        rng = self.rng
        x, v = self.aug.x, self.aug.v
        with self._step("states"):
            self.states = draw_states_and_statics(
                self.layout, x, v, self.states,
                self.beta_block.variances(), self.theta_block.variances(), rng,
                offset=self.factor_offset(), method=self.config.state_sampler,
                interweaving=self.config.interweaving,
            )
        with self._step("shrinkage"):
            self.theta_block.update(self.states.sqrt_theta, rng, adapt=adapt)
            self.beta_block.update(self.states.beta_mean, rng, adapt=adapt)
        if self.factor is not None:
            self._update_factor(x, v, adapt)

    def _update_factor(self, x: np.ndarray, v: np.ndarray, adapt: bool) -> None:
        fb, lay, rng = self.factor, self.layout, self.rng
        resid = x - self.covariate_part()
        with self._step("loadings"):
            fb.loadings = sample_loadings(resid, v, fb.factor[lay.interval], lay.group,
                                          fb.scales.variances(), rng)
        with self._step("factor"):
            fb.factor = sample_factor(resid, v, fb.loadings[lay.group], lay.interval, fb.sv.logvol[1:], rng)
        with self._step("boosting"):
            out = boosting_step(fb.loadings, fb.factor, fb.sv.logvol[1:], fb.scales.variances(), rng)
            if out is None:
                fb.boost_skipped += 1
            else:
                fb.loadings, fb.factor = out
        with self._step("loading_scales"):
            fb.scales.update(fb.loadings, rng, adapt=adapt)
        if self.config.repeat_factor_step:
            with self._step("factor"):
                fb.factor = sample_factor(resid, v, fb.loadings[lay.group], lay.interval,
                                          fb.sv.logvol[1:], rng)
        with self._step("sv"):
            sample_sv(fb.factor, fb.sv, fb.sv_prior, rng)

    def draw_from_prior(self) -> None:
        """Replace every parameter by a joint draw from the prior."""
        rng = self.rng
        p = self.states.beta_mean.size
        sqrt_theta = self.theta_block.draw_prior(rng)
        beta_mean = self.beta_block.draw_prior(rng)
        std = np.cumsum(rng.standard_normal((self.grid.n_intervals + 1, p)), axis=0)
        self.states = StateBlock(beta_mean, sqrt_theta, std)
        if self.factor is not None:
            fb = self.factor
            fb.loadings = fb.scales.draw_prior(rng)
            fb.sv = draw_sv_prior(fb.sv_prior, self.grid.n_intervals, rng)
            fb.factor = np.exp(0.5 * fb.sv.logvol[1:]) * rng.standard_normal(self.grid.n_intervals)
        self.aug = None

    def sweep(self, adapt: bool = False) -> None:
        self.update_parameters(adapt)
        self.augment()

    # -- recording ---------------------------------------------------------------------

    def snapshot(self) -> dict[str, np.ndarray | float]:
        st = self.states
        out: dict[str, np.ndarray | float] = {
            "beta": st.paths,
            "beta_mean": st.beta_mean,
            "sqrt_theta": st.sqrt_theta,
            "theta": st.theta,
        }
        for prefix, block, names in (
            ("theta", self.theta_block, ("xi2", "kappa2", "kappa2_B", "a_xi", "c_xi")),
            ("beta", self.beta_block, ("tau2", "lambda2", "lambda2_B", "a_tau", "c_tau")),
        ):
            out.update(_block_snapshot(block, names))
        if self.factor is not None:
            fb = self.factor
            out.update({
                "phi": fb.loadings,
                "f": fb.factor,
                "h": fb.sv.logvol,
                "phi_f": fb.sv.persistence,
                "sigma2_f": fb.sv.variance,
            })
            out.update(_block_snapshot(fb.scales, ("phi_var", "phi_var_aux", "lambda2_B_phi", "a_phi", "c_phi")))
        out["loglik"] = self.loglik() if self.likelihood else 0.0
        return out

    def diagnostics(self) -> dict:
        out = {
            "acceptance": {
                "theta": self.theta_block.acceptance(),
                "beta": self.beta_block.acceptance(),
            },
            "floor_hits": {"theta": self.theta_block.floor_hits, "beta": self.beta_block.floor_hits},
        }
        if self.factor is not None:
            fb = self.factor
            out["acceptance"]["phi"] = fb.scales.acceptance()
            out["acceptance"]["phi_f"] = fb.sv.acceptance_rate
            out["floor_hits"]["phi"] = fb.scales.floor_hits
            out["boost_skipped"] = fb.boost_skipped
        return out


def _block_snapshot(block: ShrinkageBlock, names: tuple[str, str, str, str, str]) -> dict:
    local, aux, glob, a_name, c_name = names
    out: dict[str, np.ndarray | float] = {local: block.variances().copy()}
    if block.family == "triple":
        out[aux] = block.local_aux.copy()
    out[glob] = block.global_scale
    if block.family != "ridge":
        out[a_name] = block.a
    if block.family == "triple":
        out[c_name] = block.c
    return out


def run_chain(
    dataset: SurvivalDataset,
    grid: IntervalGrid,
    priors: ModelPriors | None = None,
    config: ChainConfig | None = None,
    chain_index: int = 0,
    likelihood: bool = True,
    trace: Callable[[str], None] | None = None,
) -> PosteriorDraws:
    """Run one chain and return its retained draws (signs identified when a factor is present)."""
    priors = (priors or ModelPriors()).resolved()
    config = config or ChainConfig()
    seed = config.seed + chain_index
    rng = np.random.default_rng(seed)
    sampler = Sampler(dataset, grid, priors, config, rng, likelihood=likelihood, trace=trace)
    start = time.perf_counter()
    sampler.iteration = 0
    sampler.augment()
    store: dict[str, np.ndarray] = {}
    kept = np.empty(config.retained, dtype=np.int64)
    slot = 0
    for it in range(config.iterations):
        sampler.iteration = it + 1
        sampler.sweep(adapt=it < config.burn_in)
        if config.keeps(it) and slot < config.retained:
            for name, val in sampler.snapshot().items():
                arr = np.asarray(val, dtype=float)
                if name not in store:
                    store[name] = np.empty((config.retained,) + arr.shape)
                store[name][slot] = arr
            kept[slot] = it + 1
            slot += 1
    elapsed = time.perf_counter() - start
    if "phi" in store:
        store["phi"], store["f"] = identify_signs(store["phi"], store["f"])
    meta = {
        "covariate_names": list(dataset.covariate_names),
        "points": grid.points.tolist(),
        "group_labels": list(dataset.group_labels),
        "families": {"theta": priors.theta.family, "beta": priors.beta.family, "phi": priors.phi.family},
        "chain": chain_index,
        "seed": seed,
        "config": asdict(config),
        "likelihood": likelihood,
    }
    diag = sampler.diagnostics()
    diag["seconds"] = elapsed
    return PosteriorDraws(arrays=store, iterations=kept, meta=meta, diagnostics=diag)


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, val)


def _run_indexed(args):
    dataset, grid, priors, config, index = args
    return run_chain(dataset, grid, priors, config, chain_index=index)


def run_chains(
    dataset: SurvivalDataset,
    grid: IntervalGrid,
    priors: ModelPriors | None = None,
    config: ChainConfig | None = None,
    workers: int | None = None,
) -> list[PosteriorDraws]:
    """Independent chains with seeds ``seed + chain_index``."""
    config = config or ChainConfig()
    workers = default_workers() if workers is None else workers
    jobs = [(dataset, grid, priors, config, i) for i in range(config.chains)]
    if workers <= 1 or config.chains == 1:
        return [_run_indexed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, config.chains)) as pool:
        return list(pool.map(_run_indexed, jobs))


# --- posterior predictive -------------------------------------------------------------


def sample_piecewise_times(hazards: np.ndarray, points: np.ndarray, rng: Generator) -> np.ndarray:
    """Event times under piecewise-constant hazards, one row of ``hazards`` per draw.

    ``hazards`` is ``(S, J)``; beyond the last point the last hazard continues.
    """
    hazards = np.asarray(hazards, dtype=float)
    points = np.asarray(points, dtype=float)
    widths = np.diff(points)
    cum = np.concatenate([np.zeros((hazards.shape[0], 1)), np.cumsum(hazards * widths, axis=1)], axis=1)
    target = rng.standard_exponential(hazards.shape[0])
    n_int = widths.size
    # first interval whose cumulative hazard reaches the target; n_int means past the grid
    idx = np.minimum((cum[:, 1:] < target[:, None]).sum(axis=1), n_int - 1)
    rows = np.arange(hazards.shape[0])
    return points[idx] + (target - cum[rows, idx]) / hazards[rows, idx]


def posterior_predictive(
    draws: PosteriorDraws,
    covariates: np.ndarray,
    rng: Generator,
    group: int | None = None,
) -> np.ndarray:
    """One sampled survival time per retained draw for covariate row ``covariates``.

    ``covariates`` is ``(K,)`` or ``(J, K)``.  With a factor, ``group`` selects
    a fitted group's loading; None (or an index outside the fitted groups)
    means an unseen group whose loading is drawn from its prior.
    """
    paths = draws.arrays["beta"]  # (S, J+1, P)
    n_draws, n_states, p = paths.shape
    n_int = n_states - 1
    z = np.asarray(covariates, dtype=float)
    if z.ndim == 1:
        z = np.broadcast_to(z, (n_int, z.size))
    if z.shape != (n_int, p - 1):
        raise DomainError(f"covariates must have {p - 1} entries (or shape ({n_int}, {p - 1})), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DomainError("covariates must be finite")
    design = np.column_stack([np.ones(n_int), z])
    eta = np.einsum("sjk,jk->sj", paths[:, 1:, :], design)
    if draws.has_factor:
        h = draws.arrays["h"][:, 1:]
        f_new = np.exp(0.5 * h) * rng.standard_normal(h.shape)
        n_groups = draws.arrays["phi"].shape[1]
        if group is not None and 0 <= group < n_groups:
            phi = draws.arrays["phi"][:, group]
        else:
            phi = _unseen_loadings(draws, rng)
        eta = eta + phi[:, None] * f_new
    hazards = np.exp(np.clip(eta, -ETA_LIMIT, ETA_LIMIT))
    return sample_piecewise_times(hazards, np.asarray(draws.meta["points"]), rng)


def _unseen_loadings(draws: PosteriorDraws, rng: Generator) -> np.ndarray:
    family = draws.meta["families"]["phi"]
    arr = draws.arrays
    n = draws.n_draws
    out = np.empty(n)
    for s in range(n):
        a = float(arr["a_phi"][s]) if "a_phi" in arr else float("nan")
        c = float(arr["c_phi"][s]) if "c_phi" in arr else float("nan")
        var = sample_prior_variance(family, a, c, float(arr["lambda2_B_phi"][s]), rng)
        out[s] = math.sqrt(var) * rng.standard_normal()
    return out
