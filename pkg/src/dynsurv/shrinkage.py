"""Triple gamma, double gamma and ridge shrinkage hierarchies.

Each :class:`ShrinkageBlock` governs one coefficient vector ``x`` with
``x_k ~ N(0, s_k)``.  For the innovation variances the coefficients are the
signed roots ``sqrt(theta_k)``, which is equivalent to
``theta_k | s_k ~ G(1/2, 1/(2 s_k))``.

triple
    ``s_k | a, q_k ~ G(a, a q_k / 2)``, ``q_k | c, g ~ G(c, c / g)``,
    ``g / 2 ~ F(2a, 2c)``, ``2a ~ B(alpha_a, beta_a)``, ``2c ~ B(alpha_c, beta_c)``.
double
    ``s_k | a, g ~ G(a, a g / 2)``, ``g ~ G(d1, d2)``, ``a ~ G(alpha_a, alpha_a beta_a)``.
ridge
    ``s_k = 2 / g`` with ``g`` fixed.

Gamma distributions use the shape/rate convention throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from numpy.random import Generator
from scipy import special

from .errors import ConfigError
from .kernels import log_f_scaled_density, log_f_scaled_density_at_log, sample_gig

FAMILIES = ("triple", "double", "ridge")
SCALE_FLOOR = 1e-300
SCALE_CEILING = 1e300
TARGET_ACCEPTANCE = 0.44


@dataclass(frozen=True)
class PriorConfig:
    """Prior settings for one shrinkage block.

    ``None`` entries are filled with family defaults by :meth:`resolved`.
    ``a``, ``c`` and ``global_value`` are starting values when learned and
    fixed values otherwise.  Learn flags default to True except under ridge,
    where asking to learn anything is an error.
    """

    family: str = "triple"
    learn_a: bool | None = None
    learn_c: bool | None = None
    learn_global: bool | None = None
    a: float | None = None
    c: float | None = None
    global_value: float | None = None
    alpha_a: float | None = None
    beta_a: float | None = None
    alpha_c: float | None = None
    beta_c: float | None = None
    d1: float | None = None
    d2: float | None = None

    def resolved(self) -> "PriorConfig":
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "ridge":
            bad = [n for n in ("learn_a", "learn_c", "learn_global") if getattr(self, n)]
            if bad:
                raise ConfigError(f"ridge family has nothing to learn; contradictory flag(s) {bad}")
            flags = dict(learn_a=False, learn_c=False, learn_global=False)
            defaults = dict(global_value=20.0)
        else:
            if self.family == "double" and self.learn_c:
                raise ConfigError("the double family has no tail parameter c to learn")
            flags = dict(
                learn_a=True if self.learn_a is None else bool(self.learn_a),
                learn_c=(self.family == "triple") if self.learn_c is None else bool(self.learn_c),
                learn_global=True if self.learn_global is None else bool(self.learn_global),
            )
            g0 = 1.0 if flags["learn_global"] else 20.0
            if self.family == "triple":
                defaults = dict(a=0.1, c=0.1, alpha_a=5.0, beta_a=5.0, alpha_c=5.0, beta_c=5.0,
                                global_value=g0)
            else:
                defaults = dict(a=0.1, alpha_a=5.0, beta_a=10.0, d1=0.001, d2=0.001, global_value=g0)
        filled = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        out = replace(self, **flags, **filled)
        out.validate()
        return out

    def validate(self) -> None:
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "family" or isinstance(val, bool) or val is None:
                continue
            if not (math.isfinite(val) and val > 0):
                raise ConfigError(f"{f.name} must be positive and finite, got {val}")
        if self.family == "triple":
            for name in ("a", "c"):
                val = getattr(self, name)
                if val is not None and not 0.0 < val < 0.5:
                    raise ConfigError(f"{name} must lie in (0, 0.5) for the triple family, got {val}")

    @property
    def learns_anything(self) -> bool:
        return self.family != "ridge" and bool(self.learn_a or self.learn_c or self.learn_global)


def ridge_config(global_value: float = 20.0) -> PriorConfig:
    return PriorConfig(family="ridge", global_value=global_value)


def _log_gamma_density(x, shape, rate):
    x = np.asarray(x, dtype=float)
    return shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def _log_beta_density(u, alpha, beta):
    return (alpha - 1.0) * math.log(u) + (beta - 1.0) * math.log1p(-u) - special.betaln(alpha, beta)


@dataclass
class AdaptiveRW:
    """Gaussian random-walk proposal scale tuned toward a target acceptance rate."""

    sd: float = 1.0
    accepted: int = 0
    proposed: int = 0
    batch_accepted: int = 0
    batch_size: int = 50
    batches: int = 0
    _in_batch: int = 0

    def record(self, accepted: bool) -> None:
        self.proposed += 1
        self._in_batch += 1
        if accepted:
            self.accepted += 1
            self.batch_accepted += 1

    def adapt(self) -> None:
        if self._in_batch < self.batch_size:
            return
        self.batches += 1
        rate = self.batch_accepted / self._in_batch
        delta = min(0.05, 1.0 / math.sqrt(self.batches))
        self.sd *= math.exp(delta if rate > TARGET_ACCEPTANCE else -delta)
        self._in_batch = 0
        self.batch_accepted = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def mh_accept(log_ratio: float, rng: Generator) -> bool:
    """Metropolis-Hastings acceptance; a zero log ratio is always accepted."""
    if log_ratio >= 0.0:
        return True
    return math.log(rng.random()) < log_ratio


def sample_prior_variance(family: str, a: float, c: float, global_scale: float, rng: Generator) -> float:
    """Draw a local variance from the hierarchy given its pole, tail and global scale."""
    if family == "ridge":
        return 2.0 / global_scale
    if family == "triple":
        q = rng.gamma(c, global_scale / c)
        return max(rng.gamma(a, 2.0 / (a * q)), SCALE_FLOOR)
    if family == "double":
        scale = min(2.0 / (a * max(global_scale, SCALE_FLOOR)), SCALE_CEILING)
        return min(max(rng.gamma(a, scale), SCALE_FLOOR), SCALE_CEILING)
    raise ConfigError(f"unknown family {family!r}")


@dataclass
class ShrinkageBlock:
    """State and update rules of one hierarchy."""

    config: PriorConfig
    size: int
    local: np.ndarray = field(default=None)
    local_aux: np.ndarray = field(default=None)
    global_scale: float = 1.0
    global_aux: float = 1.0
    a: float = 0.1
    c: float = 0.1
    a_proposal: AdaptiveRW = field(default_factory=AdaptiveRW)
    c_proposal: AdaptiveRW = field(default_factory=AdaptiveRW)
    floor_hits: int = 0

    def __post_init__(self):
        self.config = self.config.resolved()
        cfg = self.config
        if self.local is None:
            self.local = np.ones(self.size)
        if self.local_aux is None:
            self.local_aux = np.ones(self.size)
        self.global_scale = float(cfg.global_value)
        if cfg.a is not None:
            self.a = float(cfg.a)
        if cfg.c is not None:
            self.c = float(cfg.c)
        if cfg.family == "ridge":
            self.local = np.full(self.size, 2.0 / self.global_scale)

    @property
    def family(self) -> str:
        return self.config.family

    def variances(self) -> np.ndarray:
        """Current prior variances of the coefficients."""
        if self.family == "ridge":
            return np.full(self.size, 2.0 / self.global_scale)
        return self.local

    # -- local scales ------------------------------------------------------------

    def _floor(self, arr: np.ndarray) -> np.ndarray:
        low = arr < SCALE_FLOOR
        if np.any(low):
            self.floor_hits += int(low.sum())
            arr = np.where(low, SCALE_FLOOR, arr)
        return arr

    def local_rate(self) -> np.ndarray:
        """Rate of the gamma prior on each local variance."""
        if self.family == "triple":
            return self.a * self.local_aux / 2.0
        return np.full(self.size, self.a * self.global_scale / 2.0)

    def _sample_local(self, coef: np.ndarray, rng: Generator) -> None:
        coef = np.asarray(coef, dtype=float)
        rate = np.clip(self.local_rate(), SCALE_FLOOR, SCALE_CEILING)
        sq = np.clip(np.minimum(np.abs(coef), 1e150) ** 2, SCALE_FLOOR, SCALE_CEILING)
        new = np.empty(self.size)
        for k in range(self.size):
            new[k] = sample_gig(self.a - 0.5, 2.0 * rate[k], sq[k], rng)
        self.local = self._floor(np.minimum(new, SCALE_CEILING))

    def _sample_local_aux(self, rng: Generator) -> None:
        shape = self.a + self.c
        rate_q = self.a * self.local / 2.0 + self.c / self.global_scale
        self.local_aux = self._floor(np.minimum(rng.gamma(shape, 1.0 / rate_q), SCALE_CEILING))

    def sample_local_scales(self, coef: np.ndarray, rng: Generator) -> None:
        """Draw ``s_k`` (GIG) and, for the triple family, ``q_k`` (gamma)."""
        if self.family == "ridge":
            return
        self._sample_local(coef, rng)
        if self.family == "triple":
            self._sample_local_aux(rng)

    # -- global scale ------------------------------------------------------------

    def sample_global_scales(self, rng: Generator) -> None:
        cfg = self.config
        if self.family == "ridge" or not cfg.learn_global:
            return
        if self.family == "double":
            shape = cfg.d1 + self.size * self.a
            rate = cfg.d2 + 0.5 * self.a * float(self.local.sum())
            self.global_scale = max(rng.gamma(shape, 1.0 / rate), SCALE_FLOOR)
            return
        # g / 2 ~ F(2a, 2c) written as 2/g | e ~ G(c, c e), e ~ G(a, a)
        a, c = self.a, self.c
        self.global_aux = rng.gamma(a + c, 1.0 / (a + 2.0 * c / self.global_scale))
        shape = c + self.size * c
        rate = 2.0 * c * self.global_aux + c * float(self.local_aux.sum())
        inv = rng.gamma(shape, 1.0 / rate)
        self.global_scale = 1.0 / max(inv, SCALE_FLOOR)

    # -- pole and tail -------------------------------------------------------------

    def _log_local_marginal(self, a: float, c: float) -> float:
        # triple: s_k g / 2 ~ F(2a, 2c) once q_k is integrated out
        lg = math.log(self.global_scale)
        return float(sum(log_f_scaled_density_at_log(math.log(s) + lg, a, c) for s in self.local)) + self.size * lg

    def log_target_a(self, a: float) -> float:
        """Log conditional of ``a`` up to a constant (natural scale).

        Under the triple family the auxiliary locals and the auxiliary of the
        global F prior are integrated out.
        """
        cfg = self.config
        if self.family == "triple":
            if not 0.0 < a < 0.5:
                return -math.inf
            out = self._log_local_marginal(a, self.c)
            if cfg.learn_global:
                out += log_f_scaled_density(self.global_scale, a, self.c)
            return out + _log_beta_density(2.0 * a, cfg.alpha_a, cfg.beta_a)
        if a <= 0.0:
            return -math.inf
        out = float(np.sum(_log_gamma_density(self.local, a, a * self.global_scale / 2.0)))
        return out + float(_log_gamma_density(a, cfg.alpha_a, cfg.alpha_a * cfg.beta_a))

    def log_target_c(self, c: float) -> float:
        cfg = self.config
        if not 0.0 < c < 0.5:
            return -math.inf
        out = self._log_local_marginal(self.a, c)
        if cfg.learn_global:
            out += log_f_scaled_density(self.global_scale, self.a, c)
        return out + _log_beta_density(2.0 * c, cfg.alpha_c, cfg.beta_c)

    def _mh_bounded(self, current: float, log_target, proposal: AdaptiveRW, rng: Generator) -> float:
        # random walk on logit(2x), x in (0, 0.5)
        u = 2.0 * current
        z = math.log(u) - math.log1p(-u)
        z_new = z + proposal.sd * rng.standard_normal()
        u_new = special.expit(z_new)
        if not 0.0 < u_new < 1.0:
            proposal.record(False)
            return current
        x_new = 0.5 * u_new
        log_ratio = (log_target(x_new) + math.log(u_new) + math.log1p(-u_new)
                     - log_target(current) - math.log(u) - math.log1p(-u))
        ok = mh_accept(log_ratio, rng)
        proposal.record(ok)
        return x_new if ok else current

    def _mh_positive(self, current: float, log_target, proposal: AdaptiveRW, rng: Generator) -> float:
        z_new = math.log(current) + proposal.sd * rng.standard_normal()
        x_new = math.exp(z_new)
        log_ratio = log_target(x_new) + z_new - log_target(current) - math.log(current)
        ok = mh_accept(log_ratio, rng)
        proposal.record(ok)
        return x_new if ok else current

    def sample_pole_tail(self, rng: Generator, adapt: bool = False) -> None:
        cfg = self.config
        if self.family == "ridge":
            return
        if cfg.learn_a:
            if self.family == "triple":
                self.a = self._mh_bounded(self.a, self.log_target_a, self.a_proposal, rng)
            else:
                self.a = self._mh_positive(self.a, self.log_target_a, self.a_proposal, rng)
            if adapt:
                self.a_proposal.adapt()
        if self.family == "triple" and cfg.learn_c:
            self.c = self._mh_bounded(self.c, self.log_target_c, self.c_proposal, rng)
            if adapt:
                self.c_proposal.adapt()

    def update(self, coef: np.ndarray, rng: Generator, adapt: bool = False) -> None:
        """Full sweep: local scales, pole/tail parameters, global scale.

        Pole and tail are drawn with the auxiliary locals integrated out, so
        those are refreshed afterwards.
        """
        if self.family == "ridge":
            return
        self._sample_local(coef, rng)
        self.sample_pole_tail(rng, adapt=adapt)
        if self.family == "triple":
            self._sample_local_aux(rng)
        self.sample_global_scales(rng)

    def draw_prior_variance(self, rng: Generator) -> float:
        """Prior variance of a coefficient not seen in the data."""
        return sample_prior_variance(self.family, self.a, self.c, self.global_scale, rng)

    def draw_prior(self, rng: Generator) -> np.ndarray:
        """Replace the state by a joint prior draw and return matching coefficients."""
        cfg = self.config
        if self.family == "triple":
            if cfg.learn_a:
                self.a = 0.5 * rng.beta(cfg.alpha_a, cfg.beta_a)
            if cfg.learn_c:
                self.c = 0.5 * rng.beta(cfg.alpha_c, cfg.beta_c)
            if cfg.learn_global:
                self.global_scale = 2.0 * rng.f(2.0 * self.a, 2.0 * self.c)
            self.local_aux = rng.gamma(self.c, self.global_scale / self.c, self.size)
            self.local = self._floor(rng.gamma(self.a, 2.0 / (self.a * self.local_aux)))
        elif self.family == "double":
            if cfg.learn_a:
                self.a = rng.gamma(cfg.alpha_a, 1.0 / (cfg.alpha_a * cfg.beta_a))
            if cfg.learn_global:
                # G(d1, d2) with tiny d1 puts real mass below the float range
                self.global_scale = max(rng.gamma(cfg.d1, 1.0 / cfg.d2), SCALE_FLOOR)
            scale = min(2.0 / (self.a * self.global_scale), SCALE_CEILING)
            self.local = self._floor(np.minimum(rng.gamma(self.a, scale, self.size), SCALE_CEILING))
        return np.sqrt(self.variances()) * rng.standard_normal(self.size)

    def snapshot(self) -> dict[str, np.ndarray | float]:
        out: dict[str, np.ndarray | float] = {"local": self.variances().copy()}
        if self.family == "triple":
            out["local_aux"] = self.local_aux.copy()
        out["global"] = self.global_scale
        if self.family != "ridge":
            out["a"] = self.a
        if self.family == "triple":
            out["c"] = self.c
        return out

    def acceptance(self) -> dict[str, float]:
        out = {}
        if self.family != "ridge" and self.config.learn_a:
            out["a"] = self.a_proposal.acceptance_rate
        if self.family == "triple" and self.config.learn_c:
            out["c"] = self.c_proposal.acceptance_rate
        return out
