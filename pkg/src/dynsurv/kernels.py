"""Random variate generators and constant tables used inside the Gibbs sweep.

Everything here takes an explicit :class:`numpy.random.Generator`; nothing
touches global random state.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy import special

from .errors import DomainError

# Below this value a vanishing GIG rate is treated as exactly zero.
GIG_LIMIT_EPS = 1e-12
# below this the ratio-of-uniforms bounds overflow; a gamma hat is exact and near-free
GIG_SMALL_OMEGA = 1e-6


@dataclass(frozen=True)
class MixtureTable:
    """Finite normal mixture with weights, component means and variances."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.shape == m.shape == v.shape) or w.ndim != 1:
            raise ValueError("mixture arrays must be 1-d and of equal length")
        if np.any(v <= 0) or np.any(w < 0):
            raise ValueError("mixture variances must be positive and weights nonnegative")
        for name, arr in (("weights", w), ("means", m), ("variances", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def component_logpdf(self, x) -> np.ndarray:
        """Log of ``w_r * N(x; m_r, v_r)`` with a trailing component axis."""
        x = np.asarray(x, dtype=float)[..., None]
        return (
            np.log(self.weights)
            - 0.5 * np.log(2.0 * np.pi * self.variances)
            - 0.5 * (x - self.means) ** 2 / self.variances
        )

    def logpdf(self, x) -> np.ndarray:
        return special.logsumexp(self.component_logpdf(x), axis=-1)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        z = (x - self.means) / np.sqrt(self.variances)
        return np.sum(self.weights * special.ndtr(z), axis=-1)

    def checksum(self) -> str:
        payload = ";".join(
            ",".join(repr(float(t)) for t in arr)
            for arr in (self.weights, self.means, self.variances)
        )
        return hashlib.sha256(payload.encode()).hexdigest()


# Ten-component normal mixture approximating the standard Gumbel law
# p(e) = exp(-e - exp(-e)).  The weights are renormalized to sum to one exactly.
_GUMBEL_W = np.array([
    0.00396984425, 0.0396244597, 0.16776747, 0.147036501, 0.125306271,
    0.101244946, 0.103919756, 0.115777204, 0.106809163, 0.0880058282,
])
_GUMBEL_M = np.array([
    5.09098826, 3.29092148, 1.82335681, 1.24060239, 0.764081183,
    0.390718878, 0.0431192423, -0.306655413, -0.673531549, -1.06081829,
])
_GUMBEL_V = np.array([
    4.50158557, 2.02102918, 1.10283149, 0.422116096, 0.198054799,
    0.106661808, 0.0778135719, 0.0766155711, 0.0947144221, 0.146489785,
])

GUMBEL_MIXTURE = MixtureTable(_GUMBEL_W / _GUMBEL_W.sum(), _GUMBEL_M, _GUMBEL_V)

# Ten-component mixture for log(chi^2_1), used by the stochastic volatility
# update of the latent factor.
LOG_CHISQ_MIXTURE = MixtureTable(
    np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
              0.18842, 0.12047, 0.05591, 0.01575, 0.00115]),
    np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
              -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]),
    np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
              0.98583, 1.57469, 2.54498, 4.16591, 7.33342]),
)


def gumbel_mixture_table() -> MixtureTable:
    return GUMBEL_MIXTURE


def log_chisq_mixture_table() -> MixtureTable:
    return LOG_CHISQ_MIXTURE


def sample_categorical_log(log_weights: np.ndarray, rng: Generator) -> np.ndarray:
    """Draw one index per row from unnormalized log weights (last axis).

    Raises :class:`DomainError` if every weight of some row is -inf or NaN.
    """
    lw = np.asarray(log_weights, dtype=float)
    peak = lw.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        bad = np.flatnonzero(~np.isfinite(peak.ravel()))
        raise DomainError(f"all component weights underflow for row(s) {bad[:5].tolist()}")
    prob = np.exp(lw - peak)
    cum = np.cumsum(prob, axis=-1)
    u = rng.random(lw.shape[:-1] + (1,)) * cum[..., -1:]
    idx = (cum < u).sum(axis=-1)
    return np.minimum(idx, lw.shape[-1] - 1)


# --- generalized inverse Gaussian -------------------------------------------------


@dataclass(frozen=True)
class GigParams:
    """GIG(p, a, b) with density proportional to x^(p-1) exp(-(a x + b / x) / 2)."""

    p: float
    a: float
    b: float

    def __post_init__(self):
        check_gig_params(self.p, self.a, self.b)


def check_gig_params(p: float, a: float, b: float) -> None:
    if not (math.isfinite(p) and math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"GIG parameters must be finite, got p={p}, a={a}, b={b}")
    if a < 0 or b < 0:
        raise DomainError(f"GIG rates must be nonnegative, got a={a}, b={b}")
    ok = (a > 0 and b > 0) or (a > 0 and p > 0) or (b > 0 and p < 0)
    if not ok:
        raise DomainError(f"GIG(p={p}, a={a}, b={b}) is not normalizable")


def gig_logkernel(x, p: float, a: float, b: float) -> np.ndarray:
    """Unnormalized log density of GIG(p, a, b)."""
    x = np.asarray(x, dtype=float)
    return (p - 1.0) * np.log(x) - 0.5 * (a * x + b / x)


def _gig_mode(lam: float, omega: float) -> float:
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


def _rou_shift(lam: float, omega: float, n: int, rng: Generator) -> np.ndarray:
    # ratio-of-uniforms with mode shift; large lambda or omega
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    fi = math.acos(max(-1.0, min(1.0, -q / (2.0 * math.sqrt(-(p ** 3) / 27.0)))))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        u = uminus + rng.random(m) * (uplus - uminus)
        v = rng.random(m)
        x = u / v + xm
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (x > 0) & (np.log(v) <= t * np.log(x) - s * (x + 1.0 / x) - nc)
        acc = x[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def _rou_noshift(lam: float, omega: float, n: int, rng: Generator) -> np.ndarray:
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        u = um * rng.random(m)
        v = rng.random(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = u / v
            ok = (x > 0) & (np.log(v) <= t * np.log(x) - s * (x + 1.0 / x) - nc)
        acc = x[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def _rejection_nontconcave(lam: float, omega: float, n: int, rng: Generator) -> np.ndarray:
    # three-piece hat for 0 <= lambda < 1 and small omega (density not T-concave)
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    # below this lambda the middle piece is 1/x to double precision; the
    # power-difference forms would cancel
    flat = lam < 1e-200
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    area0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        area1 = 0.0
        k2 = x0 ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        span = math.log(2.0 / omega / x0)
        if flat:
            area1 = k1 * span
        else:
            area1 = k1 * x0 ** lam * math.expm1(lam * span) / lam
        k2 = (2.0 / omega) ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-1.0) / omega
    total = area0 + area1 + area2
    tail_start = max(x0, 2.0 / omega)

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        v = total * rng.random(m)
        x = np.empty(m)
        hx = np.empty(m)

        r0 = v <= area0
        x[r0] = x0 * v[r0] / area0
        hx[r0] = k0

        v1 = v - area0
        r1 = ~r0 & (v1 <= area1)
        if np.any(r1):
            if flat:
                x[r1] = x0 * np.exp(v1[r1] / k1)
                hx[r1] = k1 / x[r1]
            else:
                x[r1] = x0 * np.exp(np.log1p(lam * v1[r1] / (k1 * x0 ** lam)) / lam)
                hx[r1] = k1 * x[r1] ** (lam - 1.0)

        r2 = ~r0 & ~r1
        if np.any(r2):
            v2 = v1[r2] - area1
            arg = math.exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v2
            x[r2] = -2.0 / omega * np.log(np.maximum(arg, np.finfo(float).tiny))
            hx[r2] = k2 * np.exp(-omega / 2.0 * x[r2])

        u = rng.random(m) * hx
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (x > 0) & (np.log(u) <= (lam - 1.0) * np.log(x) - omega / 2.0 * (x + 1.0 / x))
        acc = x[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def _gamma_proposal(lam: float, omega: float, n: int, rng: Generator) -> np.ndarray:
    # tiny omega: Gamma(lam, 2/omega) hat, accepted with exp(-omega / (2x)); exact
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        x = rng.gamma(lam, 2.0 / omega, size=m)
        with np.errstate(divide="ignore"):
            ok = (x > 0) & (rng.random(m) <= np.exp(-0.5 * omega / x))
        acc = x[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def _standard_gig(lam: float, omega: float, n: int, rng: Generator) -> np.ndarray:
    """Draws with density proportional to x^(lam-1) exp(-omega (x + 1/x) / 2), lam >= 0."""
    if lam > 0.0 and omega < GIG_SMALL_OMEGA:
        return _gamma_proposal(lam, omega, n, rng)
    if lam > 2.0 or omega > 3.0:
        return _rou_shift(lam, omega, n, rng)
    if lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        return _rou_noshift(lam, omega, n, rng)
    return _rejection_nontconcave(lam, omega, n, rng)


def sample_gig(p: float, a: float, b: float, rng: Generator, size: int | None = None):
    """Draw from GIG(p, a, b), density proportional to x^(p-1) exp(-(a x + b/x)/2).

    A rate below ``GIG_LIMIT_EPS`` is treated as zero, in which case the draw
    comes from the gamma (``b -> 0``) or inverse-gamma (``a -> 0``) limit.
    Returns a float when ``size`` is None, otherwise an array.
    """
    p, a, b = float(p), float(a), float(b)
    check_gig_params(p, a, b)
    n = 1 if size is None else int(size)

    if b < GIG_LIMIT_EPS and p > 0:
        x = rng.gamma(p, 2.0 / a, size=n)
    elif a < GIG_LIMIT_EPS and p < 0:
        x = 1.0 / rng.gamma(-p, 2.0 / b, size=n)
    else:
        omega = math.sqrt(a * b)
        alpha = math.sqrt(b / a)
        lam = abs(p)
        y = _standard_gig(lam, omega, n, rng)
        x = alpha / y if p < 0 else alpha * y
    return float(x[0]) if size is None else x


def gig_mean(p: float, a: float, b: float) -> float:
    """Closed-form mean via Bessel function ratio (both rates positive)."""
    omega = math.sqrt(a * b)
    return math.sqrt(b / a) * special.kve(p + 1.0, omega) / special.kve(p, omega)


# --- F and scaled beta ------------------------------------------------------------


def sample_f_scaled(a: float, c: float, rng: Generator, size: int | None = None):
    """Draw kappa with kappa / 2 ~ F(2a, 2c)."""
    if not (a > 0 and c > 0):
        raise DomainError(f"F shape parameters must be positive, got a={a}, c={c}")
    return 2.0 * rng.f(2.0 * a, 2.0 * c, size=size)


def sample_scaled_beta(alpha: float, beta: float, rng: Generator, size: int | None = None):
    """Draw x with 2x ~ Beta(alpha, beta); support (0, 0.5)."""
    if not (alpha > 0 and beta > 0):
        raise DomainError(f"beta shapes must be positive, got {alpha}, {beta}")
    return 0.5 * rng.beta(alpha, beta, size=size)


def log_f_scaled_density(kappa: float, a: float, c: float) -> float:
    """Log density of kappa where kappa / 2 ~ F(2a, 2c)."""
    return log_f_scaled_density_at_log(math.log(kappa), a, c)


def log_f_scaled_density_at_log(log_kappa: float, a: float, c: float) -> float:
    """Same density, evaluated from log(kappa) so products of floored scales
    never pass through a subnormal."""
    lx = log_kappa - math.log(2.0)
    d1, d2 = 2.0 * a, 2.0 * c
    return (
        0.5 * d1 * math.log(d1) + 0.5 * d2 * math.log(d2)
        + (0.5 * d1 - 1.0) * lx
        - 0.5 * (d1 + d2) * float(np.logaddexp(math.log(d2), math.log(d1) + lx))
        - special.betaln(0.5 * d1, 0.5 * d2)
        - math.log(2.0)
    )
