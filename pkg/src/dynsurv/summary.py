"""Posterior summaries: quantiles, effective sample size and split R-hat."""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .engine import PosteriorDraws

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(x: Sequence[float]) -> float:
    """Initial-positive-sequence estimate, capped at the number of draws."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    rho = _autocorr(x)
    tau = -1.0
    for m in range(0, n - 1, 2):
        pair = rho[m] + rho[m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(min(n, n / tau))


def split_rhat(chains: Sequence[Sequence[float]]) -> float:
    """Potential scale reduction over chains split in halves."""
    seqs = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        half = c.size // 2
        if half < 2:
            return float("nan")
        seqs.extend([c[:half], c[half: 2 * half]])
    arr = np.vstack(seqs)
    n = arr.shape[1]
    within = float(arr.var(axis=1, ddof=1).mean())
    between = n * float(arr.mean(axis=1).var(ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    pooled = (n - 1) / n * within + between / n
    return float(np.sqrt(pooled / within))


def summarize(chains: PosteriorDraws | Sequence[PosteriorDraws]) -> list[dict]:
    """One row per scalar entry of every tracked quantity.

    Columns: quantity, index (tuple), mean, sd, q2.5, q25, median, q75, q97.5,
    ess and rhat (NaN for a single chain).
    """
    if isinstance(chains, PosteriorDraws):
        chains = [chains]
    if not chains or chains[0].n_draws == 0:
        raise ValueError("no draws to summarize")
    rows = []
    for name in chains[0].arrays:
        stacked = [c.arrays[name] for c in chains]
        shape = stacked[0].shape[1:]
        for idx in itertools.product(*(range(s) for s in shape)):
            per_chain = [a[(slice(None),) + idx] for a in stacked]
            pooled = np.concatenate(per_chain)
            q = np.quantile(pooled, QUANTILES)
            rows.append({
                "quantity": name,
                "index": idx,
                "mean": float(pooled.mean()),
                "sd": float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
                "q2.5": float(q[0]),
                "q25": float(q[1]),
                "median": float(q[2]),
                "q75": float(q[3]),
                "q97.5": float(q[4]),
                "ess": float(sum(effective_sample_size(c) for c in per_chain)),
                "rhat": split_rhat(per_chain) if len(per_chain) > 1 else float("nan"),
            })
    return rows
