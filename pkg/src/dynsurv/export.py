"""Reading and writing draws, summaries and run metadata."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import PosteriorDraws
from .errors import DataError

# axis names of the non-draw dimensions; anything else per coefficient is "k"
INDEX_NAMES = {
    "beta": ("j", "k"),
    "f": ("j",),
    "h": ("j",),
    "phi": ("g",),
    "phi_var": ("g",),
    "phi_var_aux": ("g",),
}
SUMMARY_COLUMNS = ("quantity", "index", "mean", "sd", "q2.5", "q25", "median", "q75", "q97.5", "ess", "rhat")


def index_names(name: str, ndim: int) -> tuple[str, ...]:
    if ndim == 0:
        return ()
    names = INDEX_NAMES.get(name, ("k",) * ndim)
    if len(names) != ndim:
        names = tuple(f"i{d}" for d in range(ndim))
    return names


def _fmt(x: float) -> str:
    return repr(float(x))


def write_draws(chains: Sequence[PosteriorDraws], directory: Path) -> list[Path]:
    """One long-format CSV per quantity: chain, iteration, indices, value."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in chains[0].arrays:
        shape = chains[0].arrays[name].shape[1:]
        idx_names = index_names(name, len(shape))
        path = directory / f"{name}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(("chain", "iteration", *idx_names, "value")) + "\n")
            grid = [tuple(map(str, t)) for t in np.ndindex(*shape)] if shape else [()]
            for c, draws in enumerate(chains):
                arr = draws.arrays[name].reshape(draws.n_draws, -1)
                for s, it in enumerate(draws.iterations.tolist()):
                    prefix = f"{c},{it}"
                    vals = arr[s].tolist()
                    fh.write("".join(
                        ",".join((prefix, *ix, repr(v))) + "\n" for ix, v in zip(grid, vals)
                    ))
        written.append(path)
    return written


def read_quantity(path: Path) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-chain ``(iterations, values)`` from one draw file; values keep their index shape."""
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        table = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    if header[:2] != ["chain", "iteration"] or header[-1] != "value":
        raise DataError(f"{path}: not a draw file")
    n_idx = len(header) - 3
    chain_col = table[:, 0].astype(np.int64)
    its, vals = [], []
    for c in range(int(chain_col.max()) + 1):
        rows = table[chain_col == c]
        iters = np.unique(rows[:, 1].astype(np.int64))
        shape = tuple(int(rows[:, 2 + d].max()) + 1 for d in range(n_idx))
        per = int(np.prod(shape)) if shape else 1
        values = rows[:, -1].reshape(iters.size, per).reshape((iters.size,) + shape)
        its.append(iters)
        vals.append(values)
    return its, vals


def read_draws(directory: Path, meta: dict, names: Iterable[str] | None = None) -> list[PosteriorDraws]:
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if names is not None:
        wanted = set(names)
        files = [f for f in files if f.stem in wanted]
    if not files:
        raise DataError(f"{directory}: no draw files")
    per_chain: list[dict[str, np.ndarray]] = []
    iterations: list[np.ndarray] = []
    for f in files:
        its, vals = read_quantity(f)
        while len(per_chain) < len(vals):
            per_chain.append({})
            iterations.append(its[len(iterations)])
        for c, v in enumerate(vals):
            per_chain[c][f.stem] = v
    return [PosteriorDraws(arrays=a, iterations=i, meta=dict(meta, chain=c), diagnostics={})
            for c, (a, i) in enumerate(zip(per_chain, iterations))]


def write_summary(rows: list[dict], path: Path) -> Path:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([
                r["quantity"],
                ":".join(str(i) for i in r["index"]),
                *(_fmt(r[c]) for c in SUMMARY_COLUMNS[2:]),
            ])
    return path


def write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
