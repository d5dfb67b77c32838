"""Survival data, interval grids, exposures and the piecewise-exponential likelihood."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DomainError


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored survival data.

    ``covariates`` is either ``(N, K)`` (static) or ``(N, J, K)`` with one row
    per individual and interval (time-varying; entries after exit are NaN).
    ``group`` holds integer codes ``0..G-1`` or is None when no grouping is used.
    """

    time: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    group: np.ndarray | None = None
    group_labels: tuple[str, ...] = ()
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        status = np.asarray(self.status)
        cov = np.asarray(self.covariates, dtype=float)
        if time.ndim != 1:
            raise DataError("time must be one-dimensional")
        n = time.size
        if cov.ndim == 1 and n > 0 and cov.size == 0:
            cov = np.zeros((n, 0))
        if cov.ndim not in (2, 3) or cov.shape[0] != n:
            raise DataError(f"covariates must have {n} rows")
        if status.shape != (n,):
            raise DataError("status must match time in length")
        if not np.all(np.isin(status, (0, 1))):
            raise DataError("status values must be 0 or 1")
        if np.any(~np.isfinite(time)) or np.any(time <= 0):
            bad = int(np.flatnonzero(~(time > 0))[0])
            raise DataError(f"observed time must be positive (individual {bad})")
        if cov.ndim == 2 and np.any(~np.isfinite(cov)):
            raise DataError("covariates contain missing or non-finite values")
        names = tuple(self.covariate_names) or tuple(f"z{k + 1}" for k in range(cov.shape[-1]))
        if len(names) != cov.shape[-1]:
            raise DataError("covariate_names length does not match covariate columns")
        grp = None
        labels = tuple(self.group_labels)
        if self.group is not None:
            grp = np.asarray(self.group, dtype=np.int64)
            if grp.shape != (n,):
                raise DataError("group must match time in length")
            if grp.min() < 0:
                raise DataError("group codes must be nonnegative")
            if not labels:
                labels = tuple(str(g) for g in range(int(grp.max()) + 1))
            if grp.max() >= len(labels):
                raise DataError("group codes exceed the number of group labels")
        ids = tuple(self.ids) or tuple(str(i + 1) for i in range(n))
        for arr in (time, status, cov):
            arr.setflags(write=False)
        if grp is not None:
            grp.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status.astype(np.int8))
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "group", grp)
        object.__setattr__(self, "group_labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def k(self) -> int:
        return self.covariates.shape[-1]

    @property
    def time_varying(self) -> bool:
        return self.covariates.ndim == 3

    @property
    def n_groups(self) -> int:
        return 0 if self.group is None else len(self.group_labels)


@dataclass(frozen=True)
class IntervalGrid:
    """Division points together with per-individual exposures.

    Intervals are right-closed, ``(s_{j-1}, s_j]``.  ``exit_index`` is 0-based
    (the interval containing ``y_i``); ``at_risk[j]`` counts individuals with
    ``y_i > s_j`` at the start of interval ``j`` (0-based).
    """

    points: np.ndarray
    exposure: np.ndarray
    exit_index: np.ndarray
    at_risk: np.ndarray
    order: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.points.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def l(self) -> np.ndarray:
        """1-based exit interval per individual."""
        return self.exit_index + 1


def validate_points(points: Sequence[float]) -> np.ndarray:
    s = np.asarray(points, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise DomainError("a grid needs at least two points")
    if s[0] != 0.0:
        raise DomainError("the first division point must be 0")
    if np.any(np.diff(s) <= 0) or not np.all(np.isfinite(s)):
        raise DomainError("division points must be finite and strictly increasing")
    return s


def division_points(times: Sequence[float], status: Sequence[int], every: int = 1) -> np.ndarray:
    """Grid built from observed failure times.

    Unique failure times are sorted and every ``every``-th one is kept; 0 is
    prepended and the largest observed time is appended when it lies beyond
    the last kept failure.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(status)
    if t.shape != d.shape:
        raise DataError("times and status differ in length")
    if int(every) < 1:
        raise DomainError("every must be a positive integer")
    deaths = np.unique(t[d == 1])
    if deaths.size == 0:
        raise DataError("no observed failures; grid undefined")
    kept = deaths[int(every) - 1::int(every)]
    pts = [0.0, *kept.tolist()]
    tmax = float(t.max())
    if tmax > pts[-1]:
        pts.append(tmax)
    return validate_points(pts)


def compute_exposures(dataset: SurvivalDataset, points: Sequence[float]) -> IntervalGrid:
    s = validate_points(points)
    y = dataset.time
    if np.any(y <= 0):
        raise DataError("observed time exactly zero")
    if np.any(y > s[-1]):
        bad = int(np.argmax(y > s[-1]))
        raise DataError(
            f"individual {dataset.ids[bad]} has time {y[bad]} beyond the last division point {s[-1]}"
        )
    n_int = s.size - 1
    # right-closed intervals: l_i = min{j : y_i <= s_j}
    exit_idx = np.searchsorted(s, y, side="left") - 1
    lower = s[:-1]
    upper = s[1:]
    exposure = np.clip(np.minimum(y[:, None], upper[None, :]) - lower[None, :], 0.0, None)
    # exact residual in the exit interval
    rows = np.arange(y.size)
    exposure[rows, exit_idx] = y - s[exit_idx]
    exposure[np.arange(n_int)[None, :] > exit_idx[:, None]] = 0.0
    at_risk = (y[:, None] > lower[None, :]).sum(axis=0)
    order = np.lexsort((rows, -y))

    if dataset.time_varying:
        cov = dataset.covariates
        if cov.shape[1] < n_int:
            cov_pad = np.full((cov.shape[0], n_int, cov.shape[2]), np.nan)
            cov_pad[:, :cov.shape[1]] = cov
            cov = cov_pad
        for i in range(y.size):
            block = cov[i, :exit_idx[i] + 1]
            if np.any(~np.isfinite(block)):
                j = int(np.flatnonzero(~np.all(np.isfinite(block), axis=1))[0])
                raise DataError(
                    f"individual {dataset.ids[i]} lacks covariates for interval {j + 1} while at risk"
                )

    for arr in (s, exposure, exit_idx, at_risk, order):
        arr.setflags(write=False)
    return IntervalGrid(s, exposure, exit_idx, at_risk, order)


def _check_hazards(dataset: SurvivalDataset, grid: IntervalGrid, hazards: np.ndarray) -> np.ndarray:
    lam = np.asarray(hazards, dtype=float)
    if lam.shape != (dataset.n, grid.n_intervals):
        raise DomainError(f"hazards must have shape {(dataset.n, grid.n_intervals)}")
    mask = np.arange(grid.n_intervals)[None, :] <= grid.exit_index[:, None]
    at = lam[mask]
    if np.any(~np.isfinite(at)) or np.any(at <= 0):
        raise DomainError("hazards must be finite and positive for all at-risk pairs")
    return lam


def piecewise_loglik(dataset: SurvivalDataset, grid: IntervalGrid, hazards) -> float:
    """Log-likelihood of the piecewise-exponential model.

    ``hazards`` is ``(N, J)``; entries after an individual's exit are ignored.
    """
    lam = _check_hazards(dataset, grid, hazards)
    mask = np.arange(grid.n_intervals)[None, :] <= grid.exit_index[:, None]
    cum = np.sum(np.where(mask, lam * grid.exposure, 0.0))
    rows = np.arange(dataset.n)
    events = np.sum(dataset.status * np.log(lam[rows, grid.exit_index]))
    return float(-cum + events)


# --- flat risk-set layout ---------------------------------------------------------


@dataclass(frozen=True)
class RiskSetLayout:
    """All at-risk (individual, interval) pairs stacked interval by interval.

    Within interval ``j`` the rows are individuals ordered by decreasing
    observed time, so the first ``n_j`` rows of the reordered design form the
    interval's design block.  ``design`` carries a leading intercept column.
    """

    individual: np.ndarray
    interval: np.ndarray
    offsets: np.ndarray
    exposure: np.ndarray
    fixed_tau: np.ndarray
    design: np.ndarray
    group: np.ndarray | None = field(default=None)

    @property
    def n_pairs(self) -> int:
        return self.individual.size

    @property
    def n_intervals(self) -> int:
        return self.offsets.size - 1

    def interval_slice(self, j: int) -> slice:
        return slice(int(self.offsets[j]), int(self.offsets[j + 1]))


def build_layout(dataset: SurvivalDataset, grid: IntervalGrid) -> RiskSetLayout:
    n_int = grid.n_intervals
    ind_parts, int_parts = [], []
    for j in range(n_int):
        members = grid.order[: grid.at_risk[j]]
        ind_parts.append(members)
        int_parts.append(np.full(members.size, j))
    individual = np.concatenate(ind_parts) if ind_parts else np.zeros(0, dtype=np.int64)
    interval = np.concatenate(int_parts) if int_parts else np.zeros(0, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(grid.at_risk)])
    exposure = grid.exposure[individual, interval]
    fixed_tau = (dataset.status[individual] == 1) & (grid.exit_index[individual] == interval)
    if dataset.time_varying:
        full = dataset.covariates
        if full.shape[1] < n_int:
            full = np.concatenate(
                [full, np.full((full.shape[0], n_int - full.shape[1], full.shape[2]), np.nan)], axis=1
            )
        cov = full[individual, interval]
    else:
        cov = dataset.covariates[individual]
    design = np.column_stack([np.ones(individual.size), cov])
    group = None if dataset.group is None else dataset.group[individual]
    return RiskSetLayout(
        individual=individual,
        interval=interval,
        offsets=offsets,
        exposure=exposure,
        fixed_tau=fixed_tau,
        design=np.ascontiguousarray(design),
        group=group,
    )


# --- file loading -------------------------------------------------------------------


@dataclass(frozen=True)
class Schema:
    """Column mapping for :func:`load_dataset`.

    Presence of ``interval`` (together with ``id``) marks long format with one
    row per individual and 1-based interval index.
    """

    time: str
    status: str
    covariates: tuple[str, ...] = ()
    group: str | None = None
    id: str | None = None
    interval: str | None = None

    @property
    def long_format(self) -> bool:
        return self.interval is not None


def _sniff_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _parse_float(value: str, column: str, rownum: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"row {rownum}: non-numeric value {value!r} in column {column!r}") from None
    if not math.isfinite(out):
        raise DataError(f"row {rownum}: non-finite value in column {column!r}")
    return out


def load_dataset(path: str | Path, schema: Schema) -> SurvivalDataset:
    """Read a comma- or tab-delimited file with header into a dataset.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such data file")
    with path.open(encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.strip():
            raise DataError(f"{path}: empty file")
        delim = _sniff_delimiter(header)
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        columns = [c.strip() for c in (reader.fieldnames or [])]
        reader.fieldnames = columns
        required = [schema.time, schema.status, *schema.covariates]
        required += [c for c in (schema.group, schema.id, schema.interval) if c is not None]
        missing = [c for c in required if c not in columns]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        if schema.long_format and schema.id is None:
            raise DataError("long format requires an id column")
        rows = list(reader)

    if not rows:
        raise DataError(f"{path}: no data rows")

    records = []
    for offset, row in enumerate(rows):
        rownum = offset + 2
        if any(row.get(c) is None or row.get(c).strip() == "" for c in required):
            blank = [c for c in required if row.get(c) is None or row.get(c).strip() == ""]
            raise DataError(f"row {rownum}: missing value in column(s) {blank}")
        t = _parse_float(row[schema.time], schema.time, rownum)
        d = _parse_float(row[schema.status], schema.status, rownum)
        if d not in (0.0, 1.0):
            raise DataError(f"row {rownum}: status must be 0 or 1, got {row[schema.status]!r}")
        if t <= 0:
            raise DataError(f"row {rownum}: observed time must be positive")
        z = [_parse_float(row[c], c, rownum) for c in schema.covariates]
        rec = {"rownum": rownum, "time": t, "status": int(d), "z": z}
        if schema.group is not None:
            rec["group"] = row[schema.group].strip()
        if schema.id is not None:
            rec["id"] = row[schema.id].strip()
        if schema.long_format:
            j = _parse_float(row[schema.interval], schema.interval, rownum)
            if j != int(j) or j < 1:
                raise DataError(f"row {rownum}: interval index must be a positive integer")
            rec["interval"] = int(j)
        records.append(rec)

    if schema.long_format:
        return _assemble_long(records, schema)
    return _assemble_static(records, schema)


def _group_codes(labels_in_order: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    labels: dict[str, int] = {}
    codes = []
    for lab in labels_in_order:
        codes.append(labels.setdefault(lab, len(labels)))
    return np.asarray(codes, dtype=np.int64), tuple(labels)


def _assemble_static(records: list[dict], schema: Schema) -> SurvivalDataset:
    if schema.id is not None:
        seen: dict[str, int] = {}
        for rec in records:
            if rec["id"] in seen:
                raise DataError(f"row {rec['rownum']}: duplicate id {rec['id']!r}")
            seen[rec["id"]] = rec["rownum"]
    group = labels = None
    if schema.group is not None:
        group, labels = _group_codes([r["group"] for r in records])
    return SurvivalDataset(
        time=np.array([r["time"] for r in records]),
        status=np.array([r["status"] for r in records]),
        covariates=np.array([r["z"] for r in records], dtype=float).reshape(len(records), -1),
        covariate_names=tuple(schema.covariates),
        group=group,
        group_labels=labels or (),
        ids=tuple(r["id"] for r in records) if schema.id is not None else (),
    )


def _assemble_long(records: list[dict], schema: Schema) -> SurvivalDataset:
    by_id: dict[str, list[dict]] = {}
    for rec in records:
        by_id.setdefault(rec["id"], []).append(rec)
    k = len(schema.covariates)
    ids = list(by_id)
    j_max = max(r["interval"] for r in records)
    cov = np.full((len(ids), j_max, k), np.nan)
    time, status, groups = [], [], []
    for i, ident in enumerate(ids):
        recs = by_id[ident]
        seen: dict[int, int] = {}
        for rec in recs:
            if rec["interval"] in seen:
                raise DataError(
                    f"row {rec['rownum']}: duplicate (id, interval) = ({ident}, {rec['interval']})"
                )
            seen[rec["interval"]] = rec["rownum"]
            cov[i, rec["interval"] - 1] = rec["z"]
        first = recs[0]
        for rec in recs[1:]:
            if rec["time"] != first["time"] or rec["status"] != first["status"]:
                raise DataError(f"row {rec['rownum']}: time/status differ within id {ident}")
            if schema.group is not None and rec["group"] != first["group"]:
                raise DataError(f"row {rec['rownum']}: group differs within id {ident}")
        top = max(seen)
        gaps = sorted(set(range(1, top + 1)) - set(seen))
        if gaps:
            raise DataError(f"id {ident} lacks covariate row for interval {gaps[0]} while at risk")
        time.append(first["time"])
        status.append(first["status"])
        if schema.group is not None:
            groups.append(first["group"])
    group = labels = None
    if schema.group is not None:
        group, labels = _group_codes(groups)
    return SurvivalDataset(
        time=np.array(time),
        status=np.array(status),
        covariates=cov,
        covariate_names=tuple(schema.covariates),
        group=group,
        group_labels=labels or (),
        ids=tuple(ids),
    )
