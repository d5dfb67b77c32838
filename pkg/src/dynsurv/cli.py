"""Command line interface: ``dynsurv fit | predict | validate | summarize``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunSpec, parse_run_spec, with_overrides, write_run_spec
from .data import SurvivalDataset, compute_exposures, division_points, load_dataset
from .engine import PosteriorDraws, posterior_predictive, run_chains
from .errors import ConfigError, DataError, DomainError, DynSurvError, NumericalError
from .export import read_draws, sha256_file, write_draws, write_json, write_summary
from .geweke import geweke_test
from .summary import summarize

log = logging.getLogger("dynsurv")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_VALIDATION = 5

PREDICTION_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
PREDICT_DRAWS = ("beta", "h", "phi", "a_phi", "c_phi", "lambda2_B_phi")


def _prediction_rng(seed: int) -> np.random.Generator:
    # a fresh stream per row: identical rows give identical samples
    return np.random.default_rng([seed, 0x5EED])


def _group_index(labels: list[str], label: str | None) -> int | None:
    if label is None:
        return None
    try:
        return labels.index(label)
    except ValueError:
        log.warning("group %r not in the fitted data; treating it as a new group", label)
        return None


def predict_rows(chains: list[PosteriorDraws], rows: np.ndarray, groups: list[str | None],
                 labels: list[str], seed: int) -> list[list[tuple[int, int, float]]]:
    out = []
    for row, grp in zip(rows, groups):
        rng = _prediction_rng(seed)
        g = _group_index(labels, grp)
        samples = []
        for c, draws in enumerate(chains):
            t = posterior_predictive(draws, row, rng, group=g)
            samples.extend(zip([c] * t.size, draws.iterations.tolist(), t.tolist()))
        out.append(samples)
    return out


def write_predictions(samples: list[list[tuple[int, int, float]]], path: Path, summary_path: Path) -> list[Path]:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "chain", "iteration", "time"])
        for r, rows in enumerate(samples, start=1):
            for c, it, t in rows:
                w.writerow([r, c, it, repr(t)])
    with summary_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "n", "mean", *(f"q{q * 100:g}" for q in PREDICTION_QUANTILES)])
        for r, rows in enumerate(samples, start=1):
            t = np.array([x[2] for x in rows])
            w.writerow([r, t.size, repr(float(t.mean())), *(repr(float(q)) for q in np.quantile(t, PREDICTION_QUANTILES))])
    return [path, summary_path]


# --- fit ------------------------------------------------------------------------------


def load_for_spec(spec: RunSpec) -> tuple[SurvivalDataset, np.ndarray]:
    dataset = load_dataset(spec.resolved_data_path, spec.schema)
    if spec.grid_points is not None:
        points = np.asarray(spec.grid_points, dtype=float)
    else:
        points = division_points(dataset.time, dataset.status, spec.grid_every)
    return dataset, points


def _diagnostics(chains: list[PosteriorDraws], rows: list[dict]) -> dict:
    ess = [r["ess"] for r in rows]
    rhat = [r["rhat"] for r in rows if np.isfinite(r["rhat"])]
    return {
        "chains": [dict(c.diagnostics, chain=c.meta["chain"], seed=c.meta["seed"]) for c in chains],
        "min_ess": min(ess) if ess else None,
        "max_rhat": max(rhat) if rhat else None,
    }


def cmd_fit(spec: RunSpec) -> int:
    if spec.output_dir is None:
        raise ConfigError("output.dir: required for fit (or pass --out)")
    out = Path(spec.output_dir)
    dataset, points = load_for_spec(spec)
    grid = compute_exposures(dataset, points)
    log.info("fitting N=%d K=%d J=%d, %d chain(s)", dataset.n, dataset.k, grid.n_intervals, spec.chain.chains)
    chains = run_chains(dataset, grid, spec.priors, spec.chain)

    out.mkdir(parents=True, exist_ok=True)
    files = write_draws(chains, out / "draws")
    rows = summarize(chains)
    files.append(write_summary(rows, out / "summary.csv"))
    files.append(write_json(_diagnostics(chains, rows), out / "diagnostics.json"))
    if spec.predictions:
        seed = spec.predict_seed if spec.predict_seed is not None else spec.chain.seed
        samples = predict_rows(chains, np.asarray(spec.predictions, dtype=float),
                               [spec.predict_group] * len(spec.predictions), list(dataset.group_labels), seed)
        files += write_predictions(samples, out / "predictions.csv", out / "predictions_summary.csv")
    spec_path = out / "run.spec"
    spec_path.write_text(write_run_spec(spec), encoding="utf-8")
    files.append(spec_path)

    manifest = {
        "package": "dynsurv",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": spec.chain.seed,
        "chains": spec.chain.chains,
        "retained": spec.chain.retained,
        "covariate_names": list(dataset.covariate_names),
        "group_labels": list(dataset.group_labels),
        "points": points.tolist(),
        "families": chains[0].meta["families"],
        "spec": write_run_spec(spec),
        "files": {str(f.relative_to(out)): sha256_file(f) for f in files},
    }
    write_json(manifest, out / "manifest.json")
    log.info("wrote %d files to %s", len(files) + 1, out)
    return EXIT_OK


# --- predict --------------------------------------------------------------------------


def _read_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError:
        raise DataError(f"{run_dir}: no manifest.json (not a fitted run directory)") from None


def read_covariate_file(path: Path, names: list[str]) -> tuple[np.ndarray, list[str | None]]:
    if not path.is_file():
        raise DataError(f"{path}: no such covariate file")
    with path.open(encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.strip():
            raise DataError(f"{path}: empty covariate file")
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter="\t" if "\t" in header else ",")
        cols = [c.strip() for c in reader.fieldnames or []]
        reader.fieldnames = cols
        covs = [c for c in cols if c != "group"]
        if sorted(covs) != sorted(names):
            raise DataError(f"{path}: covariate columns {covs} do not match the fitted model {names}")
        rows, groups = [], []
        for n, rec in enumerate(reader, start=2):
            try:
                rows.append([float(rec[c]) for c in names])
            except (TypeError, ValueError):
                raise DataError(f"{path}: row {n}: non-numeric covariate value") from None
            groups.append(rec["group"].strip() if "group" in cols and rec.get("group") else None)
    if not rows:
        raise DataError(f"{path}: no covariate rows")
    return np.asarray(rows, dtype=float).reshape(len(rows), len(names)), groups


def cmd_predict(run_dir: Path, covariate_file: Path, out: Path | None, seed: int | None) -> int:
    manifest = _read_manifest(run_dir)
    names = manifest["covariate_names"]
    rows, groups = read_covariate_file(covariate_file, names)
    meta = {"points": manifest["points"], "families": manifest["families"], "seed": manifest["seed"]}
    chains = read_draws(run_dir / "draws", meta, names=PREDICT_DRAWS)
    seed = manifest["seed"] if seed is None else seed
    samples = predict_rows(chains, rows, groups, manifest["group_labels"], seed)
    out = out or run_dir
    out.mkdir(parents=True, exist_ok=True)
    stem = covariate_file.stem
    write_predictions(samples, out / f"predictions_{stem}.csv", out / f"predictions_{stem}_summary.csv")
    return EXIT_OK


# --- summarize / validate -----------------------------------------------------------


def cmd_summarize(run_dir: Path) -> int:
    manifest = _read_manifest(run_dir)
    meta = {"points": manifest["points"], "families": manifest["families"], "seed": manifest["seed"]}
    chains = read_draws(run_dir / "draws", meta)
    rows = summarize(chains)
    write_summary(rows, run_dir / "summary.csv")
    for r in rows:
        if r["quantity"] in ("theta", "beta_mean"):
            idx = ",".join(map(str, r["index"]))
            print(f"{r['quantity']}[{idx}]  median {r['median']:.4g}  95% ({r['q2.5']:.4g}, {r['q97.5']:.4g})"
                  f"  ess {r['ess']:.0f}")
    return EXIT_OK


def cmd_validate(family: str, factor: bool, sweeps: int, seed: int) -> int:
    res = geweke_test(family, factor=factor, sweeps=sweeps, seed=seed)
    print(f"joint-distribution check: family={family} factor={factor} sweeps={sweeps}")
    for name, a, b, z in zip(res.names, res.mc_mean, res.sc_mean, res.z):
        print(f"  {name:18s} prior {a: .5f}  sampler {b: .5f}  z {z: .2f}")
    ok = res.passed()
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


# --- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynsurv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the sampler and write draws, summaries and a manifest")
    fit.add_argument("--spec", required=True, type=Path)
    fit.add_argument("--out", type=Path)
    fit.add_argument("--seed-override", type=int)
    fit.add_argument("--chains", type=int)

    pred = sub.add_parser("predict", help="posterior-predictive survival times for new covariates")
    pred.add_argument("--run", required=True, type=Path, help="directory written by fit")
    pred.add_argument("--covariates", required=True, type=Path)
    pred.add_argument("--out", type=Path)
    pred.add_argument("--seed-override", type=int)

    val = sub.add_parser("validate", help="joint-distribution check of the sampler")
    val.add_argument("--family", choices=("ridge", "triple"), default="ridge")
    val.add_argument("--factor", action="store_true")
    val.add_argument("--sweeps", type=int, default=100_000)
    val.add_argument("--seed-override", type=int, default=0)

    summ = sub.add_parser("summarize", help="recompute summary.csv of a fitted run")
    summ.add_argument("--run", required=True, type=Path)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            spec = parse_run_spec(args.spec)
            spec = with_overrides(spec, seed=args.seed_override, chains=args.chains,
                                  output_dir=str(args.out) if args.out else None)
            return cmd_fit(spec)
        if args.command == "predict":
            return cmd_predict(args.run, args.covariates, args.out, args.seed_override)
        if args.command == "validate":
            return cmd_validate(args.family, args.factor, args.sweeps, args.seed_override)
        return cmd_summarize(args.run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DynSurvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
