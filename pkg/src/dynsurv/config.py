"""Run specification: a flat ``section.key = value`` text format.

Example::

    data.path = cohort.csv
    data.time = time
    data.status = status
    data.covariates = age, stage
    grid.every = 1
    prior.theta.family = triple
    prior.phi.learn_global = false
    mcmc.iterations = 10000

Prediction rows in ``predict.covariates`` are separated by ``;`` and ``-``
stands for a row without covariates.  Lines starting with ``#`` are comments.  Unknown keys are errors.
"""
from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import Schema
from .engine import ChainConfig, ModelPriors
from .errors import ConfigError, DynSurvError
from .factor import SVPrior
from .shrinkage import PriorConfig

PRIOR_BLOCKS = ("theta", "beta", "phi")
_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_PRIOR_KEYS = {f.name: f.type for f in fields(PriorConfig)}
_CHAIN_KEYS = {f.name: f.type for f in fields(ChainConfig)}
_SV_KEYS = {f.name: f.type for f in fields(SVPrior)}

_DATA_KEYS = ("path", "time", "status", "covariates", "group", "id", "interval")


def _all_keys() -> list[str]:
    keys = [f"data.{k}" for k in _DATA_KEYS]
    keys += ["grid.points", "grid.every"]
    keys += [f"prior.{b}.{k}" for b in PRIOR_BLOCKS for k in _PRIOR_KEYS]
    keys += [f"sv.{k}" for k in _SV_KEYS]
    keys += [f"mcmc.{k}" for k in _CHAIN_KEYS]
    keys += ["predict.covariates", "predict.group", "predict.seed", "output.dir"]
    return keys


VALID_KEYS = tuple(_all_keys())


@dataclass(frozen=True)
class RunSpec:
    data_path: str
    schema: Schema
    grid_points: tuple[float, ...] | None = None
    grid_every: int | None = None
    priors: ModelPriors = field(default_factory=ModelPriors)
    chain: ChainConfig = field(default_factory=ChainConfig)
    output_dir: str | None = None
    predictions: tuple[tuple[float, ...], ...] = ()
    predict_group: str | None = None
    predict_seed: int | None = None
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        if self.grid_points is not None and self.grid_every is not None:
            raise ConfigError("grid: give either grid.points or grid.every, not both")
        if self.grid_points is None and self.grid_every is None:
            object.__setattr__(self, "grid_every", 1)
        if self.grid_every is not None and self.grid_every < 1:
            raise ConfigError("grid.every: must be a positive integer")
        k = len(self.schema.covariates)
        for row in self.predictions:
            if len(row) != k:
                raise ConfigError(f"predict.covariates: each row needs {k} values, got {len(row)}")
        for name in PRIOR_BLOCKS:
            try:
                getattr(self.priors, name).resolved()
            except ConfigError as exc:
                raise ConfigError(f"prior.{name}: {exc}") from None

    @property
    def resolved_data_path(self) -> Path:
        p = Path(self.data_path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def has_factor(self) -> bool:
        return self.schema.group is not None


# --- value parsing ---------------------------------------------------------------------


def _parse_bool(key: str, raw: str) -> bool:
    try:
        return _BOOL_WORDS[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected true/false, got {raw!r}") from None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        val = float(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{key}: must be finite, got {raw!r}")
    return val


def _parse_typed(key: str, raw: str, annotation: str):
    ann = str(annotation)
    if "bool" in ann:
        return _parse_bool(key, raw)
    if ann.startswith("int"):
        return _parse_int(key, raw)
    if "float" in ann:
        return _parse_float(key, raw)
    return raw.strip()


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


# argument names of the original R interface, mapped to keys here
ALIASES = {
    "mod_type": "prior.theta.family",
    "mod_type_phi": "prior.phi.family",
    "learn_a_xi": "prior.theta.learn_a",
    "learn_c_xi": "prior.theta.learn_c",
    "learn_kappa2_B": "prior.theta.learn_global",
    "learn_a_tau": "prior.beta.learn_a",
    "learn_c_tau": "prior.beta.learn_c",
    "learn_lambda2_B": "prior.beta.learn_global",
    "learn_a_phi": "prior.phi.learn_a",
    "learn_c_phi": "prior.phi.learn_c",
    "learn_lambda2_B_phi": "prior.phi.learn_global",
    "niter": "mcmc.iterations",
    "nburn": "mcmc.burn_in",
    "nthin": "mcmc.thin",
    "divisionpoints": "grid.points",
    "group": "data.group",
}


def nearest_key(key: str) -> str | None:
    candidates = list(VALID_KEYS) + list(ALIASES)
    near = difflib.get_close_matches(key, candidates, n=1, cutoff=0.0)
    if not near:
        return None
    return ALIASES.get(near[0], near[0])


def _unknown_key(key: str) -> ConfigError:
    near = nearest_key(key)
    hint = f"; nearest valid key is {near!r}" if near else ""
    return ConfigError(f"unknown key {key!r}{hint}")


def parse_text(text: str, base_dir: str | Path = ".") -> RunSpec:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in VALID_KEYS:
            raise _unknown_key(key)
        if key in entries:
            raise ConfigError(f"{key}: given more than once (line {lineno})")
        entries[key] = value

    for req in ("data.path", "data.time", "data.status"):
        if not entries.get(req):
            raise ConfigError(f"{req}: required key missing")

    schema = Schema(
        time=entries["data.time"],
        status=entries["data.status"],
        covariates=tuple(_split_list(entries.get("data.covariates", ""))),
        group=entries.get("data.group") or None,
        id=entries.get("data.id") or None,
        interval=entries.get("data.interval") or None,
    )

    grid_points = None
    if "grid.points" in entries:
        grid_points = tuple(_parse_float("grid.points", v) for v in _split_list(entries["grid.points"]))
    grid_every = _parse_int("grid.every", entries["grid.every"]) if "grid.every" in entries else None

    blocks = {}
    for name in PRIOR_BLOCKS:
        kwargs = {}
        prefix = f"prior.{name}."
        for key, raw in entries.items():
            if key.startswith(prefix):
                sub = key[len(prefix):]
                kwargs[sub] = _parse_typed(key, raw, _PRIOR_KEYS[sub])
        blocks[name] = PriorConfig(**kwargs)

    sv_kwargs = {k[3:]: _parse_typed(k, v, _SV_KEYS[k[3:]]) for k, v in entries.items() if k.startswith("sv.")}
    try:
        sv = SVPrior(**sv_kwargs)
    except DynSurvError as exc:
        raise ConfigError(f"sv: {exc}") from None

    chain_kwargs = {k[5:]: _parse_typed(k, v, _CHAIN_KEYS[k[5:]]) for k, v in entries.items()
                    if k.startswith("mcmc.")}
    try:
        chain = ChainConfig(**chain_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"mcmc: {exc}") from None

    predictions = ()
    if entries.get("predict.covariates"):
        rows = [r.strip() for r in entries["predict.covariates"].split(";") if r.strip()]
        # "-" is a row without covariates (baseline survival)
        predictions = tuple(() if r == "-" else tuple(_parse_float("predict.covariates", v) for v in _split_list(r))
                            for r in rows)
    predict_seed = _parse_int("predict.seed", entries["predict.seed"]) if "predict.seed" in entries else None

    return RunSpec(
        data_path=entries["data.path"],
        schema=schema,
        grid_points=grid_points,
        grid_every=grid_every,
        priors=ModelPriors(blocks["theta"], blocks["beta"], blocks["phi"], sv),
        chain=chain,
        output_dir=entries.get("output.dir") or None,
        predictions=predictions,
        predict_group=entries.get("predict.group") or None,
        predict_seed=predict_seed,
        base_dir=str(base_dir),
    )


def parse_run_spec(path: str | Path) -> RunSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read spec file {path}: {exc.strerror}") from None
    return parse_text(text, base_dir=path.parent)


# --- writing --------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_spec(spec: RunSpec) -> str:
    """Text form that :func:`parse_text` maps back to an equal spec."""
    sc = spec.schema
    lines = [f"data.path = {spec.data_path}", f"data.time = {sc.time}", f"data.status = {sc.status}"]
    if sc.covariates:
        lines.append("data.covariates = " + ", ".join(sc.covariates))
    for key in ("group", "id", "interval"):
        val = getattr(sc, key)
        if val is not None:
            lines.append(f"data.{key} = {val}")
    if spec.grid_points is not None:
        lines.append("grid.points = " + ", ".join(repr(float(p)) for p in spec.grid_points))
    else:
        lines.append(f"grid.every = {spec.grid_every}")
    for name in PRIOR_BLOCKS:
        cfg = getattr(spec.priors, name)
        for f in fields(PriorConfig):
            val = getattr(cfg, f.name)
            if val is not None:
                lines.append(f"prior.{name}.{f.name} = {_fmt(val)}")
    for f in fields(SVPrior):
        lines.append(f"sv.{f.name} = {_fmt(getattr(spec.priors.sv, f.name))}")
    for f in fields(ChainConfig):
        lines.append(f"mcmc.{f.name} = {_fmt(getattr(spec.chain, f.name))}")
    if spec.predictions:
        rows = "; ".join(", ".join(repr(float(v)) for v in row) or "-" for row in spec.predictions)
        lines.append(f"predict.covariates = {rows}")
    if spec.predict_group is not None:
        lines.append(f"predict.group = {spec.predict_group}")
    if spec.predict_seed is not None:
        lines.append(f"predict.seed = {spec.predict_seed}")
    if spec.output_dir is not None:
        lines.append(f"output.dir = {spec.output_dir}")
    return "\n".join(lines) + "\n"


def with_overrides(spec: RunSpec, seed: int | None = None, chains: int | None = None,
                   output_dir: str | None = None) -> RunSpec:
    chain = spec.chain
    if seed is not None:
        chain = replace(chain, seed=seed)
    if chains is not None:
        chain = replace(chain, chains=chains)
    return replace(spec, chain=chain, output_dir=output_dir if output_dir is not None else spec.output_dir)
