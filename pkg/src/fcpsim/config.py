"""Experiment configuration files (TOML).

See ``docs/config.md`` for the schema.  States are numbered from 1 in
configuration files.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chain import STOCHASTIC_TOL
from .distributions import JumpLaw, WaitingTimeLaw
from .engine import ProcessSpec

EXPERIMENT_KINDS = ("msd", "fpt", "occupation", "oracle-msd", "oracle-fpt", "analyze-chain", "selftest")


class ConfigError(Exception):
    """Base class for configuration problems (exit status 2)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    spec: ProcessSpec | None
    t_min: float = 1e2
    t_max: float = 1e6
    points_per_decade: int = 40
    bins_per_decade: int = 20
    n_paths: int = 10_000
    master_seed: int = 0
    barrier: float = 1.0
    x0: float = 0.0
    target_state: int = 1
    t: float = 1e5
    n_nodes: int = 32
    output_dir: str = "out"
    prefix: str = "run"
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _num(tbl: dict, key: str, path: str, default=None, *, positive=False, integer=False):
    if key not in tbl:
        if default is None:
            raise ValidationError(f"{path}.{key}", "required key is missing")
        return default
    val = tbl[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"{path}.{key}", f"expected a number, got {val!r}")
    if integer and not float(val).is_integer():
        raise ValidationError(f"{path}.{key}", f"expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ValidationError(f"{path}.{key}", "must be finite")
    if positive and val <= 0:
        raise ValidationError(f"{path}.{key}", f"must be positive, got {val!r}")
    return int(val) if integer else float(val)


def _vector(val, key: str) -> list[float]:
    if not isinstance(val, list) or not val:
        raise ValidationError(key, "expected a non-empty array of numbers")
    out = []
    for i, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ValidationError(f"{key}[{i}]", f"expected a finite number, got {x!r}")
        out.append(float(x))
    return out


def _parse_model(model: Any) -> ProcessSpec:
    if not isinstance(model, dict):
        raise ValidationError("model", "expected a table")
    if "matrix" not in model:
        raise ValidationError("model.matrix", "required key is missing")
    rows = model["matrix"]
    if not isinstance(rows, list) or not rows:
        raise ValidationError("model.matrix", "expected an array of rows")
    n = len(rows)
    matrix = []
    for i, row in enumerate(rows):
        r = _vector(row, f"model.matrix[{i}]")
        if len(r) != n:
            raise ValidationError(f"model.matrix[{i}]", f"expected {n} entries, got {len(r)}")
        if any(x < 0 for x in r):
            raise ValidationError(f"model.matrix[{i}]", "entries must be nonnegative")
        if abs(sum(r) - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"model.matrix[{i}]", f"row sum is {sum(r)!r}, expected 1")
        matrix.append(r)

    if "init" not in model:
        raise ValidationError("model.init", "required key is missing")
    init = _vector(model["init"], "model.init")
    if len(init) != n:
        raise ValidationError("model.init", f"expected {n} entries, got {len(init)}")
    if any(x < 0 for x in init):
        raise ValidationError("model.init", "weights must be nonnegative")
    if abs(sum(init) - 1.0) > STOCHASTIC_TOL:
        raise ValidationError("model.init", f"weights sum to {sum(init)!r}, expected 1")

    sigma = _num(model, "sigma", "model", 1.0, positive=True)
    states = model.get("states")
    if not isinstance(states, list) or len(states) != n:
        raise ValidationError("model.states", f"expected an array of {n} state tables")
    laws = []
    for i, st in enumerate(states):
        key = f"model.states[{i}]"
        if not isinstance(st, dict):
            raise ValidationError(key, "expected a table")
        kind = st.get("kind", "stable")
        if kind not in ("stable", "pareto"):
            raise ValidationError(f"{key}.kind", f"unknown waiting-time kind {kind!r}")
        alpha = _num(st, "alpha", key)
        if not 0.0 < alpha < 1.0:
            raise ValidationError(f"{key}.alpha", f"alpha range: must lie in (0, 1), got {alpha!r}")
        if kind == "stable":
            laws.append(WaitingTimeLaw.stable(alpha, _num(st, "B_alpha", key, 1.0, positive=True)))
        else:
            if "B_alpha" in st:
                raise ValidationError(f"{key}.B_alpha", "Pareto laws take tau0; B_alpha is derived")
            laws.append(WaitingTimeLaw.pareto(alpha, _num(st, "tau0", key, 1.0, positive=True)))
    return ProcessSpec(matrix, init, tuple(laws), JumpLaw(sigma))


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse and fully validate a configuration document.

    ``kind`` (the command-line subcommand) takes precedence over
    ``experiment.kind``, so one model file can drive several experiments.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None

    exp = raw.get("experiment", {})
    if not isinstance(exp, dict):
        raise ValidationError("experiment", "expected a table")
    cfg_kind = kind if kind is not None else exp.get("kind")
    if cfg_kind is None:
        raise ValidationError("experiment.kind", "required key is missing")
    if cfg_kind not in EXPERIMENT_KINDS:
        raise ValidationError("experiment.kind", f"unrecognized experiment kind {cfg_kind!r}")

    spec = None
    if cfg_kind != "selftest" or "model" in raw:
        if "model" not in raw:
            raise ValidationError("model", "required table is missing")
        spec = _parse_model(raw["model"])

    out = raw.get("output", {})
    if not isinstance(out, dict):
        raise ValidationError("output", "expected a table")

    kw: dict[str, Any] = {}
    for key in ("t_min", "t_max", "t", "barrier"):
        if key in exp:
            kw[key] = _num(exp, key, "experiment", positive=True)
    if "x0" in exp:
        kw["x0"] = _num(exp, "x0", "experiment")
    for key in ("points_per_decade", "bins_per_decade", "n_paths", "n_nodes"):
        if key in exp:
            kw[key] = _num(exp, key, "experiment", positive=True, integer=True)
    if "master_seed" in exp:
        seed = _num(exp, "master_seed", "experiment", integer=True)
        if not 0 <= seed < 2 ** 64:
            raise ValidationError("experiment.master_seed", "must be an unsigned 64-bit integer")
        kw["master_seed"] = seed
    if "target_state" in exp:
        kw["target_state"] = _num(exp, "target_state", "experiment", integer=True)
    cfg = ExperimentConfig(kind=cfg_kind, spec=spec, raw=raw,
                           output_dir=str(out.get("directory", "out")),
                           prefix=str(out.get("prefix", cfg_kind)), **kw)

    if cfg.t_min >= cfg.t_max:
        raise ValidationError("experiment.t_min", "must be smaller than experiment.t_max")
    if cfg.n_nodes % 2:
        raise ValidationError("experiment.n_nodes", "must be even")
    if spec is not None and not 1 <= cfg.target_state <= spec.n_states:
        raise ValidationError("experiment.target_state", f"must lie in [1, {spec.n_states}]")
    if cfg.x0 >= cfg.barrier:
        raise ValidationError("experiment.x0", "start position must lie below experiment.barrier")
    if cfg_kind == "fpt" and cfg.t_max / 10 <= cfg.t_min:
        raise ValidationError("experiment.t_max", "must exceed ten times experiment.t_min for density bins")
    return cfg


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), kind)
