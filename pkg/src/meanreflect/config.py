"""Run configuration: YAML files, flag overrides, schema validation, object builders.

Precedence is flags > file > defaults. Unknown keys anywhere are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .drivers import JumpLaw, make_term
from .errors import InvalidArgument
from .grid_paths import GridPath, PiecewisePath, TimeGrid
from .mean_map import make_h

COMMANDS = ("sp", "mean-sp", "simulate", "picard", "converge", "invest", "verify")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "particles": 1000,
    "steps": 100,
    "horizon": 1.0,
    "tol": 1e-10,
    "workers": 1,
    "out": "runs",
}

_COMMON = set(DEFAULTS) | {"command", "meta"}
_SDE = {"x0", "terms", "h", "l", "u", "fine_steps"}
SCHEMA: dict[str, set[str]] = {
    "sp": _COMMON | {"y", "l", "u"},
    "mean-sp": _COMMON | _SDE,
    "simulate": _COMMON | _SDE,
    "picard": _COMMON | _SDE | {"picard_tol", "max_iter"},
    "converge": _COMMON | _SDE | {"n_list", "reference_n"},
    "invest": _COMMON | {"x0", "b", "sigma", "s0", "premium", "reserve_sigma", "claim_rate",
                         "claims", "h", "l", "u"},
    "verify": _COMMON | {"input"},
}
META_KEYS = {"budget_seconds", "description"}
# keys that do not influence results and are excluded from the run id
_NON_RESULT = {"workers", "out", "meta"}


class ConfigError(InvalidArgument):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def run_id(self) -> str:
        payload = {k: v for k, v in self.values.items() if k not in _NON_RESULT}
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()
        return f"{self.command}-{digest[:12]}"

    def result_dict(self) -> dict:
        return {k: v for k, v in sorted(self.values.items()) if k not in _NON_RESULT}


def load_yaml(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{p}: parse error at {where}: {exc.problem}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def scenario_path(name: str) -> Path:
    base = resources.files("meanreflect") / "scenarios"
    p = Path(str(base / f"{name}.yaml"))
    if not p.is_file():
        known = sorted(q.stem for q in Path(str(base)).glob("*.yaml"))
        raise ConfigError(f"unknown scenario {name!r}; shipped: {known}")
    return p


def list_scenarios() -> list[str]:
    base = Path(str(resources.files("meanreflect") / "scenarios"))
    return sorted(p.stem for p in base.glob("*.yaml"))


def parse_config(file_data: Mapping | None = None, overrides: Mapping | None = None,
                 command: str | None = None) -> RunConfig:
    """Merge defaults, file contents and overrides, then validate against the schema."""
    merged = dict(DEFAULTS)
    merged.update(copy.deepcopy(dict(file_data or {})))
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    if command is not None:
        if "command" in (file_data or {}) and file_data["command"] != command:
            raise ConfigError(f"command {command!r} conflicts with file command {file_data['command']!r}")
        merged["command"] = command
    cmd = merged.pop("command", None)
    if cmd is None:
        raise ConfigError("no command given")
    if cmd not in SCHEMA:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {list(COMMANDS)}")
    unknown = sorted(set(merged) - SCHEMA[cmd] - {"command"})
    if unknown:
        raise ConfigError(f"unknown key(s) for command {cmd!r}: {', '.join(unknown)}")
    meta = merged.get("meta") or {}
    if not isinstance(meta, dict):
        raise ConfigError("meta must be a mapping")
    bad_meta = sorted(set(meta) - META_KEYS)
    if bad_meta:
        raise ConfigError(f"unknown key(s) in meta: {', '.join(bad_meta)}")
    _check_types(merged)
    return RunConfig(cmd, merged)


def _check_types(v: dict):
    def need(key, kind, positive=False):
        x = v[key]
        if kind is int and (isinstance(x, bool) or not isinstance(x, int)):
            raise ConfigError(f"key {key!r} must be an integer, got {x!r}")
        if kind is float:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"key {key!r} must be a number, got {x!r}")
            v[key] = float(x)
        if positive and not v[key] > 0:
            raise ConfigError(f"key {key!r} must be positive, got {x!r}")

    need("seed", int)
    if not 0 <= v["seed"] < 2**64:
        raise ConfigError("key 'seed' must be an unsigned 64-bit integer")
    need("particles", int, True)
    need("steps", int, True)
    need("horizon", float, True)
    need("tol", float, True)
    need("workers", int, True)
    if not isinstance(v["out"], str):
        raise ConfigError("key 'out' must be a path string")
    for key in ("fine_steps", "reference_n", "max_iter"):
        if key in v and v[key] is not None:
            need(key, int, True)
    if "picard_tol" in v:
        need("picard_tol", float, True)
    if "n_list" in v:
        if not isinstance(v["n_list"], list) or not all(isinstance(n, int) and n > 0 for n in v["n_list"]):
            raise ConfigError("key 'n_list' must be a list of positive integers")


# ---------------------------------------------------------------------------
# Builders


def grid_of(cfg: RunConfig) -> TimeGrid:
    return TimeGrid.uniform(cfg["steps"], cfg["horizon"])


def path_source(spec, grid: TimeGrid, key: str):
    """Path spec: null, a number, ``{values: [...]}`` on the run grid, or a piecewise spec."""
    if spec is None:
        return None
    if isinstance(spec, bool):
        raise ConfigError(f"key {key!r}: expected a path spec")
    if isinstance(spec, (int, float)):
        return float(spec)
    if not isinstance(spec, dict):
        raise ConfigError(f"key {key!r}: expected a number, null or a mapping")
    if "values" in spec:
        if set(spec) != {"values"}:
            raise ConfigError(f"key {key!r}: 'values' cannot be combined with {sorted(set(spec) - {'values'})}")
        vals = np.asarray(spec["values"], dtype=float)
        if vals.size != len(grid):
            raise ConfigError(f"key {key!r}: {vals.size} values for a grid of {len(grid)} points")
        return GridPath(grid, vals)
    try:
        return PiecewisePath.from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None


def build_h(cfg: RunConfig):
    try:
        return make_h(cfg.get("h", "identity") or "identity", cfg["horizon"])
    except InvalidArgument as exc:
        raise ConfigError(f"key 'h': {exc}") from None


def build_terms(cfg: RunConfig):
    terms = cfg.get("terms")
    if terms is None:
        raise ConfigError("key 'terms' is required for this command")
    if isinstance(terms, dict):
        terms = [terms]
    try:
        return [make_term(t) for t in terms]
    except InvalidArgument as exc:
        raise ConfigError(f"key 'terms': {exc}") from None


def build_x0(cfg: RunConfig):
    from .sde import make_x0

    try:
        return make_x0(cfg.get("x0", 0.0))
    except InvalidArgument as exc:
        raise ConfigError(f"key 'x0': {exc}") from None


def build_simulation(cfg: RunConfig):
    from .sde import SimulationConfig

    grid = grid_of(cfg)
    return SimulationConfig(
        x0=build_x0(cfg), terms=build_terms(cfg), h=build_h(cfg),
        lower=path_source(cfg.get("l"), grid, "l"), upper=path_source(cfg.get("u"), grid, "u"),
        n=cfg["steps"], q=cfg["horizon"], N=cfg["particles"], seed=cfg["seed"], tol=cfg["tol"],
        workers=cfg["workers"], fine_n=cfg.get("fine_steps"), store_paths=True,
    )


def build_investment(cfg: RunConfig):
    from .investment import InvestmentParams

    grid = grid_of(cfg)
    claims = cfg.get("claims")
    if claims is not None:
        try:
            claims = JumpLaw(**claims)
        except TypeError as exc:
            raise ConfigError(f"key 'claims': {exc}") from None
    nums = {}
    for key, default in (("x0", 1.0), ("b", 0.05), ("sigma", 0.2), ("s0", 1.0), ("premium", 0.0),
                         ("reserve_sigma", 0.0), ("claim_rate", 0.0)):
        x = cfg.get(key, default)
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"key {key!r} must be a number")
        nums[key] = float(x)
    return InvestmentParams(
        claims=claims, h=build_h(cfg),
        lower=path_source(cfg.get("l"), grid, "l"), upper=path_source(cfg.get("u"), grid, "u"),
        **nums,
    )
