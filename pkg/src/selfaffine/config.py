"""Run configuration: a single JSON document describing a spec, a task and its parameters.

Layout::

    {"dimension": 1,
     "maps": [{"matrix": [[0.333]], "translation": [0], "probability": 0.5}, ...],
     "task": "tau",
     "params": {"q_grid": [0.25, 0.5, 2, 3]},
     "seed": 0, "budget": 2097152, "out_dir": "out"}
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .words import IFSSpec, SpecError

__all__ = ["TASKS", "ConfigError", "RunConfig", "parse_config", "load_config", "dump_config",
           "apply_override", "q_grid_from"]

TASKS = ("dq", "tau", "spectrum", "lyapunov", "closed-form", "regimes", "sample",
         "empirical-tau", "verify", "covering")

_TOP_KEYS = {"dimension", "maps", "task", "params", "seed", "budget", "out_dir"}
# params whose value is a list that must be strictly increasing
_SORTED = ("q_grid", "radii", "alpha_grid")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path into the document."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass(eq=False)
class RunConfig:
    spec: IFSSpec
    task: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    budget: int | None = None
    out_dir: str = "."

    def to_dict(self) -> dict:
        out = self.spec.to_dict()
        out.update({"task": self.task, "params": copy.deepcopy(self.params), "seed": self.seed,
                    "out_dir": self.out_dir})
        if self.budget is not None:
            out["budget"] = self.budget
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _check_params(task: str, params: dict) -> None:
    for key in _SORTED:
        if key in params:
            vals = params[key]
            if not isinstance(vals, list) or not vals:
                raise ConfigError("expected a non-empty list of numbers", f"params.{key}")
            try:
                arr = np.asarray(vals, dtype=float)
            except (TypeError, ValueError):
                raise ConfigError("expected numbers", f"params.{key}") from None
            if np.any(~np.isfinite(arr)):
                raise ConfigError("non-finite entry", f"params.{key}")
            if np.any(np.diff(arr) <= 0):
                raise ConfigError("grid must be strictly increasing", f"params.{key}")
    for key in ("N", "trials", "n", "families", "octaves"):
        if key in params and not (isinstance(params[key], (int, float)) and params[key] >= 1):
            raise ConfigError("must be a positive number", f"params.{key}")
    seeds = params.get("translation_seeds")
    if seeds is not None:
        ok = (isinstance(seeds, int) and seeds >= 1) or (
            isinstance(seeds, list) and seeds and all(isinstance(x, int) and x >= 0 for x in seeds))
        if not ok:
            raise ConfigError("expected a positive count or a list of non-negative integers",
                              "params.translation_seeds")
    for key in ("input",):
        if key in params and not os.path.exists(str(params[key])):
            raise ConfigError(f"file {params[key]!r} does not exist", f"params.{key}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}")
    try:
        spec = IFSSpec.from_dict(data)
    except SpecError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1] if exc.field else str(exc), exc.field) from None
    task = data.get("task")
    if task not in TASKS:
        raise ConfigError(f"expected one of {list(TASKS)}, got {task!r}", "task")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("expected an object", "params")
    _check_params(task, params)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("expected a non-negative integer", "seed")
    budget = data.get("budget")
    if budget is not None and not (isinstance(budget, (int, float)) and budget > 0):
        raise ConfigError("budget must be positive", "budget")
    out_dir = data.get("out_dir", ".")
    if not isinstance(out_dir, str):
        raise ConfigError("expected a path string", "out_dir")
    return RunConfig(spec, task, params, seed, None if budget is None else int(budget), out_dir)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def _scalar(text: str):
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return text
    if isinstance(value, (dict, list)):
        raise ConfigError(f"override values must be scalars, got {text!r}")
    return value


def apply_override(data: dict, item: str) -> dict:
    """Set ``key=value`` on the raw document; ``key`` may be dotted (``params.N``)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("cannot override inside a non-object", key)
    node[parts[-1]] = _scalar(text.strip())
    return data


def q_grid_from(params: dict, default=(0.25, 3.0, 12)) -> np.ndarray:
    """Explicit ``q_grid`` or ``linspace(q_min, q_max, q_points)`` with ``q = 1`` dropped."""
    if "q_grid" in params:
        return np.asarray(params["q_grid"], dtype=float)
    lo = float(params.get("q_min", default[0]))
    hi = float(params.get("q_max", default[1]))
    n = int(params.get("q_points", default[2]))
    if not (lo < hi and n >= 2):
        raise ConfigError("need q_min < q_max and q_points >= 2", "params")
    grid = np.linspace(lo, hi, n)
    return grid[np.abs(grid - 1.0) > 1e-12] if params.get("skip_one", True) else grid


def finite(x) -> bool:
    return x is not None and math.isfinite(x)
