"""Experiment plumbing: registry, config validation, parallel trials, output files."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import jsonschema

from ..exceptions import LatentLabError

__all__ = [
    "ConfigError",
    "Experiment",
    "ExperimentResult",
    "REGISTRY",
    "register",
    "map_trials",
    "load_default_config",
    "resolve_config",
    "run_id",
    "format_value",
    "to_csv",
    "write_outputs",
    "as_int",
    "as_float",
]


class ConfigError(LatentLabError, ValueError):
    """A configuration does not match its experiment's schema."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    summary: dict
    artifacts: dict = field(default_factory=dict)  # extra file name -> text


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    schema: dict
    run: Callable  # (config, threads) -> ExperimentResult


REGISTRY: dict[str, Experiment] = {}

SEED = {"oneOf": [{"type": "integer", "minimum": 0}, {"type": "string", "pattern": "^[0-9]+$"}]}
NUMBER = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^[-+]?[0-9.]+([eE][-+]?[0-9]+)?$"}]}
POS_INT = {"type": "integer", "minimum": 1}


def register(name, description, properties):
    """Decorator adding an experiment with a JSON schema built from ``properties``."""
    schema = {
        "type": "object",
        "required": ["seed"],
        "additionalProperties": False,
        "properties": {"seed": SEED, **properties},
    }

    def deco(fn):
        REGISTRY[name] = Experiment(name, description, schema, fn)
        return fn

    return deco


def as_int(v) -> int:
    return int(v)


def as_float(v) -> float:
    return float(v)


def map_trials(fn, n, threads=1) -> list:
    """``[fn(0), ..., fn(n-1)]`` computed on ``threads`` workers, in index order."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def load_default_config(name) -> dict:
    text = resources.files("latentlab.experiments").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def _error_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [f for f in err.validator_value if f not in err.instance]
        if missing:
            parts.append(missing[0])
    return "$" + "".join(f".{p}" for p in parts)


def resolve_config(name, user_config) -> dict:
    """Validate ``user_config`` and fill unspecified fields from the bundled default."""
    exp = REGISTRY[name]
    validator = jsonschema.Draft7Validator(exp.schema)
    errors = sorted(validator.iter_errors(user_config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _error_path(err))
    resolved = copy.deepcopy(load_default_config(name))
    resolved.update(copy.deepcopy(user_config))
    return resolved


def run_id(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def format_value(v) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item"):
        return format_value(v.item())
    return "" if v is None else str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return format_value(v)
    return v


def write_outputs(out_dir, name, config, result: ExperimentResult, version) -> str:
    """Write ``results.csv`` and ``summary.json``; returns the run directory."""
    rid = run_id(config)
    path = os.path.join(out_dir, name, rid)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "results.csv"), "w", newline="") as fh:
        fh.write(to_csv(result.columns, result.rows))
    summary = {
        "experiment": name,
        "run_id": rid,
        "version": version,
        "config": config,
        "columns": list(result.columns),
        "metrics": _jsonable(result.summary),
    }
    with open(os.path.join(path, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for fname, text in result.artifacts.items():
        with open(os.path.join(path, fname), "w") as fh:
            fh.write(text)
    return path
