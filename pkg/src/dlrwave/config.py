"""JSON experiment configuration.

Example::

    {
      "preset": "example1",
      "grid": {"N": 128},
      "time": {"T": 0.1, "M_list": [20, 40, 80]},
      "ranks": [13],
      "reference": {"multiplier": 16}
    }

Omitted ``grid.bounds``, ``time.T``, ``params`` entries and ``nonlinear``
entries fall back to the preset's values. Unknown keys are rejected.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from .harness import ExperimentConfig
from .model import GridSpec, ModelParams, NonlinearPair, get_preset

__all__ = ["ConfigError", "SCHEMA", "parse_config", "config_from_dict", "apply_overrides"]


class ConfigError(ValueError):
    """Invalid configuration file, override or parameter value."""


# nested dicts describe sections; None marks a leaf value
SCHEMA: dict[str, Any] = {
    "preset": None,
    "grid": {"N": None, "bounds": None},
    "time": {"T": None, "M_list": None},
    "ranks": None,
    "params": {"alpha": None, "beta": None, "gamma": None, "delta": None, "omega": None},
    "nonlinear": {"f": None, "g": None},
    "reference": {"multiplier": None},
    "fn_substeps": None,
    "snapshot": {"times": None, "range": None},
}


def _check_keys(raw: dict, schema: dict, prefix: str = "") -> None:
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be a JSON object")
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key '{prefix}{key}'")
        if schema[key] is not None:
            _check_keys(value, schema[key], f"{prefix}{key}.")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """Apply ``section.key=value`` assignments; values are parsed as JSON when possible."""
    for item in overrides:
        path, sep, value = item.partition("=")
        if not sep or not path:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        keys = path.strip().split(".")
        node, schema = raw, SCHEMA
        for key in keys[:-1]:
            if not isinstance(schema, dict) or schema.get(key) is None:
                raise ConfigError(f"unknown override key {path!r}")
            node = node.setdefault(key, {})
            schema = schema[key]
        if not isinstance(schema, dict) or keys[-1] not in schema:
            raise ConfigError(f"unknown override key {path!r}")
        node[keys[-1]] = _parse_value(value.strip())
    return raw


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_keys(raw, SCHEMA)
    if "preset" not in raw:
        raise ConfigError("missing required key 'preset'")
    try:
        preset = get_preset(raw["preset"])
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None

    grid_raw = raw.get("grid", {})
    time_raw = raw.get("time", {})
    params_raw = raw.get("params", {})
    nl_raw = raw.get("nonlinear", {})
    snap_raw = raw.get("snapshot", {})
    if "M_list" not in time_raw:
        raise ConfigError("missing required key 'time.M_list'")
    if "ranks" not in raw:
        raise ConfigError("missing required key 'ranks'")

    try:
        N = grid_raw.get("N", 128)
        if not isinstance(N, int) or isinstance(N, bool):
            raise ValueError("grid.N must be an integer")
        bounds = grid_raw.get("bounds", preset.bounds)
        if len(bounds) != 4:
            raise ValueError("grid.bounds must be [x_L, x_R, y_L, y_R]")
        grid = GridSpec.square(N, bounds)
        base = preset.params
        params = ModelParams(
            alpha=float(params_raw.get("alpha", base.alpha)),
            beta=float(params_raw.get("beta", base.beta)),
            gamma=float(params_raw.get("gamma", base.gamma)),
            delta=float(params_raw.get("delta", base.delta)),
            omega=tuple(params_raw.get("omega", base.omega)),
        )
        nonlinear = NonlinearPair.named(nl_raw.get("f", preset.f), nl_raw.get("g", preset.g))
        M_list = time_raw["M_list"]
        ranks = raw["ranks"]
        for name, seq in (("time.M_list", M_list), ("ranks", ranks)):
            if not isinstance(seq, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in seq
            ):
                raise ValueError(f"{name} must be a list of integers")
        multiplier = raw.get("reference", {}).get("multiplier", 16)
        fn_substeps = raw.get("fn_substeps", 1)
        if not isinstance(multiplier, int) or not isinstance(fn_substeps, int):
            raise ValueError("reference.multiplier and fn_substeps must be integers")
        return ExperimentConfig(
            preset=preset,
            grid=grid,
            T=float(time_raw.get("T", preset.T)),
            M_list=tuple(M_list),
            ranks=tuple(ranks),
            params=params,
            nonlinear=nonlinear,
            multiplier=multiplier,
            fn_substeps=fn_substeps,
            snapshot_times=tuple(snap_raw.get("times", (0.0, 1.0, 2.0, 3.0))),
            pgm_range=snap_raw.get("range", "series"),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc.args[0]) if exc.args else str(exc)) from None


def parse_config(path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """Read, override and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(apply_overrides(raw, overrides))
