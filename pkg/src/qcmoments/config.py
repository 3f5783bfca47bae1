"""Run configuration: YAML schema, defaults and validation.

A config file is a key-value tree with one block per concern.  Every
subcommand declares which blocks it needs; validation errors always name
the offending key so failures are actionable from the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Any

import numpy as np
import yaml

from .grid import PhaseGrid
from .scenario import (ConditionalMixtureField, OperatorField,
                       atan_twolevel_density, hamiltonian_from_expressions,
                       load_scenario, SCENARIO_NAMES, DEFAULT_FD_STEP)
from .exprs import ExpressionError

__all__ = ["ConfigError", "RunConfig", "load_config", "REQUIRED_BLOCKS"]


class ConfigError(Exception):
    """Configuration problem; carries the offending key path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


_DEFAULTS: dict[str, dict[str, Any]] = {
    "scenario": {"name": "atan_twolevel", "fd_step": DEFAULT_FD_STEP},
    "grid": {"r_min": -8.0, "r_max": 8.0, "p_min": -8.0, "p_max": 8.0,
             "n_r": 64, "n_p": 64},
    "integrator": {"dt": 1e-3, "t_end": 1.0},
    "ensemble": {"n_samples": 10_000, "seed": 1234, "bandwidth": None},
    "closure": {"method": "closed_form", "entropy_order": "exact",
                "tol": 1e-8, "max_iter": 10_000},
    "output": {"directory": "out", "sample_fractions":
               [0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0]},
    "fig1": {"r_min": -3.0, "r_max": 3.0, "n_r": 121,
             "theta_min": 0.0, "theta_max": np.pi, "n_theta": 121,
             "p_fixed": 0.0, "fd_step": 1e-3},
    "trajectory": {"r0": 1.0, "p0": 0.0, "bloch0": [0.0, 0.0, 1.0],
                   "stride": 10},
    "maxent_check": {"count": 100, "seed": 7, "inputs": None},
}

REQUIRED_BLOCKS: dict[str, list[str]] = {
    "trajectory": ["scenario", "integrator", "trajectory", "output"],
    "ensemble": ["scenario", "grid", "integrator", "ensemble", "output"],
    "fig1": ["scenario", "fig1", "output"],
    "maxent-check": ["closure", "maxent_check", "output"],
    "evolve-effective": ["scenario", "grid", "integrator", "closure", "output"],
    "compare": ["scenario", "grid", "integrator", "ensemble", "closure",
                "output"],
    "hierarchy-check": ["scenario", "grid", "ensemble", "output"],
}


@dataclass
class RunConfig:
    """Validated configuration tree plus the raw dict it came from."""

    raw: dict[str, Any]
    blocks: dict[str, dict[str, Any]] = dc_field(default_factory=dict)

    def block(self, name: str) -> dict[str, Any]:
        return self.blocks[name]


def _require_number(block: str, data: dict, key: str, lo=None, hi=None,
                    integer=False):
    if key not in data:
        raise ConfigError(f"{block}.{key}", "missing required value")
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{block}.{key}", f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{block}.{key}", f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{block}.{key}", f"must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{block}.{key}", f"must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _merged(name: str, user: dict[str, Any]) -> dict[str, Any]:
    block = dict(_DEFAULTS[name])
    for key, value in (user or {}).items():
        if key not in block and name != "scenario":
            raise ConfigError(f"{name}.{key}", "unknown key")
        block[key] = value
    return block


def _validate_block(name: str, data: dict[str, Any]) -> dict[str, Any]:
    if name == "grid":
        for key in ("r_min", "r_max", "p_min", "p_max"):
            data[key] = _require_number(name, data, key)
        for key in ("n_r", "n_p"):
            data[key] = _require_number(name, data, key, lo=8, integer=True)
        if data["r_max"] <= data["r_min"] or data["p_max"] <= data["p_min"]:
            raise ConfigError("grid.r_max", "grid extents are empty")
    elif name == "integrator":
        data["dt"] = _require_number(name, data, "dt", lo=1e-12)
        data["t_end"] = _require_number(name, data, "t_end", lo=0.0)
    elif name == "ensemble":
        data["n_samples"] = _require_number(name, data, "n_samples", lo=1,
                                            integer=True)
        data["seed"] = _require_number(name, data, "seed", integer=True)
        if data.get("bandwidth") is not None:
            data["bandwidth"] = _require_number(name, data, "bandwidth",
                                                lo=1e-12)
    elif name == "closure":
        if data["method"] not in ("closed_form", "numeric"):
            raise ConfigError("closure.method",
                              f"must be closed_form or numeric, got "
                              f"{data['method']!r}")
        if data["entropy_order"] != "exact":
            data["entropy_order"] = _require_number(name, data,
                                                    "entropy_order", lo=1,
                                                    integer=True)
        data["tol"] = _require_number(name, data, "tol", lo=1e-15)
        data["max_iter"] = _require_number(name, data, "max_iter", lo=1,
                                           integer=True)
    elif name == "fig1":
        for key in ("r_min", "r_max", "theta_min", "theta_max", "p_fixed"):
            data[key] = _require_number(name, data, key)
        for key in ("n_r", "n_theta"):
            data[key] = _require_number(name, data, key, lo=1, integer=True)
        data["fd_step"] = _require_number(name, data, "fd_step", lo=1e-12)
    elif name == "trajectory":
        for key in ("r0", "p0"):
            data[key] = _require_number(name, data, key)
        data["stride"] = _require_number(name, data, "stride", lo=1,
                                         integer=True)
        bloch = data.get("bloch0")
        if (not isinstance(bloch, (list, tuple)) or len(bloch) != 3
                or not all(isinstance(v, (int, float)) for v in bloch)):
            raise ConfigError("trajectory.bloch0",
                              f"expected three numbers, got {bloch!r}")
        if abs(float(np.linalg.norm(bloch)) - 1.0) > 1e-9:
            raise ConfigError("trajectory.bloch0", "must be a unit vector")
    elif name == "maxent_check":
        data["count"] = _require_number(name, data, "count", lo=1, integer=True)
        data["seed"] = _require_number(name, data, "seed", integer=True)
        if data.get("inputs") is not None:
            for i, row in enumerate(data["inputs"]):
                if not isinstance(row, (list, tuple)) or len(row) != 4:
                    raise ConfigError(f"maxent_check.inputs[{i}]",
                                      "expected four Pauli coordinates")
    elif name == "output":
        if not isinstance(data.get("directory"), str):
            raise ConfigError("output.directory",
                              f"expected a path string, got "
                              f"{data.get('directory')!r}")
        fracs = data.get("sample_fractions")
        if (not isinstance(fracs, (list, tuple)) or not fracs
                or not all(isinstance(v, (int, float)) for v in fracs)):
            raise ConfigError("output.sample_fractions",
                              "expected a list of numbers")
    elif name == "scenario":
        has_name = "name" in data and data["name"] is not None
        has_exprs = "hamiltonian" in data and data["hamiltonian"] is not None
        if not has_name and not has_exprs:
            raise ConfigError("scenario.name",
                              "give a scenario name or a hamiltonian block")
        if has_name and data["name"] not in SCENARIO_NAMES:
            raise ConfigError("scenario.name",
                              f"unknown scenario {data['name']!r}; known: "
                              f"{', '.join(SCENARIO_NAMES)}")
        if has_exprs and not isinstance(data["hamiltonian"], dict):
            raise ConfigError("scenario.hamiltonian",
                              "expected a mapping of h0..h3 expressions")
        data["fd_step"] = _require_number(name, data, "fd_step", lo=1e-12)
    return data


def load_config(source: str | dict, subcommand: str) -> RunConfig:
    """Load and validate the blocks a subcommand needs.

    ``source`` is a YAML/JSON file path or an already-parsed dict (a run
    manifest's embedded config also works).
    """
    if subcommand not in REQUIRED_BLOCKS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    if isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as handle:
                raw = yaml.safe_load(handle)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {source}")
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"cannot parse {source}: {exc}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping of blocks")
    if "config" in raw and isinstance(raw["config"], dict) and "command" in raw:
        raw = raw["config"]          # accept a run manifest directly

    cfg = RunConfig(raw=raw)
    for block_name in REQUIRED_BLOCKS[subcommand]:
        if block_name not in raw and block_name in ("grid", "scenario"):
            # these carry the physics choices; no silent defaults
            raise ConfigError(block_name, "missing required block")
        user = raw.get(block_name) or {}
        if not isinstance(user, dict):
            raise ConfigError(block_name, "block must be a mapping")
        cfg.blocks[block_name] = _validate_block(block_name,
                                                 _merged(block_name, user))
    return cfg


# ---------------------------------------------------------------------------
# constructors from validated blocks


def build_grid(cfg: RunConfig) -> PhaseGrid:
    g = cfg.block("grid")
    return PhaseGrid(g["r_min"], g["r_max"], g["p_min"], g["p_max"],
                     g["n_r"], g["n_p"])


def build_scenario(cfg: RunConfig) -> tuple[OperatorField,
                                            ConditionalMixtureField]:
    s = cfg.block("scenario")
    if s.get("hamiltonian"):
        try:
            ham = hamiltonian_from_expressions(s["hamiltonian"],
                                               fd_step=s["fd_step"])
        except ExpressionError as exc:
            raise ConfigError("scenario.hamiltonian", str(exc))
        return ham, atan_twolevel_density()
    return load_scenario(s["name"])
