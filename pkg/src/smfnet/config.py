"""Run configuration: strict JSON schema, defaults and scenario construction."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from typing import Any

import jsonschema
import numpy as np

from .filters import EXACT_FRAMEWORKS, MC_FRAMEWORKS, FilterOptions
from .models import OMEGA_MIN, Scenario, Topology, custom_linear_scenario, linear_scenario, unicycle_scenario


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_num_or_vec = {"oneOf": [_num, _vec]}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "smfnet run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {"enum": ["linear", "unicycle", "custom"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "steps": {"type": "integer", "minimum": 1},
        "frameworks": {
            "type": "array",
            "items": {"enum": list(EXACT_FRAMEWORKS + MC_FRAMEWORKS)},
            "uniqueItems": True,
        },
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "edges": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 2, "maxItems": 2},
                },
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "state_low": _vec,
                "state_high": _vec,
                "box_radius": _num_or_vec,
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "gamma": _num,
                "w": {"type": "number", "minimum": 0},
                "v": {"type": "number", "minimum": 0},
                "r": {"type": "number", "minimum": 0},
                "speed": _num,
                "omegas": {"type": "array", "items": _num},
                "w_pos": {"type": "number", "minimum": 0},
                "w_theta": {"type": "number", "minimum": 0},
                "v_pos": {"type": "number", "minimum": 0},
                "v_theta": {"type": "number", "minimum": 0},
            },
        },
        "custom": {
            "type": "object",
            "additionalProperties": False,
            "required": ["A", "C", "D", "w", "v", "r"],
            "properties": {
                "A": _mat,
                "B": _mat,
                "E": _mat,
                "C": _mat,
                "D": _mat,
                "w": _vec,
                "v": _vec,
                "r": _vec,
                "gamma": _num,
                "position_coords": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
            },
        },
        "m_samples": {"type": "integer", "minimum": 1},
        "mc_retries": {"type": "integer", "minimum": 0},
        "carry": {"enum": ["hull", "exact"]},
        "generator_cap": {"type": "integer", "minimum": 1},
        "check_inclusion": {"type": "boolean"},
        "inclusion_samples": {"type": "integer", "minimum": 1},
        "record_timing": {"type": "boolean"},
    },
}

_PI = math.pi
DEFAULTS = {
    "linear": {
        "seed": 0, "steps": 50, "frameworks": list(EXACT_FRAMEWORKS),
        "init": {"state_low": [-5.0, -5.0, -1.0, -1.0], "state_high": [5.0, 5.0, 1.0, 1.0], "box_radius": 1.0},
    },
    "unicycle": {
        "seed": 0, "steps": 30, "frameworks": list(MC_FRAMEWORKS),
        "init": {"state_low": [-5.0, -5.0, -_PI], "state_high": [5.0, 5.0, _PI],
                 "box_radius": [0.5, 0.5, _PI / 24]},
    },
    "custom": {"seed": 0, "steps": 50, "frameworks": list(EXACT_FRAMEWORKS), "init": {"box_radius": 1.0}},
}
COMMON = {
    "m_samples": 10000, "mc_retries": 2, "carry": "hull", "generator_cap": 200,
    "check_inclusion": True, "inclusion_samples": 1000, "record_timing": False,
}

_LINEAR_PARAMS = {"T", "gamma", "w", "v", "r"}
_UNICYCLE_PARAMS = {"T", "speed", "omegas", "w_pos", "w_theta", "v_pos", "v_theta", "r"}


def schema() -> dict:
    return copy.deepcopy(SCHEMA)


def resolve(raw: dict) -> dict:
    """Validate ``raw`` and fill in every default; the result is fully explicit."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = copy.deepcopy(raw)
    kind = cfg["scenario"]
    base = DEFAULTS[kind]
    for key, val in {**COMMON, **base}.items():
        if key == "init":
            cfg["init"] = {**val, **cfg.get("init", {})}
        else:
            cfg.setdefault(key, copy.deepcopy(val))
    cfg.setdefault("params", {})
    if "topology" not in cfg:
        t = Topology.ring(5)
        cfg["topology"] = {"n": 5, "edges": [list(e) for e in t.edges], "weights": list(t.weights)}
    topo = cfg["topology"]
    topo.setdefault("edges", [])
    topo.setdefault("weights", [1.0] * len(topo["edges"]))
    _check(cfg)
    return cfg


def _check(cfg):
    kind = cfg["scenario"]
    fws = cfg["frameworks"]
    if kind == "unicycle":
        bad = [f for f in fws if f in EXACT_FRAMEWORKS]
        if bad:
            raise ConfigError(f"frameworks {bad} need a linear scenario")
        extra = set(cfg["params"]) - _UNICYCLE_PARAMS
        omegas = cfg["params"].get("omegas")
        if omegas is not None:
            if len(omegas) != cfg["topology"]["n"]:
                raise ConfigError("params/omegas needs one value per agent")
            if any(abs(w) < OMEGA_MIN for w in omegas):
                raise ConfigError(f"params/omegas: |omega| must be at least {OMEGA_MIN}")
    else:
        bad = [f for f in fws if f in MC_FRAMEWORKS]
        if bad:
            raise ConfigError(f"frameworks {bad} need the nonlinear unicycle scenario")
        extra = set(cfg["params"]) - (_LINEAR_PARAMS if kind == "linear" else set())
    if extra:
        raise ConfigError(f"params: {sorted(extra)} not valid for scenario {kind!r}")
    if kind == "custom" and "custom" not in cfg:
        raise ConfigError("custom scenario needs a 'custom' block")
    if kind != "custom" and "custom" in cfg:
        raise ConfigError("'custom' block is only valid with scenario 'custom'")
    topo = cfg["topology"]
    if len(topo["weights"]) != len(topo["edges"]):
        raise ConfigError("topology/weights needs one weight per edge")
    try:
        build_topology(cfg)
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None
    init = cfg["init"]
    n = state_dim(cfg)
    low = init.get("state_low", [-5.0] * n)
    high = init.get("state_high", [5.0] * n)
    rad = init["box_radius"]
    if len(low) != n or len(high) != n:
        raise ConfigError(f"init/state_low and init/state_high need {n} entries")
    if isinstance(rad, list) and len(rad) != n:
        raise ConfigError(f"init/box_radius needs {n} entries")
    if any(h < l for l, h in zip(low, high)):
        raise ConfigError("init/state_high must not be below init/state_low")
    if np.any(np.asarray(rad, dtype=float) < 0):
        raise ConfigError("init/box_radius must be non-negative")
    init.setdefault("state_low", low)
    init.setdefault("state_high", high)


def state_dim(cfg) -> int:
    kind = cfg["scenario"]
    if kind == "linear":
        return 4
    if kind == "unicycle":
        return 3
    return len(cfg["custom"]["A"])


def build_topology(cfg) -> Topology:
    t = cfg["topology"]
    return Topology(t["n"], tuple(tuple(e) for e in t["edges"]), tuple(t["weights"]))


def build_scenario(cfg) -> Scenario:
    topo = build_topology(cfg)
    p = cfg["params"]
    if cfg["scenario"] == "linear":
        return linear_scenario(topo, **p)
    if cfg["scenario"] == "unicycle":
        kw = dict(p)
        if "omegas" in kw:
            kw["omegas"] = {i + 1: w for i, w in enumerate(kw["omegas"])}
        return unicycle_scenario(topo, **kw)
    c = cfg["custom"]
    try:
        return custom_linear_scenario(
            topo, c["A"], c["C"], c["D"], c["w"], c["v"], c["r"], B=c.get("B"), E=c.get("E"),
            position_coords=c.get("position_coords", [0]), gamma=c.get("gamma"),
        )
    except ValueError as exc:
        raise ConfigError(f"custom: {exc}") from None


def filter_options(cfg) -> FilterOptions:
    return FilterOptions(carry=cfg["carry"], generator_cap=cfg["generator_cap"],
                         m_samples=cfg["m_samples"], mc_retries=cfg["mc_retries"])


def canonical_json(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
