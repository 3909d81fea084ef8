"""Experiment configuration: versioned JSON validated against a schema, plus presets."""

import copy
import json
import re
from importlib import resources

import jsonschema

from .errors import ConfigError
from .mesh import GEOMETRIES

CONFIG_VERSION = 1

_sampling = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["grid", "random", "loguniform", "loggrid", "list", "union"]},
        "active": {"$ref": "#/$defs/axes"},
        "T": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "decades": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "include_inf": {"type": "boolean"},
        "params": {"type": "array", "items": {"type": ["string", "array"]}, "minItems": 1},
        "parts": {"type": "array", "items": {"$ref": "#/$defs/sampling"}, "minItems": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "$defs": {
        "axes": {
            "type": "array",
            "items": {"type": ["integer", "string"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "sampling": _sampling,
        "strategy": {"enum": ["random", "random-inf", "greedy-h10", "greedy-galerkin"]},
    },
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "name": {"type": "string"},
        "geometry": {"enum": list(GEOMETRIES)},
        "cells_per_side": {"type": "integer", "minimum": 4, "multipleOf": 4},
        "source": {"type": "number"},
        "active": {"$ref": "#/$defs/axes"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "backend": {"enum": ["direct", "cg"]},
        "y": {"type": "string"},
        "training": {"$ref": "#/$defs/sampling"},
        "test": {"$ref": "#/$defs/sampling"},
        "strategies": {"type": "array", "items": {"$ref": "#/$defs/strategy"}, "minItems": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "C0": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "sensors": {
            "type": "object",
            "properties": {
                "grid": {"type": "integer", "minimum": 1},
                "side": {"type": "number", "exclusiveMinimum": 0},
                "centers": {"type": "array", "minItems": 1,
                            "items": {"type": "array", "items": {"type": "number"},
                                      "minItems": 2, "maxItems": 2}},
            },
            "additionalProperties": False,
        },
        "basis": {
            "type": "object",
            "properties": {
                "strategy": {"$ref": "#/$defs/strategy"},
                "n": {"type": "integer", "minimum": 1},
                "dir": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "geometries": {"type": "array", "items": {"enum": list(GEOMETRIES)}, "minItems": 1},
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "T": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
            "required": ["geometries", "dims"],
            "additionalProperties": False,
        },
        "pbdw": {
            "type": "object",
            "properties": {
                "truth": {"type": "array", "items": {"type": "string"}},
                "random": {"type": "integer", "minimum": 0},
                "range": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                          "minItems": 2, "maxItems": 2},
                "noise": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["version"],
    "additionalProperties": False,
}

DEFAULTS = {
    "version": CONFIG_VERSION,
    "geometry": "lipschitz4",
    "cells_per_side": 80,
    "source": 1.0,
    "active": [0],
    "seed": 0,
    "threads": 1,
    "tol": 1e-8,
    "backend": "direct",
    "y": "1,1,1,1",
    "training": {"kind": "grid", "T": 100},
    "test": {"kind": "grid", "T": 100},
    "strategies": ["greedy-galerkin"],
    "n_max": 15,
    "C0": 1.0,
    "k": [0, 1, 2, 3],
    "sensors": {"grid": 4, "side": 0.25},
    "basis": {"strategy": "greedy-galerkin", "n": 12, "dir": "basis"},
    "pbdw": {"random": 10, "range": [1.0, 1000.0], "noise": 0.0},
}

PRESETS = ("fig5", "fig6", "fig7", "surrogate", "pbdw")


def _line_of(text, path):
    """Best-effort line number of the JSON value at ``path`` (a sequence of keys/indices)."""
    pos, line = 0, 1
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    line = text.count("\n", 0, pos) + 1
    return line


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text, source="<config>"):
    """Parse and validate a config document; errors carry ``source:line``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be an object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
            lines.append(f"{source}:{_line_of(text, list(err.absolute_path))}: {where}: {err.message}")
        raise ConfigError("\n".join(lines))
    # sampling blocks are replaced whole, not merged key by key, so a preset's
    # "kind" never mixes with a default block of another kind
    cfg = _merge({k: v for k, v in DEFAULTS.items() if k not in ("training", "test")}, raw)
    for key in ("training", "test"):
        cfg.setdefault(key, copy.deepcopy(DEFAULTS[key]))
    return cfg


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("hcrom.presets").joinpath(f"{name}.json").read_text()


def load_config(path=None, preset=None):
    """Config from a file, a named preset, or the defaults (``path`` wins over ``preset``)."""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return parse_config(text, str(path))
    if preset is not None:
        return parse_config(preset_text(preset), f"preset:{preset}")
    return parse_config(json.dumps({"version": CONFIG_VERSION}))


def sampling_spec(cfg, key, d, partition, seed_offset=0):
    """Sampling block with ``d``, resolved 0-based ``active`` axes and a seed derived from the run seed."""
    spec = copy.deepcopy(cfg[key])

    def fill(s):
        s["d"] = d
        s["active"] = resolve_axes(s.get("active", cfg["active"]), partition)
        s.setdefault("seed", cfg["seed"] + seed_offset)
        for part in s.get("parts", []):
            fill(part)
        return s

    return fill(spec)


def resolve_axes(axes, partition):
    try:
        return [partition.index(a) for a in axes]
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"bad active axis list {axes!r} for {partition.geometry_name}: {exc}") from None
