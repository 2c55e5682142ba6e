"""Run configuration: schema-validated dicts loaded from TOML or JSON."""

from __future__ import annotations

import hashlib
import json
import sys

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_BOX = {"type": list}
_GAMMA = {"type": dict}

SCHEMAS = {
    "exact": {
        "box": (list, True), "beta": ((int, float), True),
        "kappa": ((int, float), True), "gamma": (dict, True),
        "budget": (int, False), "oriented_double": (bool, False),
    },
    "expand": {
        "box": (list, True), "beta": ((int, float), True),
        "kappa": ((int, float), True), "gamma_n": (dict, True),
        "gamma0": (dict, False), "max_norm1": (int, True),
        "max_norm2": (int, True), "max_cluster_size": (int, False),
        "alpha": ((int, float), False), "a": ((int, float), False),
        "oriented_double": (bool, False), "diagnostics": (bool, False),
    },
    "mc": {
        "box": (list, True), "mode": (str, True),
        "beta": ((int, float), False), "kappa": ((int, float), True),
        "gamma": (dict, False), "x": (list, False), "y": (list, False),
        "sweeps": (int, True), "therm": (int, True), "block_len": (int, True),
        "seed": (int, True), "streams": (int, False),
        "estimator": (str, False), "oriented_double": (bool, False),
    },
    "scan": {
        "box": (list, True), "kappa": ((int, float), True),
        "mode": (str, False), "n_values": (list, True),
        "schedule": (dict, False), "sweeps": (int, True), "therm": (int, True),
        "block_len": (int, True), "seed": (int, True), "streams": (int, False),
        "translates": (int, False), "rows": (int, False), "axis": (int, False),
        "estimator": (str, False), "oriented_double": (bool, False),
    },
    "fit": {
        "input": (str, True), "n_min": ((int, float), False),
        "n_max": ((int, float), False), "kappa": ((int, float), False),
    },
    "compare": {
        "fit_a": (str, True), "fit_b": (str, True),
        "rel_tol": ((int, float), False),
    },
}


def validate_config(mode, cfg):
    if mode not in SCHEMAS:
        raise ConfigError(f"unknown mode {mode!r}")
    schema = SCHEMAS[mode]
    unknown = set(cfg) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys for {mode}: {sorted(unknown)}")
    for key, (types, required) in schema.items():
        if key not in cfg:
            if required:
                raise ConfigError(f"missing required config key {key!r} for {mode}")
            continue
        if not isinstance(cfg[key], types):
            raise ConfigError(f"config key {key!r} has wrong type "
                              f"{type(cfg[key]).__name__}")
    return cfg


def load_config(path):
    text = open(path, "rb").read()
    if str(path).endswith(".toml"):
        return tomllib.loads(text.decode())
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def apply_overrides(cfg, overrides):
    out = dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out[key] = value
    return out


def config_hash(mode, cfg):
    canon = json.dumps({"mode": mode, "config": cfg}, sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
