"""Declarative run configuration: YAML file, strict schema, flag overrides."""

import hashlib
import json

import yaml

from .errors import ConfigError
from .scenario import ScenarioConfig
from .training import TrainConfig

MODEL_KINDS = ("beamllm", "rnn", "gru", "lstm")
MODES = ("standard", "fewshot")

# (expected type(s), default); nested dicts follow the same structure
_SCHEMA = {
    "seed": (int, 7),
    "model": (MODEL_KINDS, "beamllm"),
    "mode": (MODES, "standard"),
    "pap_enabled": (bool, True),
    "scenario": {
        "n_passes": (int, 60),
        "fov_deg": ((int, float), 50.0),
        "road_start": ("point", (-40.0, 22.0)),
        "road_end": ("point", (40.0, 22.0)),
        "speed_range": ("point", (8.0, 14.0)),
        "frame_rate": ((int, float), 7.79),
        "box_noise": ((int, float), 0.01),
        "n_antennas": (int, 16),
        "n_beams": (int, 32),
        "ref_gain": ((int, float), 1.0),
        "box_ref_width": ((int, float), 0.08),
        "box_ref_height": ((int, float), 0.12),
        "box_ref_dist": ((int, float), 22.0),
        "store_powers": (bool, False),
    },
    "train": {
        "batch_size": (int, 16),
        "base_lr": ((int, float), 0.01),
        "milestones": ("int_list", (1, 5, 10, 15, 20, 25, 30, 40)),
        "gamma": ((int, float), 0.9),
        "epochs": (int, 200),
    },
}


def _check(value, expected, path):
    if expected == "point":
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        ):
            raise ConfigError(f"{path}: expected a pair of numbers, got {value!r}")
        return (float(value[0]), float(value[1]))
    if expected == "int_list":
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{path}: expected a list of ints, got {value!r}")
        return tuple(int(v) for v in value)
    if isinstance(expected, tuple) and all(isinstance(e, str) for e in expected):
        if value not in expected:
            raise ConfigError(f"{path}: must be one of {expected}, got {value!r}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a bool, got {value!r}")
        return value
    if expected is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{path}: expected an int, got {value!r}")
        return value
    # numeric
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _merge(schema, data, path=""):
    out = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    for key, spec in schema.items():
        sub_path = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = _merge(spec, data.get(key, {}), sub_path)
        elif key in data:
            out[key] = _check(data[key], spec[0], sub_path)
        else:
            out[key] = spec[1]
    return out


def default_config():
    return _merge(_SCHEMA, {})


def load_config(path=None, overrides=None):
    """Resolve a full config: file (optional) + explicit overrides + defaults."""
    data = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    cfg = _merge(_SCHEMA, data)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown override {dotted}")
        node[parts[-1]] = value
    return cfg


def config_hash(cfg):
    """Stable hash of a resolved config for run manifests."""
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def scenario_config(cfg):
    return ScenarioConfig(**cfg["scenario"])


def train_config(cfg):
    return TrainConfig(
        seed=cfg["seed"],
        mode=cfg["mode"],
        pap_enabled=cfg["pap_enabled"],
        **cfg["train"],
    )
