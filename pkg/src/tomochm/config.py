"""Run configuration: TOML loading, defaults, overrides, content hash."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "threads": 0,  # 0 = auto (TOMOCHM_THREADS, then cpu count)
    "stack": {
        "dir": "",
        "heading": "SE",
        "polarization": "VV",
    },
    "tomoproc": {
        "window": [9, 9],
        "normalized": False,
        "n_slc": 0,  # 0 = use the full stack
        "seed": 42,
    },
    "dataset": {
        "patch_size": 32,
        "stride": 32,
        "height_filter_m": 0.0,
        "fractions": [0.64, 0.20, 0.16],
    },
    "grid": {
        "z_min": -10.0,
        "z_max": 40.0,
        "dz": 0.5,
    },
    "baseline": {
        "method": "beamforming",
        "rel_threshold_db": -6.0,
        "loading_beta": 1e-3,
    },
    "simulate": {
        "shape": [64, 64],
        "n_images": 7,
        "resolution_m": 3.0,
        "layout": "staggered",
        "wavelength_m": 0.69,
        "incidence_deg": 45.0,
        "reference_range_m": 5000.0,
        "dtm": {"kind": "constant", "value": 0.0},
        "chm": {"kind": "constant", "value": 20.0},
        "ground_amplitude": 1.0,
        "canopy_amplitude": 1.0,
        "speckle": True,
        "snr_db": 20.0,
        "rng_seed": 42,
    },
    "output": {
        "dir": "out",
    },
}

_ENUMS = {
    ("stack", "heading"): ("NW", "SE"),
    ("stack", "polarization"): ("HH", "HV", "VH", "VV"),
    ("baseline", "method"): ("beamforming", "capon"),
    ("simulate", "layout"): ("staggered", "uniform"),
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _deep_merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None):
    """Defaults deep-merged with the TOML file at `path` (if given)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        cfg = _deep_merge(cfg, user)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')!r}; "
                          f"expected {SCHEMA_VERSION}")
    for (section, key), allowed in _ENUMS.items():
        value = cfg.get(section, {}).get(key)
        if value not in allowed:
            raise ConfigError(
                f"{section}.{key} must be one of {allowed}, got {value!r}")
    window = cfg["tomoproc"]["window"]
    if (len(window) != 2 or any(int(v) < 1 or int(v) % 2 == 0
                                for v in window)):
        raise ConfigError("tomoproc.window must be two odd integers >= 1")
    n_slc = cfg["tomoproc"]["n_slc"]
    if n_slc < 0:
        raise ConfigError("tomoproc.n_slc must be >= 0 (0 = full stack)")
    fractions = cfg["dataset"]["fractions"]
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 \
            or min(fractions) < 0:
        raise ConfigError("dataset.fractions must be 3 non-negative values "
                          "summing to 1")
    patch = cfg["dataset"]["patch_size"]
    if patch < 2 or patch % 2:
        raise ConfigError("dataset.patch_size must be even and >= 2")
    if cfg["dataset"]["stride"] not in (patch, patch // 2):
        raise ConfigError("dataset.stride must be patch_size or half of it")
    grid = cfg["grid"]
    if grid["dz"] <= 0 or grid["z_max"] <= grid["z_min"]:
        raise ConfigError("grid must satisfy dz > 0 and z_max > z_min")
    return cfg


def set_override(cfg, dotted_key, value):
    """Apply one `section.key=value` override in place (flags win)."""
    parts = dotted_key.split(".")
    node = cfg
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config section {dotted_key!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted_key!r}")
    node[parts[-1]] = value


def config_hash(cfg):
    """Digest of the canonical serialization; stable across key order."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def resolve_threads(cfg, flag_value=None):
    """--threads flag, then TOMOCHM_THREADS, then config, then cpu count."""
    if flag_value:
        return max(1, int(flag_value))
    env = os.environ.get("TOMOCHM_THREADS")
    if env:
        return max(1, int(env))
    if cfg.get("threads"):
        return max(1, int(cfg["threads"]))
    return os.cpu_count() or 1


def dump_toml(data, path):
    """Minimal TOML writer for the flat/nested dicts this package emits."""

    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, float)):
            return repr(value)
        if isinstance(value, str):
            return json.dumps(value)
        if isinstance(value, (list, tuple)):
            return "[" + ", ".join(fmt(v) for v in value) + "]"
        raise TypeError(f"cannot serialize {type(value)!r} to TOML")

    lines = []
    scalars = {k: v for k, v in data.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    for key, value in scalars.items():
        lines.append(f"{key} = {fmt(value)}")

    def emit(prefix, table):
        lines.append("")
        lines.append(f"[{prefix}]")
        for key, value in table.items():
            if isinstance(value, dict):
                continue
            lines.append(f"{key} = {fmt(value)}")
        for key, value in table.items():
            if isinstance(value, dict):
                emit(f"{prefix}.{key}", value)

    for key, value in tables.items():
        emit(key, value)
    Path(path).write_text("\n".join(lines) + "\n")
