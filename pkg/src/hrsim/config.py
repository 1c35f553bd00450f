"""Run configuration: defaults, YAML loading, dotted keys and env overrides.

Every leaf has a documented default below.  A config file may use nested
mappings or dotted keys (``digitization.k: 4``).  Environment variables
``HRSIM_<SECTION>__<KEY>`` (double underscore between levels) override file
values; their text is parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

from .errors import ValidationError

ENV_PREFIX = "HRSIM_"

DEFAULTS: dict = {
    "seed": 0,
    "cap_dim": 2**26,
    "output": {"dir": "hrsim_out"},
    "geometry": {"d": 1, "sites_per_dim": 2, "a": 1.0},
    "digitization": {"k": 3, "phi_max": 3.0},
    "theory": {"m0_sq": 1.0, "lambda4": 0.0, "lambda6_minus_4": 0.0},
    "hamiltonian": {"scheme": "finite_difference"},
    "spectrum": {"n_states": None},
    "wavepacket": {
        "kind": "elementary",
        "n_quad": 64,
        "profile": {"p_bar": 0.0, "delta_p": 0.5, "shape": "gaussian", "x_center": 0.0},
        "window": {"a_coef": 0.5, "b_coef": 2.0, "shape": "bump", "variable": "mass_shell",
                   "mass": None},
        "grid": {"policy": "explicit", "t_lo": -6.0, "t_hi": 6.0, "n_t": 8, "sites": None,
                 "tail_tolerance": 1e-2, "dt": None},
        "refine_check": True,
    },
    "wavepacket2": {"x_center": None, "sites": None, "p_bar": None},
    "lcu": {"dump_state": False, "shots": 0},
    "evolution": {"backend": "exact", "n_steps": 1},
    "adiabatic": {"tau_values": [2.0, 4.0, 8.0, 16.0], "dt": 0.05, "schedule": "linear"},
    "truncation": {"m0_sq": 0.5, "lambda0": 0.1, "E": 1.0, "volume_sites": None,
                   "eps_target": 1e-3, "n_points": 2048, "n_table": 64},
    "sweep": {"command": "spectrum", "axis": "geometry.sites_per_dim", "values": [2, 3],
              "metric": "gap_m", "x": None},
}


def _set_dotted(cfg: dict, dotted: str, value, strict: bool = True):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            if strict:
                raise ValidationError(f"unknown config key {dotted!r}")
            node = node.setdefault(k, {})
        else:
            node = node[k]
    if strict and keys[-1] not in node:
        raise ValidationError(f"unknown config key {dotted!r}")
    if isinstance(node.get(keys[-1]), dict) and not isinstance(value, dict):
        raise ValidationError(f"config key {dotted!r} is a section, not a value")
    node[keys[-1]] = value


def _flatten(d: dict, prefix: str = ""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and v:
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def get_dotted(cfg: dict, dotted: str):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ValidationError(f"unknown config key {dotted!r}")
        node = node[k]
    return node


def merge(base: dict, overrides: dict) -> dict:
    """Apply nested or dotted overrides onto a copy of ``base`` (unknown keys rejected)."""
    out = copy.deepcopy(base)
    for key, value in _flatten(overrides):
        _set_dotted(out, key, value)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, text in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
        out[dotted] = yaml.safe_load(text)
    return out


def load_config(path=None, environ=None, extra: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config root must be a mapping")
        cfg = merge(cfg, data)
    cfg = merge(cfg, env_overrides(environ))
    if extra:
        cfg = merge(cfg, extra)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
