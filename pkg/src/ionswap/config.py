"""Run configuration: defaults, YAML overrides, seeding, output stamping.

Everything with physical units lives in the config tree; command-line
flags only carry paths, the seed, worker count and output format.  Every
output file embeds the resolved-config hash and the seed, and all
randomness flows from the one seed through named child streams.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os

import yaml

from .errors import ConfigurationError
from .filters import FilterModel
from .qubits import FieldMap, ReadoutModel
from .sequences import Durations, World
from .trap import TrapGeometry, calibrate
from .waveforms import SwapRampParams

DEFAULTS = {
    "seed": 2016,
    "trap": {
        "targets_mhz": [1.488, 1.927, 3.248],
        "u_c": -6.0,
        "bump_efficiency": 0.08,
        "diag_coupling": 1.4e-5,
        "segments": [14, 30],
        "liz": 20,
    },
    "filter": {
        "cutoff_khz": 50.0,
        "zeta": 1.0 / math.sqrt(2.0),
    },
    "swap": {
        "u_d_peak": 1.4,
        "u_c_deep": -9.5,
        "u_o_peak": 4.0,
        "duration": 22.0,
        "breakpoints": [0.05, 0.45, 0.55, 0.95],
    },
    "dynamics": {"dt_us": 0.002},
    "noise": {
        "eps_up_to_dark": 0.0,
        "eps_down_to_bright": 0.0,
        "scatter_depolarization": 0.0,
        "swap_pair_phase": 0.0,
        "systematic_phase_error": 0.0,
    },
    "field_map": {
        "gradient_t_per_um": 4.0e-11,
        "curvature_t_per_um2": 1.0e-14,
    },
    "durations": {
        "transport_per_pair": 28.0,
        "separate": 100.0,
        "merge": 100.0,
        "swap": 42.0,
        "init_pump": 40.0,
        "rotate": 5.0,
        "shelve": 20.0,
        "readout": 80.0,
    },
    "tomography": {"shots": 1000, "with_swap": True, "correct_phases": True},
    "reorder": {"shots": 2500, "include_preparation": False,
                "separation_bias": 0.3},
    "field_scan": {
        "positions_segments": [-2, -1, 0, 1, 2],
        "hold_times_us": [20.0, 45.7, 71.4, 97.1, 122.9, 148.6, 174.3, 200.0],
        "shots": 400,
    },
    "rabi": {"eta": 0.1, "omega0_rad_per_us": 1.885, "shots": 200,
             "state": "coherent"},
    "optimize": {"free_params": ["u_d_peak"], "restarts": 1,
                 "dt_us": 0.004},
    "sweep": {"durations": [22.0, 44.0, 88.0, 176.0]},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigurationError(f"unknown config key {key!r}")
        if isinstance(value, dict) and isinstance(out[key], dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None) -> dict:
    """Resolve defaults <- YAML file <- explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
        cfg = _deep_merge(cfg, data)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    if cfg.get("seed") is None:
        raise ConfigurationError("a seed is required for reproducible runs")
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def build_geometry(cfg: dict) -> TrapGeometry:
    t = cfg["trap"]
    lo, hi = t["segments"]
    base = TrapGeometry(segment_ids=tuple(range(lo, hi + 1)),
                        liz_index=t["liz"],
                        bump_efficiency=t["bump_efficiency"],
                        diag_coupling=t["diag_coupling"])
    return calibrate(tuple(t["targets_mhz"]), u_c=t["u_c"], base=base)


def build_filter(cfg: dict) -> FilterModel:
    f = cfg["filter"]
    return FilterModel(cutoff_angular=2.0 * math.pi * f["cutoff_khz"] * 1e-3,
                       zeta=f["zeta"])


def build_swap_params(cfg: dict) -> SwapRampParams:
    s = cfg["swap"]
    return SwapRampParams(u_d_peak=s["u_d_peak"], u_c_deep=s["u_c_deep"],
                          u_o_peak=s["u_o_peak"], duration=s["duration"],
                          breakpoints=tuple(s["breakpoints"]))


def build_readout(cfg: dict) -> ReadoutModel:
    n = cfg["noise"]
    return ReadoutModel(n["eps_up_to_dark"], n["eps_down_to_bright"])


def build_world(cfg: dict, geometry: TrapGeometry | None = None) -> World:
    geometry = geometry or build_geometry(cfg)
    n = cfg["noise"]
    fm = cfg["field_map"]
    return World(
        geometry=geometry,
        durations=Durations(**cfg["durations"]),
        fieldmap=FieldMap(fm["gradient_t_per_um"], fm["curvature_t_per_um2"]),
        readout=build_readout(cfg),
        filter_model=build_filter(cfg),
        swap_params=build_swap_params(cfg),
        correct_phases=cfg["tomography"]["correct_phases"],
        systematic_phase_error=n["systematic_phase_error"],
        swap_pair_phase=n["swap_pair_phase"],
        scatter_depolarization=n["scatter_depolarization"],
        separation_bias=cfg["reorder"]["separation_bias"],
        dt=cfg["dynamics"]["dt_us"],
    )


def stamp(cfg: dict, payload: dict) -> dict:
    """Attach the reproducibility fields every output carries."""
    return {"config_sha256": config_hash(cfg), "seed": cfg["seed"],
            **payload}


def write_json(path, cfg: dict, payload: dict):
    with open(path, "w") as fh:
        json.dump(stamp(cfg, payload), fh, indent=2, sort_keys=True)
