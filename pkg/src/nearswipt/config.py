"""
YAML experiment configuration.

Every key is optional; an empty file (or none at all) gives the built-in
defaults of the chosen experiment. Angles are written in degrees, every
other quantity in SI units (Hz, W, m, dB where the key says ``_db``).

.. code-block:: yaml

    experiment: band_sweep          # must match the CLI argument if given
    system:                         # SystemConfig fields
      carrier_frequency: 7.5e9      # sweeps take the carrier from sweep.bands
      bandwidth: 100.0e6
      noise_psd: -204.0             # dBW/Hz
      noise_figure: 7.0
      tx_power_total: 10.0
      pilot_power: 1.0e-4
      coherence_block_len: 10000
      eh_circuit_power: 3.0e-3
      num_id_users: 20
      num_eh_users: 10
      trials: 200
      master_seed: 0
    placement:
      distance_range: [1.5, 25.0]
      azimuth_range_deg: [-90, 90]  # from broadside, positive towards +x
      elevation_range_deg: [-90, 90]  # from broadside, positive towards +y
      cone_half_angle_deg: null     # e.g. 5 for a +-5 deg broadside cone
    fading:
      shadowing_std_db: 4.0
      kappa_mean_db: 7.0            # .inf for pure line of sight
      kappa_std_db: 8.0
    harvester:
      model: sigmoid                # or linear
      saturation_power: 24.0e-3
      steepness: 150.0
      inflection: 14.0e-3
      efficiency: 0.5               # linear model only
    ml_grid:
      distance_points: 50
      distance_range: [1.5, 25.0]
      azimuth_points: 64
      elevation_points: 64
      azimuth_range_deg: [-90, 90]
      elevation_range_deg: [-90, 90]
      refine: true
      refine_sweeps: 1
      polish: true
    sweep:
      bands: [{frequency: 7.5e9, rows: 40, cols: 10}]
      id_user_counts: [10, 20, 30, 40]
      estimators: [LS]              # PERFECT, ML, LS
      id_estimator: same            # same, PERFECT or LS
      field_models: [near]          # near, far
      reference_distance: null      # equalise all path losses to this distance
      eh_pilot_length: null         # null: shared book of K_ID + K_EH pilots
      id_distance: 25.0             # trade-off experiment only
      id_antenna_counts: [1, 2, 4, 8]
      channel_cases: [los, rician]
      rician_kappa_db: 20.0
      rho_grid: [0.05, 0.1, 1.0]
    precoding:
      target_se: 4.0                # bit/s/Hz per ID user
      energy_split: equal           # or proportional
      include_information: true     # count leakage of data beams at EH users
    channel:
      amplitude_taper: false
    run:
      workers: 1

Position convention: the array lies in the ``z = 0`` plane facing ``-z``;
a user at distance ``d``, azimuth ``phi`` and elevation ``theta`` sits at
``d (sin phi cos theta, sin theta, -cos phi cos theta)``.
"""

from __future__ import annotations

from dataclasses import fields, replace
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .errors import ConfigurationError
from .experiments import EXPERIMENT_IDS, ExperimentSpec, default_spec
from .harvesting import EhModelParams

_SECTIONS = ("experiment", "system", "placement", "fading", "harvester", "ml_grid", "sweep",
             "precoding", "channel", "run")
_SPEC_SECTIONS = {
    "sweep": ("bands", "id_user_counts", "estimators", "id_estimator", "field_models",
              "reference_distance", "eh_pilot_length", "id_distance", "id_antenna_counts",
              "channel_cases", "rician_kappa_db", "rho_grid"),
    "precoding": ("target_se", "energy_split", "include_information"),
    "channel": ("amplitude_taper",),
    "run": ("workers",),
}
_ANGLE_KEYS = {"azimuth_range_deg": "azimuth_range", "elevation_range_deg": "elevation_range",
               "cone_half_angle_deg": "cone_half_angle"}


def _coerce(name: str, value, default):
    """Convert a YAML value to the type of ``default`` (PyYAML reads ``1e-4`` as a string)."""
    if value is None:
        return None
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: cannot interpret {value!r} as {type(default).__name__}")
    return value


def _pair(name: str, value) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"{name} must be a two-element list")
    return (_coerce(name, value[0], 0.0), _coerce(name, value[1], 0.0))


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigurationError(f"section {section!r} must be a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown keys in {section!r}: {unknown}; allowed {sorted(allowed)}")


def _apply_simple(section: str, obj, data: dict, allowed=None):
    names = [f.name for f in fields(obj)]
    _check_keys(section, data, allowed or names)
    kw = {k: _coerce(f"{section}.{k}", v, getattr(obj, k)) for k, v in data.items()}
    return replace(obj, **kw)


def _apply_angles(section: str, obj, data: dict, pairs: Dict[str, str], scalar=()):
    """Overlay fields where some keys are angles in degrees."""
    names = [f.name for f in fields(obj) if f.name not in pairs.values()]
    _check_keys(section, data, names + list(pairs))
    kw = {}
    for k, v in data.items():
        if k in pairs:
            target = pairs[k]
            if v is None:
                kw[target] = None
            elif k in scalar:
                kw[target] = float(np.deg2rad(_coerce(f"{section}.{k}", v, 0.0)))
            else:
                lo, hi = _pair(f"{section}.{k}", v)
                kw[target] = (float(np.deg2rad(lo)), float(np.deg2rad(hi)))
        elif k == "distance_range":
            kw[k] = _pair(f"{section}.{k}", v)
        else:
            kw[k] = _coerce(f"{section}.{k}", v, getattr(obj, k))
    return replace(obj, **kw)


def _int_tuple(name, v):
    if not isinstance(v, (list, tuple)):
        raise ConfigurationError(f"{name} must be a list")
    return tuple(_coerce(name, x, 0) for x in v)


def _sweep_value(key: str, v, spec: ExperimentSpec):
    name = f"sweep.{key}"
    if key == "bands":
        if not isinstance(v, list):
            raise ConfigurationError("sweep.bands must be a list of {frequency, rows, cols}")
        out = []
        for b in v:
            _check_keys(name, b, ("frequency", "rows", "cols"))
            if set(b) != {"frequency", "rows", "cols"}:
                raise ConfigurationError("every band needs frequency, rows and cols")
            out.append((_coerce(name, b["frequency"], 0.0), _coerce(name, b["rows"], 0),
                        _coerce(name, b["cols"], 0)))
        return tuple(out)
    if key in ("id_user_counts", "id_antenna_counts"):
        return _int_tuple(name, v)
    if key in ("estimators", "field_models", "channel_cases"):
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise ConfigurationError(f"{name} must be a list of names")
        return tuple(v)
    if key == "rho_grid":
        if not isinstance(v, list):
            raise ConfigurationError(f"{name} must be a list")
        return tuple(_coerce(name, x, 0.0) for x in v)
    if key == "reference_distance":
        return None if v is None else _coerce(name, v, 0.0)
    if key == "eh_pilot_length":
        return None if v is None else _coerce(name, v, 0)
    return _coerce(name, v, getattr(spec, key))


def spec_from_dict(data: Optional[dict], experiment_id: Optional[str] = None) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from parsed YAML on top of the experiment defaults."""
    try:
        return _spec_from_dict(data, experiment_id)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:  # e.g. null where a number is required
        raise ConfigurationError(str(exc)) from exc


def _spec_from_dict(data, experiment_id):
    data = {} if data is None else data
    _check_keys("<top level>", data, _SECTIONS)
    eid = data.get("experiment")
    if experiment_id is not None and eid is not None and eid != experiment_id:
        raise ConfigurationError(f"config is for {eid!r}, not {experiment_id!r}")
    eid = experiment_id or eid
    if eid not in EXPERIMENT_IDS:
        raise ConfigurationError(f"experiment must be one of {EXPERIMENT_IDS}, got {eid!r}")
    spec = default_spec(eid)
    kw: Dict[str, Any] = {}
    kw["system"] = _apply_simple("system", spec.system, data.get("system") or {})
    kw["placement"] = _apply_angles("placement", spec.placement, data.get("placement") or {},
                                    _ANGLE_KEYS, scalar=("cone_half_angle_deg",))
    kw["fading"] = _apply_simple("fading", spec.fading, data.get("fading") or {})
    kw["harvester"] = _apply_simple("harvester", spec.harvester, data.get("harvester") or {})
    kw["ml_grid"] = _apply_angles("ml_grid", spec.ml_grid, data.get("ml_grid") or {},
                                  {"azimuth_range_deg": "azimuth_range",
                                   "elevation_range_deg": "elevation_range"})
    for section, keys in _SPEC_SECTIONS.items():
        sec = data.get(section) or {}
        _check_keys(section, sec, keys)
        for k, v in sec.items():
            kw[k] = _sweep_value(k, v, spec)
    return replace(spec, **kw)


def _read_yaml(path) -> Optional[dict]:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def load_harvester(path) -> EhModelParams:
    """Rectifier parameters from the ``harvester`` section of a config file."""
    data = _read_yaml(path) or {}
    _check_keys("<top level>", data, _SECTIONS)
    try:
        return _apply_simple("harvester", EhModelParams(), data.get("harvester") or {})
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path, experiment_id: Optional[str] = None) -> ExperimentSpec:
    """Parse a YAML file (``None`` for built-in defaults) into a validated spec."""
    if path is None:
        return spec_from_dict({}, experiment_id)
    return spec_from_dict(_read_yaml(path), experiment_id)


def _deg_pair(r):
    return [float(np.rad2deg(r[0])), float(np.rad2deg(r[1]))]


def spec_to_dict(spec: ExperimentSpec) -> dict:
    """Fully resolved configuration in the file schema; ``spec_from_dict`` inverts it."""
    pl = spec.placement
    grid = spec.ml_grid
    out = {
        "experiment": spec.experiment_id,
        "system": {f.name: getattr(spec.system, f.name) for f in fields(spec.system)},
        "placement": {
            "distance_range": list(pl.distance_range),
            "azimuth_range_deg": _deg_pair(pl.azimuth_range),
            "elevation_range_deg": _deg_pair(pl.elevation_range),
            "cone_half_angle_deg": None if pl.cone_half_angle is None
            else float(np.rad2deg(pl.cone_half_angle)),
        },
        "fading": {f.name: getattr(spec.fading, f.name) for f in fields(spec.fading)},
        "harvester": {f.name: getattr(spec.harvester, f.name) for f in fields(spec.harvester)},
        "ml_grid": {
            "distance_points": grid.distance_points,
            "distance_range": list(grid.distance_range),
            "azimuth_points": grid.azimuth_points,
            "elevation_points": grid.elevation_points,
            "azimuth_range_deg": _deg_pair(grid.azimuth_range),
            "elevation_range_deg": _deg_pair(grid.elevation_range),
            "refine": grid.refine,
            "refine_sweeps": grid.refine_sweeps,
            "polish": grid.polish,
        },
    }
    for section, keys in _SPEC_SECTIONS.items():
        sec = {}
        for k in keys:
            v = getattr(spec, k)
            if k == "bands":
                v = [{"frequency": float(f), "rows": r, "cols": c} for f, r, c in v]
            elif isinstance(v, tuple):
                v = list(v)
            sec[k] = v
        out[section] = sec
    return out


def dump_config(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)
