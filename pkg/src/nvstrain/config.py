"""
JSON run configuration for the command-line front end.

Keys carry their units (``f_c_hz``, ``length_m``, ``phi_deg``); angles are
given in degrees here and converted to radians. Unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mechanics import (
    CALIBRATION_FRACTION,
    DEFAULT_LENGTH,
    DEFAULT_NV_DEPTH,
    DEFAULT_THICKNESS,
    DEFAULT_WIDTH,
    DEPTH_UNCERTAINTY,
    CantileverGeometry,
    MechanicalMode,
)
from .metrics import DeviceProposal
from .nv_core import POISSON_RATIO_DIAMOND, CouplingConstants, IntrinsicStrain, NvOrientation
from .optics import DEFAULT_P_SAT, LaserPolarization
from .site import NvSite

_REQUIRED = object()

_SCHEMAS = {
    "device": {
        "length_m": DEFAULT_LENGTH, "width_m": DEFAULT_WIDTH, "thickness_m": DEFAULT_THICKNESS,
        "f_c_hz": 870e3, "quality_q": 2e4, "x_max_m": 10e-9,
        "temperature_k": 4.2, "poisson_ratio": POISSON_RATIO_DIAMOND,
    },
    "site": {
        "site_id": None, "group": None, "axis": None, "f_zpl_hz": 0.0,
        "df_a1_hz": 0.0, "df_e1_hz": 0.0, "df_e2_hz": 0.0,
        "linewidth_hz": 1e9, "pl_scale_kcps": 1.0,
        "depth_m": DEFAULT_NV_DEPTH, "axial_z_m": 0.0,
    },
    "laser": {
        "phi_deg": 0.0, "psi_deg": 54.0, "p_in_w": DEFAULT_P_SAT, "p_sat_w": DEFAULT_P_SAT,
        "detuning_min_hz": -20e9, "detuning_max_hz": 20e9, "points": 401,
    },
    "drive": {
        "x_c_m": None, "f_piezo_hz": None,
        "piezo_start_hz": None, "piezo_stop_hz": None, "piezo_points": None,
        "amplitude_start_m": None, "amplitude_stop_m": None, "amplitude_points": None,
    },
    "strobe": {"antinode": "down", "start_s": None, "tau_s": 60e-9, "phase_uncertainty_deg": 5.0},
    "constants": {
        "lambda_a1_hz_per_strain": -1.95e15, "lambda_a1p_hz_per_strain": 2.16e15,
        "lambda_e_hz_per_strain": -0.85e15, "lambda_ep_hz_per_strain": 0.02e15,
    },
    "synthesis": {
        "amplitudes_m": [0.0, 4e-9, 8e-9, 12e-9, 16e-9, 20e-9, 24e-9],
        "noise": False, "depth_uncertainty_m": DEPTH_UNCERTAINTY,
        "phase_uncertainty_deg": 5.0, "polarization_points": 37,
        "polarization_noise_kcps": 0.0,
    },
    "fit": {
        "dataset_csv": None, "observations_json": None,
        "calibration_fraction": CALIBRATION_FRACTION,
        "polarization_csv": None, "group": "A", "p_in_w": DEFAULT_P_SAT,
    },
    "match": {
        "target_theta_deg": None, "target_frequency_hz": None, "branch": "plus",
        "max_deflection_m": 100e-9,
    },
    "metrics": {
        "f_c_hz": 238e6, "quality_q": 1e5, "temperature_k": 4.2, "eps_zero_point": 9.3e-9,
        "g_hz": None, "gamma2_hz": 100e6, "rabi_omega_hz": 100e6, "linewidth_hz": 100e6,
    },
}

_TOP_KEYS = {"device", "sites", "laser", "drive", "strobe", "constants", "seed",
             "site_index", "synthesis", "fit", "match", "metrics"}


def _section(raw, name, where=None):
    where = where or name
    schema = _SCHEMAS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r}")
    out = dict(schema)
    out.update(raw)
    for k, v in out.items():
        if isinstance(v, bool) or v is None or isinstance(v, (str, list)):
            continue
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{where}.{k}: must be a finite number")
    return out


def _positive(sec, where, *keys):
    for k in keys:
        if sec[k] is not None and not sec[k] > 0:
            raise ConfigError(f"{where}.{k}: must be positive")


@dataclass
class GridSpec:
    start: float
    stop: float
    points: int

    def values(self):
        return np.linspace(self.start, self.stop, self.points)


@dataclass
class RunConfig:
    geometry: CantileverGeometry
    mode: MechanicalMode
    temperature: float
    nu: float
    sites: list
    laser: LaserPolarization
    laser_grid: GridSpec
    drive: dict
    strobe: dict | None
    constants: CouplingConstants
    seed: int
    site_index: int
    synthesis: dict
    fit: dict
    match: dict
    metrics: DeviceProposal
    metrics_g: float | None
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def site(self) -> NvSite:
        if not self.sites:
            raise ConfigError("sites: at least one NV site is required")
        return self.sites[self.site_index]

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _build_site(raw, i, geo_defaults, where):
    s = _section(raw, "site", where)
    if s["axis"] is not None:
        try:
            orient = NvOrientation(s["axis"])
        except ValueError as exc:
            raise ConfigError(f"{where}.axis: {exc}") from None
        if s["group"] is not None and s["group"] != orient.group:
            raise ConfigError(f"{where}.group: contradicts axis {s['axis']}")
    elif s["group"] in ("A", "B"):
        orient = NvOrientation.from_group(s["group"])
    else:
        raise ConfigError(f"{where}: needs 'group' (A or B) or 'axis'")
    _positive(s, where, "linewidth_hz")
    if s["pl_scale_kcps"] < 0:
        raise ConfigError(f"{where}.pl_scale_kcps: must be nonnegative")
    try:
        geo = CantileverGeometry(geo_defaults.length_l, geo_defaults.width_w,
                                 geo_defaults.thickness_t, s["depth_m"], s["axial_z_m"])
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return NvSite(orient, IntrinsicStrain(s["df_a1_hz"], s["df_e1_hz"], s["df_e2_hz"]),
                  s["f_zpl_hz"], s["linewidth_hz"], s["pl_scale_kcps"], geo,
                  s["site_id"] or f"NV{i}")


def parse_config(raw: dict, base_dir=None) -> RunConfig:
    """Validate a decoded JSON document and build a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        Naming the offending key and the violated constraint.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown key {unknown[0]!r}")

    dev = _section(raw.get("device"), "device")
    _positive(dev, "device", "length_m", "width_m", "thickness_m", "f_c_hz", "quality_q",
              "temperature_k")
    if dev["x_max_m"] < 0:
        raise ConfigError("device.x_max_m: must be nonnegative")
    geometry = CantileverGeometry(dev["length_m"], dev["width_m"], dev["thickness_m"],
                                  min(DEFAULT_NV_DEPTH, dev["thickness_m"]), 0.0)
    mode = MechanicalMode(dev["f_c_hz"], dev["quality_q"], dev["x_max_m"])

    raw_sites = raw.get("sites", [])
    if not isinstance(raw_sites, list):
        raise ConfigError("sites: expected a list")
    sites = [_build_site(s, i, geometry, f"sites[{i}]") for i, s in enumerate(raw_sites)]
    ids = [s.site_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ConfigError("sites: site_id values must be unique")

    las = _section(raw.get("laser"), "laser")
    _positive(las, "laser", "p_sat_w")
    if las["p_in_w"] < 0:
        raise ConfigError("laser.p_in_w: must be nonnegative")
    if not isinstance(las["points"], int) or las["points"] < 2:
        raise ConfigError("laser.points: must be an integer >= 2")
    if not las["detuning_max_hz"] > las["detuning_min_hz"]:
        raise ConfigError("laser.detuning_max_hz: must exceed detuning_min_hz")
    laser = LaserPolarization(np.deg2rad(las["phi_deg"]), np.deg2rad(las["psi_deg"]),
                              las["p_in_w"], las["p_sat_w"])
    grid = GridSpec(las["detuning_min_hz"], las["detuning_max_hz"], las["points"])

    drive = _section(raw.get("drive"), "drive")
    if drive["x_c_m"] is not None and drive["x_c_m"] < 0:
        raise ConfigError("drive.x_c_m: must be nonnegative")
    for k in ("piezo_points", "amplitude_points"):
        if drive[k] is not None and (not isinstance(drive[k], int) or drive[k] < 2):
            raise ConfigError(f"drive.{k}: must be an integer >= 2")

    strobe = None
    if "strobe" in raw:
        strobe = _section(raw["strobe"], "strobe")
        if strobe["antinode"] not in ("up", "down"):
            raise ConfigError("strobe.antinode: must be 'up' or 'down'")
        _positive(strobe, "strobe", "tau_s")

    c = _section(raw.get("constants"), "constants")
    constants = CouplingConstants(c["lambda_a1_hz_per_strain"], c["lambda_a1p_hz_per_strain"],
                                  c["lambda_e_hz_per_strain"], c["lambda_ep_hz_per_strain"])

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")
    site_index = raw.get("site_index", 0)
    if not isinstance(site_index, int) or (sites and not 0 <= site_index < len(sites)):
        raise ConfigError("site_index: must index an entry of sites")

    syn = _section(raw.get("synthesis"), "synthesis")
    if not isinstance(syn["amplitudes_m"], list) or any(
            not isinstance(a, (int, float)) or a < 0 for a in syn["amplitudes_m"]):
        raise ConfigError("synthesis.amplitudes_m: must be a list of nonnegative numbers")
    if not isinstance(syn["noise"], bool):
        raise ConfigError("synthesis.noise: must be true or false")
    if not isinstance(syn["polarization_points"], int) or syn["polarization_points"] < 8:
        raise ConfigError("synthesis.polarization_points: must be an integer >= 8")

    fit = _section(raw.get("fit"), "fit")
    if fit["group"] not in ("A", "B"):
        raise ConfigError("fit.group: must be 'A' or 'B'")
    if not 0 <= fit["calibration_fraction"] < 1:
        raise ConfigError("fit.calibration_fraction: must lie in [0, 1)")

    match = _section(raw.get("match"), "match")
    if match["branch"] not in ("plus", "minus"):
        raise ConfigError("match.branch: must be 'plus' or 'minus'")

    met = _section(raw.get("metrics"), "metrics")
    _positive(met, "metrics", "f_c_hz", "quality_q", "temperature_k", "gamma2_hz",
              "rabi_omega_hz", "linewidth_hz")
    if met["eps_zero_point"] < 0:
        raise ConfigError("metrics.eps_zero_point: must be nonnegative")
    proposal = DeviceProposal(met["f_c_hz"], met["quality_q"], met["temperature_k"],
                              met["eps_zero_point"], met["gamma2_hz"], met["rabi_omega_hz"],
                              met["linewidth_hz"], constants, dev["poisson_ratio"])

    return RunConfig(geometry, mode, dev["temperature_k"], dev["poisson_ratio"], sites, laser,
                     grid, drive, strobe, constants, seed, site_index, syn, fit, match,
                     proposal, met["g_hz"], Path(base_dir) if base_dir else Path.cwd())


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    return parse_config(raw, path.parent)
