"""
Command-line front end.

Every command reads a JSON run configuration (``--config``) and writes
CSV or JSON to ``--out`` (standard output when omitted). Exit status is
0 on success, 2 for configuration problems, 3 for fit, numeric and
reachability failures and 64 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    DegenerateStrainError,
    DesignError,
    FitError,
    NumericError,
    UnreachableError,
)
from .inference import (
    fit_lambdas,
    fit_polarization,
    read_dataset_csv,
    read_observations_json,
    read_polarization_csv,
    synthesize_polarization_scan,
    synthesize_strain_scan,
    write_dataset_csv,
    write_observations_json,
    write_polarization_csv,
)
from .mechanics import DriveState, MechanicalMode, mode_strain
from .metrics import report
from .nv_core import stuckelberg_angle
from .optics import match_polarization
from .site import match_frequency
from .spectra import (
    StrobeWindow,
    amplitude_map,
    cw_spectrum,
    drive_detuning_map,
    strobe_spectrum,
    write_map_csv,
    write_spectrum_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3
EXIT_USAGE = 64

COMMANDS = {
    "simulate": ("cw", "strobe", "map-detuning", "map-amplitude", "polarization", "dataset"),
    "fit": ("lambdas", "polarization"),
    "match": ("frequency", "polarization"),
    "metrics": ("report",),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nvstrain", description="Strain-tuned NV optical transitions.")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    for name, actions in COMMANDS.items():
        gp = groups.add_parser(name)
        sub = gp.add_subparsers(dest="action", required=True, parser_class=_Parser)
        for action in actions:
            p = sub.add_parser(action)
            p.add_argument("--config", required=True, help="JSON run configuration")
            p.add_argument("--out", help="output file (default: standard output)")
    return parser


# --------------------------------------------------------------------------
# output helpers

def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _emit_text(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _emit_file(writer, out, *args):
    """Run a path-based writer, redirecting to stdout when ``out`` is None."""
    if out is not None:
        writer(*args, out)
        return
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "out"
        writer(*args, path)
        sys.stdout.write(path.read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# configuration helpers

def _require(section: dict, key: str, where: str):
    if section.get(key) is None:
        raise ConfigError(f"{where}.{key}: required by this command")
    return section[key]


def _drive_state(cfg: RunConfig) -> DriveState:
    d = cfg.drive
    mode = cfg.mode
    if d["x_c_m"] is None:
        if d["f_piezo_hz"] is None:
            return DriveState(mode, mode.f_c, 0.0)
        return DriveState.driven(mode, d["f_piezo_hz"])
    xc = d["x_c_m"]
    f_p = mode.f_c if d["f_piezo_hz"] is None else d["f_piezo_hz"]
    if f_p <= 0:
        raise ConfigError("drive.f_piezo_hz: must be positive")
    return DriveState(MechanicalMode(mode.f_c, mode.quality_q, max(mode.x_max, xc)), f_p, xc)


def _grid(start, stop, points, where):
    if not stop > start:
        raise ConfigError(f"{where}: stop must exceed start")
    return np.linspace(start, stop, points)


def _polarization_phi(cfg: RunConfig):
    return np.deg2rad(np.linspace(0.0, 180.0, cfg.synthesis["polarization_points"]))


def synthesize_dataset(cfg: RunConfig):
    """Strobed strain scans for every configured site.

    Deterministic: the noise generator is seeded from ``cfg.seed`` and sites
    are processed in configuration order.
    """
    if not cfg.sites:
        raise ConfigError("sites: at least one NV site is required")
    syn = cfg.synthesis
    rng = np.random.default_rng(cfg.seed) if syn["noise"] else None
    phase = np.deg2rad(syn["phase_uncertainty_deg"])
    return [synthesize_strain_scan(s, syn["amplitudes_m"], cfg.constants, cfg.nu, rng,
                                   phase, syn["depth_uncertainty_m"])
            for s in cfg.sites]


def _site_theta(site) -> float:
    try:
        return stuckelberg_angle(site.intrinsic)
    except DegenerateStrainError:
        return 0.0


# --------------------------------------------------------------------------
# commands

def _simulate_cw(cfg, out):
    spec = cw_spectrum(cfg.site, _drive_state(cfg), cfg.laser, cfg.laser_grid.values(),
                       cfg.constants, cfg.nu)
    _emit_file(write_spectrum_csv, out, spec)


def _simulate_strobe(cfg, out):
    if cfg.strobe is None:
        raise ConfigError("strobe: section required by 'simulate strobe'")
    drive = _drive_state(cfg)
    s = cfg.strobe
    phase = np.deg2rad(s["phase_uncertainty_deg"])
    if s["start_s"] is None:
        window = StrobeWindow.at_antinode(drive.period, s["antinode"], s["tau_s"], phase)
    else:
        window = StrobeWindow(s["start_s"], s["tau_s"], phase)
    try:
        window.validate(drive.period)
    except ValueError as exc:
        raise ConfigError(f"strobe: {exc}") from None
    spec = strobe_spectrum(cfg.site, drive, cfg.laser, window, cfg.laser_grid.values(),
                           cfg.constants, cfg.nu)
    _emit_file(write_spectrum_csv, out, spec)


def _write_map(key, keys, grid, values, path):
    write_map_csv(path, key, keys, grid, values)


def _simulate_map_detuning(cfg, out):
    d = cfg.drive
    piezo = _grid(_require(d, "piezo_start_hz", "drive"), _require(d, "piezo_stop_hz", "drive"),
                  _require(d, "piezo_points", "drive"), "drive.piezo_stop_hz")
    grid = cfg.laser_grid.values()
    values = drive_detuning_map(cfg.site, cfg.mode, cfg.laser, piezo, grid, cfg.constants, cfg.nu)
    _emit_file(_write_map, out, "piezo_hz", piezo, grid, values)


def _simulate_map_amplitude(cfg, out):
    d = cfg.drive
    start = _require(d, "amplitude_start_m", "drive")
    if start < 0:
        raise ConfigError("drive.amplitude_start_m: must be nonnegative")
    amps = _grid(start, _require(d, "amplitude_stop_m", "drive"),
                 _require(d, "amplitude_points", "drive"), "drive.amplitude_stop_m")
    grid = cfg.laser_grid.values()
    values = amplitude_map(cfg.site, cfg.mode, cfg.laser, amps, grid, cfg.constants, cfg.nu)
    _emit_file(_write_map, out, "xc_m", amps, grid, values)


def _simulate_polarization(cfg, out):
    site = cfg.site
    syn = cfg.synthesis
    rng = np.random.default_rng(cfg.seed)
    scan = synthesize_polarization_scan(site.group, _site_theta(site), _polarization_phi(cfg),
                                        cfg.laser.p_in, cfg.laser.p_sat, cfg.laser.psi,
                                        site.pl_scale, rng, syn["polarization_noise_kcps"])
    _emit_file(write_polarization_csv, out, scan)


def _simulate_dataset(cfg, out):
    if out is None:
        raise UsageError("simulate dataset writes two files and needs --out")
    datasets = synthesize_dataset(cfg)
    out = Path(out)
    write_dataset_csv(datasets, out)
    write_observations_json(datasets, out.with_name(out.stem + ".observations.json"))


def _load_datasets(cfg):
    f = cfg.fit
    if f["dataset_csv"] is None:
        return synthesize_dataset(cfg)
    obs = None
    if f["observations_json"] is not None:
        obs = read_observations_json(cfg.resolve(f["observations_json"]))
    else:
        guess = cfg.resolve(f["dataset_csv"])
        guess = guess.with_name(guess.stem + ".observations.json")
        if guess.exists():
            obs = read_observations_json(guess)
    try:
        return read_dataset_csv(cfg.resolve(f["dataset_csv"]), obs)
    except OSError as exc:
        raise ConfigError(f"fit.dataset_csv: cannot read ({exc.strerror})") from None


def _fit_lambdas(cfg, out):
    res = fit_lambdas(_load_datasets(cfg), cfg.nu, cfg.fit["calibration_fraction"], cfg.constants)
    _emit_text(_json_text(res.to_dict()), out)


def _fit_polarization(cfg, out):
    f = cfg.fit
    if f["polarization_csv"] is None:
        site = cfg.site
        rng = np.random.default_rng(cfg.seed)
        scan = synthesize_polarization_scan(site.group, _site_theta(site), _polarization_phi(cfg),
                                            cfg.laser.p_in, cfg.laser.p_sat, cfg.laser.psi,
                                            site.pl_scale, rng,
                                            cfg.synthesis["polarization_noise_kcps"])
    else:
        try:
            scan = read_polarization_csv(cfg.resolve(f["polarization_csv"]), f["group"], f["p_in_w"])
        except OSError as exc:
            raise ConfigError(f"fit.polarization_csv: cannot read ({exc.strerror})") from None
    _emit_text(_json_text(fit_polarization(scan).to_dict()), out)


def _match_frequency(cfg, out):
    m = cfg.match
    target = _require(m, "target_frequency_hz", "match")
    x = match_frequency(cfg.site, target, m["branch"], m["max_deflection_m"], cfg.constants, cfg.nu)
    fp, fm, _, _ = cfg.site.frequencies_at(x, cfg.constants, cfg.nu)
    result = {"site_id": cfg.site.site_id, "branch": m["branch"], "target_frequency_hz": target,
              "deflection_m": x, "strain": float(mode_strain(cfg.site.geometry, x)),
              "f_plus_hz": float(fp), "f_minus_hz": float(fm)}
    _emit_text(_json_text(result), out)


def _match_polarization(cfg, out):
    target = np.deg2rad(_require(cfg.match, "target_theta_deg", "match"))
    m = match_polarization(target, cfg.site, cfg.constants, cfg.nu)
    result = {"site_id": cfg.site.site_id, "target_theta_deg": float(np.rad2deg(target)),
              "e1_shift_hz": m.e1_shift, "e2_shift_hz": m.e2_shift, "strain": m.strain,
              "deflection_m": m.deflection, "antinode": m.antinode}
    _emit_text(_json_text(result), out)


def _metrics_report(cfg, out):
    _emit_text(_json_text(report(cfg.metrics, cfg.metrics_g)), out)


_DISPATCH = {
    ("simulate", "cw"): _simulate_cw,
    ("simulate", "strobe"): _simulate_strobe,
    ("simulate", "map-detuning"): _simulate_map_detuning,
    ("simulate", "map-amplitude"): _simulate_map_amplitude,
    ("simulate", "polarization"): _simulate_polarization,
    ("simulate", "dataset"): _simulate_dataset,
    ("fit", "lambdas"): _fit_lambdas,
    ("fit", "polarization"): _fit_polarization,
    ("match", "frequency"): _match_frequency,
    ("match", "polarization"): _match_polarization,
    ("metrics", "report"): _metrics_report,
}


def run(argv=None) -> int:
    """Execute one command and return its exit status."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        _DISPATCH[(args.group, args.action)](cfg, args.out)
    except UsageError as exc:
        print(f"nvstrain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"nvstrain: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, NumericError, UnreachableError, DesignError, DegenerateStrainError) as exc:
        print(f"nvstrain: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # invariants of the domain types surface as ValueError
        print(f"nvstrain: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run())
