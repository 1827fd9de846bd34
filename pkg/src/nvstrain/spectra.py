"""
Continuous-wave and stroboscopic resonant-excitation spectra of a driven NV,
2-D drive maps, Lorentzian peak fitting and the spectrum CSV formats.
"""
from __future__ import annotations

import io
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import lm
from .errors import FitError, NumericError
from .mechanics import DriveState, MechanicalMode, drive_response
from .nv_core import POISSON_RATIO_DIAMOND, CouplingConstants, stuckelberg_angle_array
from .optics import LaserPolarization, saturated_intensity
from .site import NvSite

__all__ = [
    "NvSite", "Spectrum", "StrobeWindow", "PeakFit", "lorentzian",
    "cw_spectrum", "strobe_spectrum", "drive_detuning_map", "amplitude_map",
    "fit_lorentzian_peaks", "write_spectrum_csv", "read_spectrum_csv",
    "write_map_csv", "read_map_csv",
]

QUAD_RTOL = 1e-6
CW_START_SAMPLES = 512
STROBE_MIN_SAMPLES = 64
MAX_SAMPLES = 1 << 20
# grid points processed per vectorized block
_CHUNK_ELEMENTS = 1 << 22


def lorentzian(f, center, fwhm):
    """Peak-normalized Lorentzian of full width ``fwhm``."""
    h2 = (0.5 * fwhm) ** 2
    return h2 / (h2 + (np.asarray(f) - center) ** 2)


@dataclass
class Spectrum:
    detunings: np.ndarray
    signal: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.detunings.shape != self.signal.shape or self.detunings.ndim != 1:
            raise ValueError("detunings and signal must be 1-D of equal length")
        if np.any(np.diff(self.detunings) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(self.signal < 0):
            raise ValueError("signal must be nonnegative")


@dataclass(frozen=True)
class StrobeWindow:
    """Detection gate ``[start_T, start_T + tau]`` within one drive period (s).

    ``tau`` equal to the full period is accepted as the CW limit.
    """

    start_T: float
    tau: float = 60e-9
    phase_uncertainty: float = np.deg2rad(5.0)

    def validate(self, period: float):
        if not 0 < self.tau <= period:
            raise ValueError("strobe window needs 0 < tau <= period")
        if not 0 <= self.start_T < period:
            raise ValueError("strobe start must lie within [0, period)")

    @classmethod
    def at_antinode(cls, period: float, which: str = "down", tau: float = 60e-9,
                    phase_uncertainty: float = np.deg2rad(5.0)) -> "StrobeWindow":
        """Window centred on the upper (t = 0) or lower (t = period/2) turning point."""
        if which == "down":
            start = period / 2 - tau / 2
        elif which == "up":
            start = (period - tau / 2) % period
        else:
            raise ValueError("antinode must be 'up' or 'down'")
        return cls(start, tau, phase_uncertainty)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    return grid


def _line_params(site, x, pol, constants, nu, modulate_intensity):
    """Centers (detuning) and PL heights of both transitions at deflections x."""
    fp, fm, e1, e2 = site.frequencies_at(x, constants, nu)
    if modulate_intensity:
        theta = stuckelberg_angle_array(e1, e2)
    else:
        _, _, e10, e20 = site.frequencies_at(0.0, constants, nu)
        theta = np.full_like(np.asarray(x, dtype=float), float(stuckelberg_angle_array(e10, e20)))
    pat = saturated_intensity(site.group, theta, pol)
    scale = site.pl_scale
    return (fp - site.f_zpl, fm - site.f_zpl,
            scale * np.broadcast_to(pat.i_ex, np.shape(x)),
            scale * np.broadcast_to(pat.i_ey, np.shape(x)))


def _weighted_lines(grid, centers_p, centers_m, h_p, h_m, weights, fwhm):
    """sum_k w_k [h_p L(f; c_p) + h_m L(f; c_m)] evaluated in blocks over the grid."""
    out = np.empty_like(grid)
    block = max(1, _CHUNK_ELEMENTS // max(len(weights), 1))
    wp, wm = weights * h_p, weights * h_m
    for i in range(0, grid.size, block):
        f = grid[i:i + block, None]
        out[i:i + block] = (lorentzian(f, centers_p[None, :], fwhm) @ wp
                            + lorentzian(f, centers_m[None, :], fwhm) @ wm)
    return out


def _converged(a, b, rtol):
    scale = np.maximum(np.abs(b), 1e-12 * max(np.max(np.abs(b)), 1e-300))
    return np.max(np.abs(a - b) / scale) <= rtol


def _average(grid, site, drive, pol, constants, nu, modulate_intensity, t0, length,
             n_start, periodic):
    """Time average of the lineshape over ``[t0, t0 + length]`` with step halving."""
    n = n_start
    prev = None
    while n <= MAX_SAMPLES:
        if periodic:
            # midpoint nodes never sit on x = 0, where a near-degenerate E
            # doublet swings its dipole angle through 45 degrees almost instantly
            t = t0 + length * (np.arange(n) + 0.5) / n
            w = np.full(n, 1.0 / n)
        else:
            t = t0 + length * np.arange(n + 1) / n
            w = np.full(n + 1, 1.0 / n)
            w[0] = w[-1] = 0.5 / n
        x = drive.x_c * np.cos(2 * np.pi * drive.f_piezo * t)
        cp, cm, hp, hm = _line_params(site, x, pol, constants, nu, modulate_intensity)
        cur = _weighted_lines(grid, cp, cm, hp, hm, w, site.linewidth_gamma)
        if prev is not None and _converged(prev, cur, QUAD_RTOL):
            return cur, n
        if drive.x_c == 0:
            return cur, n
        prev = cur
        n *= 2
    raise NumericError(
        f"time average did not converge to {QUAD_RTOL:g} relative with {MAX_SAMPLES} samples")


def cw_spectrum(site: NvSite, drive: DriveState, pol: LaserPolarization, grid,
                constants: CouplingConstants = CouplingConstants(),
                nu: float = POISSON_RATIO_DIAMOND, modulate_intensity: bool = True) -> Spectrum:
    """Time-averaged RES spectrum of a cantilever-driven NV.

    Each laser detuning (Hz, relative to ``site.f_zpl``) receives the average
    over one drive period of ``I(x(t)) * L(f; f(x(t)), Gamma)`` summed over
    E_x and E_y. With ``modulate_intensity=False`` the absorption intensities
    are frozen at their undriven values.

    Raises
    ------
    NumericError
        If step halving does not reach 1e-6 relative agreement.
    """
    grid = _check_grid(grid)
    signal, n = _average(grid, site, drive, pol, constants, nu, modulate_intensity,
                         0.0, drive.period, CW_START_SAMPLES, periodic=True)
    meta = {"kind": "cw", "x_c_m": drive.x_c, "f_piezo_hz": drive.f_piezo, "samples": n}
    return Spectrum(grid, np.maximum(signal, 0.0), meta)


def strobe_spectrum(site: NvSite, drive: DriveState, pol: LaserPolarization,
                    window: StrobeWindow, grid,
                    constants: CouplingConstants = CouplingConstants(),
                    nu: float = POISSON_RATIO_DIAMOND, modulate_intensity: bool = True) -> Spectrum:
    """Spectrum recorded only during ``window``, normalized by its length.

    A window covering the whole period is averaged with the same periodic
    rule as :func:`cw_spectrum`, so the two agree exactly in that limit.
    """
    grid = _check_grid(grid)
    window.validate(drive.period)
    full = window.tau >= drive.period * (1 - 1e-12)
    signal, n = _average(grid, site, drive, pol, constants, nu, modulate_intensity,
                         window.start_T, window.tau,
                         CW_START_SAMPLES if full else STROBE_MIN_SAMPLES, periodic=full)
    meta = {"kind": "strobe", "x_c_m": drive.x_c, "f_piezo_hz": drive.f_piezo,
            "start_s": window.start_T, "tau_s": window.tau, "samples": n}
    return Spectrum(grid, np.maximum(signal, 0.0), meta)


def _n_threads():
    try:
        return max(1, int(os.environ.get("NVSTRAIN_THREADS", "1")))
    except ValueError:
        return 1


def _rows(func, items):
    n = _n_threads()
    if n == 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(func, items))


def drive_detuning_map(site: NvSite, mode: MechanicalMode, pol: LaserPolarization,
                       piezo_grid, laser_grid, constants=CouplingConstants(),
                       nu=POISSON_RATIO_DIAMOND) -> np.ndarray:
    """CW spectra (one row per piezo frequency) with the amplitude set by the mechanical response."""
    piezo_grid = _check_grid(piezo_grid)
    laser_grid = _check_grid(laser_grid)

    def row(fp):
        d = DriveState(mode, fp, float(min(drive_response(mode, fp), mode.x_max)))
        return cw_spectrum(site, d, pol, laser_grid, constants, nu).signal

    return np.vstack(_rows(row, piezo_grid))


def amplitude_map(site: NvSite, mode: MechanicalMode, pol: LaserPolarization,
                  amplitude_grid, laser_grid, constants=CouplingConstants(),
                  nu=POISSON_RATIO_DIAMOND) -> np.ndarray:
    """CW spectra (one row per tip amplitude) under resonant drive."""
    amplitude_grid = np.asarray(amplitude_grid, dtype=float)
    if amplitude_grid.size > 1:
        _check_grid(amplitude_grid)
    laser_grid = _check_grid(laser_grid)

    def row(xc):
        d = DriveState(MechanicalMode(mode.f_c, mode.quality_q, max(xc, mode.x_max)), mode.f_c, xc)
        return cw_spectrum(site, d, pol, laser_grid, constants, nu).signal

    return np.vstack(_rows(row, amplitude_grid))


# --------------------------------------------------------------------------
# Lorentzian fitting

@dataclass
class PeakFit:
    center: float
    fwhm: float
    amplitude: float
    center_err: float
    fwhm_err: float
    amplitude_err: float


@dataclass
class PeakFitResult:
    peaks: list
    background: float
    background_err: float
    residual_norm: float
    converged: bool
    degenerate: bool = False


def _multi_lorentz(p, f, n):
    out = np.full_like(f, p[-1])
    for k in range(n):
        c, w, a = p[3 * k:3 * k + 3]
        out += a * lorentzian(f, c, w)
    return out


def _multi_lorentz_jac(p, f, n):
    J = np.empty((f.size, 3 * n + 1))
    for k in range(n):
        c, w, a = p[3 * k:3 * k + 3]
        h2 = 0.25 * w * w
        d = f - c
        den = h2 + d * d
        L = h2 / den
        J[:, 3 * k] = a * 2 * h2 * d / den ** 2
        J[:, 3 * k + 1] = a * 0.5 * w * d * d / den ** 2
        J[:, 3 * k + 2] = L
    J[:, -1] = 1.0
    return J


def fit_lorentzian_peaks(spec: Spectrum, n_peaks: int = 2, sigma=None) -> PeakFitResult:
    """Fit ``n_peaks`` Lorentzians plus a constant background.

    Peaks are seeded from the most prominent local maxima and returned in
    ascending order of center frequency. Uncertainties come from the
    Jacobian at the optimum, scaled by the reduced chi-square when ``sigma``
    is not given.

    Raises
    ------
    FitError
        When no peak with nonzero prominence exists or the optimizer fails.
    """
    if n_peaks not in (1, 2):
        raise ValueError("n_peaks must be 1 or 2")
    f, y = spec.detunings, spec.signal
    if f.size < 8 * n_peaks:
        raise ValueError(f"need at least {8 * n_peaks} samples for {n_peaks} peaks")
    span = np.ptp(y)
    if span <= 0:
        raise FitError("spectrum has no peak with nonzero prominence", residual_norm=0.0)
    # pad so edge maxima count as peaks
    ypad = np.concatenate([[y.min() - span], y, [y.min() - span]])
    idx, props = find_peaks(ypad, prominence=span * 1e-3)
    idx = idx - 1
    if idx.size == 0:
        raise FitError("spectrum has no peak with nonzero prominence", residual_norm=0.0)
    order = np.argsort(props["prominences"])[::-1][:n_peaks]
    seeds = sorted(idx[order])
    base = float(np.min(y))
    df = np.median(np.diff(f))
    p0 = []
    for i in seeds:
        amp = y[i] - base
        half = base + amp / 2
        lo = i
        while lo > 0 and y[lo] > half:
            lo -= 1
        hi = i
        while hi < y.size - 1 and y[hi] > half:
            hi += 1
        width = max(f[hi] - f[lo], 2 * df)
        p0 += [f[i], width, amp]
    while len(p0) < 3 * n_peaks:
        # a single visible peak seeds both components
        c, w, a = p0[:3]
        p0 = [c - w / 4, w, a / 2, c + w / 4, w, a / 2]
    p0.append(base)
    p0 = np.array(p0)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    scale = np.array([max(abs(v), 1.0) for v in p0])
    scale[0::3][:n_peaks] = np.maximum(np.abs(p0[1::3][:n_peaks]), df)
    res = lm.levenberg_marquardt(
        lambda p: w * (_multi_lorentz(p, f, n_peaks) - y),
        lambda p: w[:, None] * _multi_lorentz_jac(p, f, n_peaks),
        p0, x_scale=scale)
    p = res.x
    cov = lm.covariance_from_jacobian(res.jacobian, res.cost, f.size, scale_by_residual=sigma is None)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    peaks = []
    for k in range(n_peaks):
        c, wd, a = p[3 * k:3 * k + 3]
        peaks.append(PeakFit(float(c), float(abs(wd)), float(a),
                             float(err[3 * k]), float(err[3 * k + 1]), float(err[3 * k + 2])))
    peaks.sort(key=lambda pk: pk.center)
    degenerate = False
    if n_peaks == 2:
        gap = peaks[1].center - peaks[0].center
        degenerate = gap < 0.25 * min(pk.fwhm for pk in peaks)
        if degenerate:
            warnings.warn("fitted peaks are closer than a quarter linewidth", RuntimeWarning)
    return PeakFitResult(peaks, float(p[-1]), float(err[-1]), res.residual_norm,
                         res.converged, degenerate)


# --------------------------------------------------------------------------
# CSV formats

SPECTRUM_HEADER = "detuning_hz,signal_kcps"


def _fmt(v):
    return repr(float(v))


def write_spectrum_csv(spec: Spectrum, path):
    lines = [SPECTRUM_HEADER]
    lines += [f"{_fmt(d)},{_fmt(s)}" for d, s in zip(spec.detunings, spec.signal)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_spectrum_csv(path) -> Spectrum:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != SPECTRUM_HEADER:
            raise ValueError(f"unexpected spectrum header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Spectrum(data[:, 0], data[:, 1])


def write_map_csv(path, key: str, keys, laser_grid, values):
    """Write a 2-D map as blocks, each led by ``# <key>=<value>``."""
    if key not in ("piezo_hz", "xc_m"):
        raise ValueError("map key must be 'piezo_hz' or 'xc_m'")
    values = np.asarray(values, dtype=float)
    buf = io.StringIO()
    for kval, row in zip(keys, values):
        buf.write(f"# {key}={_fmt(kval)}\n{SPECTRUM_HEADER}\n")
        for d, s in zip(laser_grid, row):
            buf.write(f"{_fmt(d)},{_fmt(s)}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_map_csv(path):
    """Return ``(key, keys, laser_grid, values)`` from a map CSV."""
    key, keys, rows, grid = None, [], [], None
    cur_f, cur_s = [], []

    def flush():
        nonlocal grid
        if not keys:
            return
        f = np.array(cur_f)
        if grid is None:
            grid = f
        elif not np.array_equal(grid, f):
            raise ValueError("map blocks use different laser grids")
        rows.append(np.array(cur_s))

    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                flush()
                cur_f, cur_s = [], []
                k, _, v = line[1:].strip().partition("=")
                if key is None:
                    key = k
                elif k != key:
                    raise ValueError("mixed map keys")
                keys.append(float(v))
            elif line == SPECTRUM_HEADER:
                continue
            else:
                a, b = line.split(",")
                cur_f.append(float(a))
                cur_s.append(float(b))
    flush()
    return key, np.array(keys), grid, np.vstack(rows)
