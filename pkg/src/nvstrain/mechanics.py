"""
Singly-clamped cantilever: fundamental flexural strain profile, driven
response and thermal phonon statistics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants as sc

# Fundamental-mode eigenvalue of a clamped-free Euler-Bernoulli beam and the
# mode-shape ratio that multiplies the sin/sinh pair.
BETA_1 = 1.875
MODE_RATIO_1 = 1.3622

DEFAULT_LENGTH = 20e-6
DEFAULT_WIDTH = 4e-6
DEFAULT_THICKNESS = 1e-6
DEFAULT_NV_DEPTH = 51.5e-9
DEPTH_UNCERTAINTY = 13e-9
CALIBRATION_FRACTION = 0.15


@dataclass(frozen=True)
class CantileverGeometry:
    """Beam dimensions and the NV position inside the beam (all in metres).

    ``nv_depth_d`` is measured from the top surface, ``nv_axial_z`` from the clamp.
    """

    length_l: float = DEFAULT_LENGTH
    width_w: float = DEFAULT_WIDTH
    thickness_t: float = DEFAULT_THICKNESS
    nv_depth_d: float = DEFAULT_NV_DEPTH
    nv_axial_z: float = 0.0

    def __post_init__(self):
        for name in ("length_l", "width_w", "thickness_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.nv_depth_d <= self.thickness_t:
            raise ValueError("nv_depth_d must lie within [0, thickness_t]")
        if not 0 <= self.nv_axial_z <= self.length_l:
            raise ValueError("nv_axial_z must lie within [0, length_l]")

    @property
    def neutral_axis_offset(self) -> float:
        """Distance R_0 of the NV above the neutral axis."""
        return self.thickness_t / 2 - self.nv_depth_d


@dataclass(frozen=True)
class MechanicalMode:
    f_c: float = 870e3
    quality_q: float = 2e4
    x_max: float = 10e-9

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")
        if not self.quality_q > 0:
            raise ValueError("quality_q must be positive")
        if not self.x_max >= 0:
            raise ValueError("x_max must be nonnegative")

    @property
    def linewidth(self) -> float:
        """Mechanical linewidth f_c/Q in Hz."""
        return self.f_c / self.quality_q


@dataclass(frozen=True)
class DriveState:
    """Cantilever driven at ``f_piezo`` with realized tip amplitude ``x_c``."""

    mode: MechanicalMode
    f_piezo: float
    x_c: float

    def __post_init__(self):
        if not self.f_piezo > 0:
            raise ValueError("f_piezo must be positive")
        if self.x_c < 0:
            raise ValueError("x_c must be nonnegative")
        if self.x_c > self.mode.x_max * (1 + 1e-12):
            raise ValueError("x_c exceeds the resonant amplitude x_max")

    @classmethod
    def driven(cls, mode: MechanicalMode, f_piezo: float) -> "DriveState":
        return cls(mode, f_piezo, drive_response(mode, f_piezo))

    @classmethod
    def resonant(cls, x_c: float, f_c: float = 870e3, quality_q: float = 2e4) -> "DriveState":
        """Drive on resonance with tip amplitude ``x_c``."""
        return cls(MechanicalMode(f_c, quality_q, x_c), f_c, x_c)

    @property
    def period(self) -> float:
        return 1.0 / self.f_piezo


def mode_bracket(zeta):
    """Curvature shape of the fundamental mode at normalized position ``zeta = Z/l``."""
    u = BETA_1 * np.asarray(zeta, dtype=float)
    return np.cos(u) + np.cosh(u) - (np.sin(u) + np.sinh(u)) / MODE_RATIO_1


def mode_strain(g: CantileverGeometry, x_c):
    """Axial strain at the NV for tip deflection ``x_c`` (m).

    Positive ``x_c`` with the NV above the neutral axis gives tension (eps > 0).
    Linear in ``x_c``; accepts arrays.
    """
    l = g.length_l
    return (g.neutral_axis_offset * np.asarray(x_c, dtype=float) / (2 * l * l)
            * BETA_1 ** 2 * mode_bracket(g.nv_axial_z / l))


def strain_per_deflection(g: CantileverGeometry) -> float:
    return float(mode_strain(g, 1.0))


def drive_response(mode: MechanicalMode, f_piezo):
    """Tip amplitude for a piezo drive at ``f_piezo``: Lorentzian of FWHM f_c/Q."""
    half = mode.linewidth / 2
    return mode.x_max * half ** 2 / (half ** 2 + (np.asarray(f_piezo, dtype=float) - mode.f_c) ** 2)


def displacement(d: DriveState, t):
    """Physical tip displacement ``x_c cos(2 pi f_piezo t)``."""
    return d.x_c * np.cos(2 * np.pi * d.f_piezo * np.asarray(t, dtype=float))


def thermal_occupation(temperature: float, f_c: float) -> float:
    """Bose-Einstein occupation of a mode at ``f_c`` (Hz) and ``temperature`` (K)."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    return float(1.0 / np.expm1(sc.h * f_c / (sc.k * temperature)))


def thermalization_rate(n_bar: float, f_c: float, quality_q: float) -> float:
    """Thermal decoherence rate n_bar*f_c/Q in Hz."""
    if n_bar < 0 or not f_c > 0 or not quality_q > 0:
        raise ValueError("thermalization_rate needs n_bar >= 0 and positive f_c, Q")
    return n_bar * f_c / quality_q
