"""
Polarization selection rules of the E_x and E_y transitions.

The laser propagates along [00-1]; ``phi`` is its linear polarization angle
measured from [-110]. ``theta`` is the strain-induced dipole rotation angle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStrainError, UnreachableError
from .mechanics import strain_per_deflection
from .nv_core import (
    DEGENERATE_E_STRAIN_HZ,
    POISSON_RATIO_DIAMOND,
    CouplingConstants,
    canonical_angle,
    stuckelberg_angle,
)

DEFAULT_PSI = np.deg2rad(54.0)
DEFAULT_P_SAT = 0.4e-6

_SQ3 = np.sqrt(3.0)


@dataclass(frozen=True)
class LaserPolarization:
    """Excitation laser: angle ``phi`` and ellipticity delay ``psi`` (rad), powers in W."""

    phi: float = 0.0
    psi: float = DEFAULT_PSI
    p_in: float = DEFAULT_P_SAT
    p_sat: float = DEFAULT_P_SAT

    def __post_init__(self):
        if not self.p_in >= 0:
            raise ValueError("p_in must be nonnegative")
        if not self.p_sat > 0:
            raise ValueError("p_sat must be positive")


@dataclass(frozen=True)
class DipolePattern:
    i_ex: float
    i_ey: float


def _check_group(group):
    if group not in ("A", "B"):
        raise ValueError(f"unknown NV group {group!r}")


def linear_intensity(group: str, theta, phi) -> DipolePattern:
    """Unsaturated absorption of E_x and E_y for linear polarization.

    Group B follows from group A by the reflection phi -> pi/2 - phi.
    Broadcasts over array inputs.
    """
    _check_group(group)
    c, s = np.cos(theta), np.sin(theta)
    if group == "A":
        u, v = np.cos(phi), np.sin(phi)
    else:
        u, v = np.sin(phi), np.cos(phi)
    return DipolePattern((c * u / _SQ3 - s * v) ** 2, (s * u / _SQ3 + c * v) ** 2)


def effective_power_forms(group: str, theta, phi, psi):
    """Quadratic forms multiplying P_in/P_sat in the saturation exponent."""
    _check_group(group)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    if group == "A":
        u2, v2 = np.cos(phi) ** 2, np.sin(phi) ** 2
    else:
        u2, v2 = np.sin(phi) ** 2, np.cos(phi) ** 2
    cross = np.cos(psi) * np.sin(2 * theta) * np.sin(2 * phi) / (2 * _SQ3)
    return s2 * v2 + c2 * u2 / 3 - cross, c2 * v2 + s2 * u2 / 3 + cross


def saturated_intensity(group: str, theta, pol: LaserPolarization, phi=None) -> DipolePattern:
    """Absorption with saturation and laser ellipticity, ``1 - exp(-P_eff/P_sat)``.

    ``phi`` overrides ``pol.phi`` (useful for vectorized polarization scans).
    """
    phi = pol.phi if phi is None else phi
    qx, qy = effective_power_forms(group, theta, phi, pol.psi)
    r = pol.p_in / pol.p_sat
    # quadratic forms are >= 0 analytically; clip roundoff
    return DipolePattern(-np.expm1(-r * np.maximum(qx, 0.0)),
                         -np.expm1(-r * np.maximum(qy, 0.0)))


@dataclass(frozen=True)
class PolarizationMatch:
    """Drive requirement for tuning an NV's dipole angle to a target."""

    e1_shift: float
    e2_shift: float
    strain: float
    deflection: float
    antinode: str


def match_polarization(target_theta: float, site, constants=CouplingConstants(),
                       nu=POISSON_RATIO_DIAMOND) -> PolarizationMatch:
    """Find the strain-induced E1 shift that rotates ``site``'s dipoles to ``target_theta``.

    Only the E1 channel is tunable for a [110] beam, so the E2 term stays at
    its intrinsic value. The target is compared modulo pi. The returned
    ``antinode`` says which turning point of the motion ("up" or "down") to
    strobe at.

    Raises
    ------
    UnreachableError
        When no real deflection realizes the target.
    """
    intr = site.intrinsic
    target = canonical_angle(target_theta)
    d1, d2 = intr.df_E1, intr.df_E2
    current = None
    try:
        current = stuckelberg_angle(intr)
    except DegenerateStrainError:
        pass
    if current is not None and abs(canonical_angle(current - target)) < 1e-12:
        return PolarizationMatch(0.0, 0.0, 0.0, 0.0, "none")
    if abs(d2) < DEGENERATE_E_STRAIN_HZ:
        raise UnreachableError(
            "without intrinsic E2 strain only theta = 0 or pi/2 is reachable")
    two = 2 * target
    # atan2(d2, .) spans (0, pi) for d2 > 0 and (-pi, 0) for d2 < 0
    if np.sin(two) == 0 or np.sign(np.sin(two)) != np.sign(d2):
        raise UnreachableError(
            f"target theta {np.rad2deg(target):.3f} deg lies outside the range "
            "accessible with fixed intrinsic E2 strain")
    e1_total = d2 * np.cos(two) / np.sin(two)
    e1_shift = e1_total - d1
    k = site.shifts_per_strain(constants, nu)
    if k.e1 == 0:
        raise UnreachableError("this NV has no E1 coupling to the beam strain")
    strain = e1_shift / k.e1
    per_m = strain_per_deflection(site.geometry)
    if per_m == 0:
        raise UnreachableError("NV sits on the neutral axis; deflection produces no strain")
    deflection = strain / per_m
    return PolarizationMatch(float(e1_shift), 0.0, float(strain), float(deflection),
                             "down" if deflection < 0 else "up")
