"""
An NV center placed in the cantilever, and its response to tip deflection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import mechanics as mech
from .errors import UnreachableError
from .nv_core import (
    POISSON_RATIO_DIAMOND,
    CouplingConstants,
    IntrinsicStrain,
    NvOrientation,
    SymmetryShifts,
    axial_shift_coefficients,
)


@dataclass(frozen=True)
class NvSite:
    """A single NV in the beam.

    Attributes
    ----------
    orientation : NvOrientation
    intrinsic : IntrinsicStrain
        Static strain offsets of this NV.
    f_zpl : float
        Natural zero-phonon line frequency, Hz. Spectra are reported as detuning
        from this value, so 0 is a valid choice.
    linewidth_gamma : float
        Optical FWHM, Hz.
    pl_scale : float
        Photoluminescence in kcounts/s per unit absorption intensity.
    geometry : CantileverGeometry
        Beam and NV placement.
    """

    orientation: NvOrientation = field(default_factory=lambda: NvOrientation.from_group("B"))
    intrinsic: IntrinsicStrain = IntrinsicStrain()
    f_zpl: float = 0.0
    linewidth_gamma: float = 1e9
    pl_scale: float = 1.0
    geometry: mech.CantileverGeometry = mech.CantileverGeometry()
    site_id: str = "NV"

    def __post_init__(self):
        if not self.linewidth_gamma > 0:
            raise ValueError("linewidth_gamma must be positive")
        if not self.pl_scale >= 0:
            raise ValueError("pl_scale must be nonnegative")

    @property
    def group(self) -> str:
        return self.orientation.group

    def shifts_per_strain(self, constants=CouplingConstants(), nu=POISSON_RATIO_DIAMOND) -> SymmetryShifts:
        return axial_shift_coefficients(self.group, constants, nu)

    def shifts_per_deflection(self, constants=CouplingConstants(), nu=POISSON_RATIO_DIAMOND) -> SymmetryShifts:
        """Symmetry shifts (Hz) per metre of tip deflection."""
        return self.shifts_per_strain(constants, nu) * mech.strain_per_deflection(self.geometry)

    def frequencies_at(self, x, constants=CouplingConstants(), nu=POISSON_RATIO_DIAMOND):
        """``(f_plus, f_minus, e1_total, e2_total)`` at tip deflection(s) ``x`` (m)."""
        k = self.shifts_per_deflection(constants, nu)
        x = np.asarray(x, dtype=float)
        center = self.f_zpl + self.intrinsic.df_A1 + k.a1 * x
        e1 = k.e1 * x + self.intrinsic.df_E1
        e2 = k.e2 * x + self.intrinsic.df_E2
        half = np.hypot(e1, e2)
        return center + half, center - half, e1, e2


def splitting_tuning(site: NvSite, x_c: float, constants=CouplingConstants(),
                     nu=POISSON_RATIO_DIAMOND) -> float:
    """Largest change of the E_x/E_y splitting over a drive cycle of amplitude ``x_c``."""
    x = np.linspace(-x_c, x_c, 2001)
    fp, fm, _, _ = site.frequencies_at(x, constants, nu)
    fp0, fm0, _, _ = site.frequencies_at(0.0, constants, nu)
    return float(np.max(np.abs((fp - fm) - (fp0 - fm0))))


def match_frequency(site: NvSite, target_hz: float, branch: str = "plus",
                    max_deflection: float = 100e-9, constants=CouplingConstants(),
                    nu=POISSON_RATIO_DIAMOND, n_scan: int = 4001) -> float:
    """Smallest-magnitude tip deflection (m) placing one transition at ``target_hz``.

    ``branch`` is ``"plus"`` (E_x) or ``"minus"`` (E_y).

    Raises
    ------
    UnreachableError
        If no deflection within ``max_deflection`` reaches the target.
    """
    if branch not in ("plus", "minus"):
        raise ValueError("branch must be 'plus' or 'minus'")
    idx = 0 if branch == "plus" else 1

    def resid(x):
        return float(site.frequencies_at(x, constants, nu)[idx] - target_hz)

    xs = np.linspace(-max_deflection, max_deflection, n_scan)
    r = site.frequencies_at(xs, constants, nu)[idx] - target_hz
    roots = list(xs[r == 0])
    for i in np.nonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0)[0]:
        roots.append(brentq(resid, xs[i], xs[i + 1], xtol=1e-18, rtol=1e-14))
    if not roots:
        raise UnreachableError(
            f"{branch} transition cannot reach {target_hz:.6g} Hz within "
            f"|x| <= {max_deflection:.3g} m")
    return float(min(roots, key=abs))
