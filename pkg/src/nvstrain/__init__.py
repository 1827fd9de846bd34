"""Strain coupling between a single-crystal diamond cantilever and the
excited-state orbitals of embedded NV centers."""

from .errors import (
    ConfigError,
    DegenerateStrainError,
    DesignError,
    FitError,
    FrameError,
    NumericError,
    NvStrainError,
    RankDeficiencyError,
    StrainRangeError,
    UnreachableError,
)
from .mechanics import CantileverGeometry, DriveState, MechanicalMode, mode_strain
from .nv_core import (
    CouplingConstants,
    Frame,
    IntrinsicStrain,
    NvOrientation,
    StrainTensor,
    SymmetryShifts,
    axial_strain_tensor,
    stuckelberg_angle,
    symmetry_shifts,
    to_nv_frame,
    transition_frequencies,
)
from .optics import LaserPolarization, match_polarization, saturated_intensity
from .site import NvSite, match_frequency, splitting_tuning
from .spectra import Spectrum, StrobeWindow, cw_spectrum, fit_lorentzian_peaks, strobe_spectrum
from .inference import fit_lambdas, fit_polarization
from .metrics import DeviceProposal, report

__version__ = "0.1.0"

__all__ = [
    "CantileverGeometry",
    "ConfigError",
    "CouplingConstants",
    "DegenerateStrainError",
    "DesignError",
    "DeviceProposal",
    "DriveState",
    "FitError",
    "Frame",
    "FrameError",
    "IntrinsicStrain",
    "LaserPolarization",
    "MechanicalMode",
    "NumericError",
    "NvOrientation",
    "NvSite",
    "NvStrainError",
    "RankDeficiencyError",
    "Spectrum",
    "StrainRangeError",
    "StrainTensor",
    "StrobeWindow",
    "SymmetryShifts",
    "UnreachableError",
    "axial_strain_tensor",
    "cw_spectrum",
    "fit_lambdas",
    "fit_lorentzian_peaks",
    "fit_polarization",
    "match_frequency",
    "match_polarization",
    "mode_strain",
    "report",
    "saturated_intensity",
    "splitting_tuning",
    "strobe_spectrum",
    "stuckelberg_angle",
    "symmetry_shifts",
    "to_nv_frame",
    "transition_frequencies",
]
