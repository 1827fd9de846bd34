"""
NV orientation geometry, strain-tensor frame transformations and the
orbital strain Hamiltonian of the excited-state doublet.

Units: frequencies in Hz, strain dimensionless, coupling constants in Hz per
unit strain (1 PHz = 1e15 Hz), angles in radians.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStrainError, FrameError, StrainRangeError

POISSON_RATIO_DIAMOND = 0.11

# Linear-elasticity bound on the axial strain accepted by axial_strain_tensor.
MAX_LINEAR_STRAIN = 1e-2

# Below this (Hz) both E-channel terms are treated as zero.
DEGENERATE_E_STRAIN_HZ = 1e-3

_SQ2, _SQ3, _SQ6 = np.sqrt(2.0), np.sqrt(3.0), np.sqrt(6.0)

# Cantilever basis in crystal-cube coordinates, one vector per column:
# X || [-110], Y || [001], Z || [110] (Z is the beam axis).
CANTILEVER_BASIS = np.column_stack([
    np.array([-1.0, 1.0, 0.0]) / _SQ2,
    np.array([0.0, 0.0, 1.0]),
    np.array([1.0, 1.0, 0.0]) / _SQ2,
])

# NV triads (x, y, z) in crystal-cube coordinates. Both orientations in a group
# share one triad; they feel the same beam strain.
_TRIADS = {
    "A": np.column_stack([
        np.array([-1.0, -1.0, 2.0]) / _SQ6,
        np.array([1.0, -1.0, 0.0]) / _SQ2,
        np.array([1.0, 1.0, 1.0]) / _SQ3,
    ]),
    "B": np.column_stack([
        np.array([1.0, -1.0, 2.0]) / _SQ6,
        np.array([1.0, 1.0, 0.0]) / _SQ2,
        np.array([-1.0, 1.0, 1.0]) / _SQ3,
    ]),
}

_AXIS_GROUP = {
    (-1, -1, -1): "A",
    (1, 1, -1): "A",
    (-1, 1, 1): "B",
    (1, -1, 1): "B",
}


def _parse_axis(axis):
    if isinstance(axis, str):
        s = axis.strip().strip("[]").replace(" ", "")
        out, i = [], 0
        while i < len(s):
            sign = 1
            if s[i] in "+-":
                sign = -1 if s[i] == "-" else 1
                i += 1
            out.append(sign * int(s[i]))
            i += 1
        return tuple(out)
    return tuple(int(round(v)) for v in axis)


@dataclass(frozen=True)
class NvOrientation:
    """One of the four NV symmetry-axis directions.

    ``axis`` accepts a Miller-index string such as ``"[-111]"`` or a 3-sequence.
    """

    axis: tuple

    def __post_init__(self):
        axis = _parse_axis(self.axis)
        if axis not in _AXIS_GROUP:
            raise ValueError(
                f"NV axis {self.axis!r} is not one of "
                "[-1-1-1], [11-1], [-111], [1-11]")
        object.__setattr__(self, "axis", axis)

    @property
    def group(self) -> str:
        return _AXIS_GROUP[self.axis]

    @classmethod
    def from_group(cls, group: str) -> "NvOrientation":
        group = group.upper()
        if group == "A":
            return cls((-1, -1, -1))
        if group == "B":
            return cls((-1, 1, 1))
        raise ValueError(f"unknown NV group {group!r}")

    def label(self) -> str:
        return "[" + "".join(f"{v:d}" for v in self.axis) + "]"


class Frame(enum.Enum):
    CANTILEVER = "cantilever"
    CRYSTAL = "crystal"
    NV = "nv"


@dataclass(frozen=True)
class StrainTensor:
    """Symmetric 3x3 strain tensor tagged with the frame it is expressed in."""

    components: np.ndarray
    frame: Frame = Frame.CANTILEVER
    orientation: NvOrientation | None = None

    def __post_init__(self):
        m = np.array(self.components, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"strain tensor must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("strain tensor has non-finite entries")
        if np.max(np.abs(m - m.T)) > 1e-14:
            raise ValueError("strain tensor is not symmetric")
        if self.frame is Frame.NV and self.orientation is None:
            raise FrameError("an NV-frame tensor needs its orientation")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "components", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.components))

    def __getitem__(self, idx):
        return self.components[idx]


@dataclass(frozen=True)
class IntrinsicStrain:
    """Static frequency offsets (Hz) from the local strain environment."""

    df_A1: float = 0.0
    df_E1: float = 0.0
    df_E2: float = 0.0


@dataclass(frozen=True)
class CouplingConstants:
    """Orbital strain coupling constants in Hz per unit strain."""

    lambda_A1: float = -1.95e15
    lambda_A1p: float = 2.16e15
    lambda_E: float = -0.85e15
    lambda_Ep: float = 0.02e15

    def __post_init__(self):
        for name in ("lambda_A1", "lambda_A1p", "lambda_E", "lambda_Ep"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_A1, self.lambda_A1p, self.lambda_E, self.lambda_Ep])


@dataclass(frozen=True)
class SymmetryShifts:
    """A1, E1 and E2 strain terms (Hz) of the excited-state Hamiltonian."""

    a1: float = 0.0
    e1: float = 0.0
    e2: float = 0.0

    def __mul__(self, c):
        return SymmetryShifts(self.a1 * c, self.e1 * c, self.e2 * c)

    __rmul__ = __mul__


def nv_frame(orientation: NvOrientation) -> np.ndarray:
    """Return the NV triad as columns ``(x, y, z)`` in crystal-cube coordinates."""
    return _TRIADS[orientation.group].copy()


def axial_strain_tensor(eps: float, nu: float = POISSON_RATIO_DIAMOND) -> StrainTensor:
    """Uniaxial beam strain ``eps`` along Z with Poisson contraction in X and Y."""
    if not abs(eps) < MAX_LINEAR_STRAIN:
        raise StrainRangeError(
            f"axial strain {eps!r} outside linear regime |eps| < {MAX_LINEAR_STRAIN}")
    return StrainTensor(np.diag([-nu * eps, -nu * eps, eps]), Frame.CANTILEVER)


def to_crystal_frame(t: StrainTensor) -> StrainTensor:
    if t.frame is Frame.CRYSTAL:
        return t
    if t.frame is not Frame.CANTILEVER:
        raise FrameError(f"cannot map a {t.frame.value}-frame tensor to the crystal frame")
    C = CANTILEVER_BASIS
    return StrainTensor(C @ t.components @ C.T, Frame.CRYSTAL)


def to_nv_frame(t: StrainTensor, orientation: NvOrientation) -> StrainTensor:
    """Express a cantilever- or crystal-frame tensor in the NV coordinate system.

    Raises
    ------
    FrameError
        If ``t`` is already in an NV frame.
    """
    if t.frame is Frame.NV:
        raise FrameError("tensor is already expressed in an NV frame")
    R = nv_frame(orientation)
    if t.frame is Frame.CANTILEVER:
        # NV axes expressed in the cantilever basis
        R = CANTILEVER_BASIS.T @ R
    return StrainTensor(R.T @ t.components @ R, Frame.NV, orientation)


def symmetry_shifts(t: StrainTensor, k: CouplingConstants = CouplingConstants()) -> SymmetryShifts:
    """Project an NV-frame strain tensor onto the A1, E1 and E2 channels."""
    if t.frame is not Frame.NV:
        raise FrameError(f"symmetry_shifts needs an NV-frame tensor, got {t.frame.value}")
    e = t.components
    a1 = k.lambda_A1 * e[2, 2] + k.lambda_A1p * (e[0, 0] + e[1, 1])
    e1 = k.lambda_E * (e[1, 1] - e[0, 0]) + k.lambda_Ep * (e[0, 2] + e[2, 0])
    e2 = k.lambda_E * (e[0, 1] + e[1, 0]) + k.lambda_Ep * (e[1, 2] + e[2, 1])
    return SymmetryShifts(float(a1), float(e1), float(e2))


def axial_shift_coefficients(group: str, k: CouplingConstants = CouplingConstants(),
                             nu: float = POISSON_RATIO_DIAMOND) -> SymmetryShifts:
    """Symmetry shifts per unit axial beam strain for an NV group.

    Closed forms of ``symmetry_shifts(to_nv_frame(axial_strain_tensor(1)))``;
    the E2 channel vanishes for both groups of a [110] beam.
    """
    if group == "A":
        a1 = k.lambda_A1 * (2 - nu) / 3 + k.lambda_A1p * (1 - 5 * nu) / 3
        e1 = -k.lambda_E * (1 + nu) / 3 - k.lambda_Ep * 2 * _SQ2 * (1 + nu) / 3
    elif group == "B":
        a1 = -k.lambda_A1 * nu + k.lambda_A1p * (1 - nu)
        e1 = k.lambda_E * (1 + nu)
    else:
        raise ValueError(f"unknown NV group {group!r}")
    return SymmetryShifts(a1, e1, 0.0)


def transition_frequencies(f_zpl: float, intr: IntrinsicStrain,
                           s: SymmetryShifts = SymmetryShifts()):
    """E_x and E_y optical transition frequencies ``(f_plus, f_minus)``.

    Works elementwise when the shift fields are numpy arrays.
    """
    center = f_zpl + intr.df_A1 + s.a1
    half = np.hypot(s.e1 + intr.df_E1, s.e2 + intr.df_E2)
    return center + half, center - half


def zero_strain_splitting(intr: IntrinsicStrain) -> float:
    """E_x/E_y splitting without applied strain, ``2*sqrt(dE1**2 + dE2**2)``."""
    return 2.0 * float(np.hypot(intr.df_E1, intr.df_E2))


def stuckelberg_angle(intr: IntrinsicStrain, s: SymmetryShifts = SymmetryShifts()) -> float:
    """Dipole rotation angle theta in (-pi/2, pi/2].

    Raises
    ------
    DegenerateStrainError
        If both E-channel terms are below 1 mHz in magnitude.
    """
    y = intr.df_E2 + s.e2
    x = intr.df_E1 + s.e1
    if abs(x) < DEGENERATE_E_STRAIN_HZ and abs(y) < DEGENERATE_E_STRAIN_HZ:
        raise DegenerateStrainError("E-symmetric strain vanishes; theta is undefined")
    # + 0.0 drops a negative zero; a tiny negative y with x < 0 still gives -pi
    return canonical_angle(0.5 * float(np.arctan2(y + 0.0, x + 0.0)))


def stuckelberg_angle_array(e1_total, e2_total):
    """Vectorized rotation angle with theta = 0 where the E strain vanishes.

    For a degenerate doublet any basis is an eigenbasis; summed intensities do
    not depend on the choice.
    """
    e1_total = np.asarray(e1_total, dtype=float) + 0.0
    e2_total = np.asarray(e2_total, dtype=float) + 0.0
    theta = 0.5 * np.arctan2(e2_total, e1_total)
    theta = np.where(theta <= -np.pi / 2, theta + np.pi, theta)
    degenerate = (np.abs(e1_total) < DEGENERATE_E_STRAIN_HZ) & (np.abs(e2_total) < DEGENERATE_E_STRAIN_HZ)
    return np.where(degenerate, 0.0, theta)


def canonical_angle(theta: float) -> float:
    """Map an angle to the (-pi/2, pi/2] branch (intensities are pi-periodic in theta)."""
    half = np.pi / 2
    t = float(np.mod(theta + half, np.pi) - half)
    # np.mod can round onto either boundary
    if t <= -half:
        t += np.pi
    return min(t, half)


def excited_state_block(intr: IntrinsicStrain, s: SymmetryShifts) -> np.ndarray:
    """2x2 E-doublet Hamiltonian (Hz) relative to ``f_zpl + df_A1``."""
    e1 = s.e1 + intr.df_E1
    e2 = s.e2 + intr.df_E2
    return np.array([[s.a1 + e1, e2], [e2, s.a1 - e1]])
