"""Exception hierarchy shared by every module of the package."""


class NvStrainError(Exception):
    """Base class for all package errors."""


class FrameError(NvStrainError):
    """A strain tensor was supplied in the wrong reference frame."""


class StrainRangeError(NvStrainError, ValueError):
    """Strain outside the linear-elasticity regime."""


class DegenerateStrainError(NvStrainError):
    """The E-symmetric strain vanishes, so the dipole rotation angle is undefined."""


class NumericError(NvStrainError, ArithmeticError):
    """Quadrature or another numerical procedure failed to converge."""


class FitError(NvStrainError):
    """A least-squares fit failed.

    Parameters
    ----------
    message : str
        Human readable reason.
    residual_norm : float, optional
        Weighted residual norm at the last accepted iterate.
    """

    def __init__(self, message, residual_norm=float("nan")):
        super().__init__(message)
        self.residual_norm = residual_norm


class RankDeficiencyError(FitError):
    """The design matrix of a linear fit does not determine all parameters."""


class DesignError(NvStrainError, ValueError):
    """The measurement design is insufficient for the requested fit."""


class UnreachableError(NvStrainError):
    """No accessible cantilever deflection realizes the requested target."""


class ConfigError(NvStrainError, ValueError):
    """Invalid run configuration."""
