"""
Damped Gauss-Newton (Levenberg-Marquardt) least squares with analytic
Jacobians and a deterministic damping schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitError

MAX_ITER = 200
STEP_TOL = 1e-12


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    covariance: np.ndarray
    converged: bool
    n_iter: int
    cost_history: list = field(default_factory=list)
    jacobian: np.ndarray | None = None

    @property
    def residual_norm(self) -> float:
        return float(np.sqrt(2 * self.cost))


def covariance_from_jacobian(J, cost=None, n_resid=None, scale_by_residual=False):
    """Parameter covariance ``(J^T J)^+`` of a weighted problem.

    With ``scale_by_residual`` the result is multiplied by the reduced
    chi-square, for data whose absolute errors are unknown.
    """
    JTJ = J.T @ J
    d = np.sqrt(np.diag(JTJ))
    d[d == 0] = 1.0
    cov = np.linalg.pinv(JTJ / np.outer(d, d), rcond=1e-15) / np.outer(d, d)
    cov = 0.5 * (cov + cov.T)
    if scale_by_residual and cost is not None:
        dof = max(n_resid - J.shape[1], 1)
        cov = cov * (2 * cost / dof)
    return cov


def levenberg_marquardt(fun, jac, x0, max_iter=MAX_ITER, step_tol=STEP_TOL,
                        cost_tol=1e-15, x_scale=None, mu0=0.1, raise_on_fail=True):
    """Minimize ``0.5*||fun(x)||^2``.

    Parameters
    ----------
    fun, jac : callable
        Residual vector and its Jacobian, both taking the parameter vector.
    x0 : array_like
        Starting point.
    x_scale : array_like, optional
        Typical parameter magnitudes used by the relative step test; defaults
        to ``max(|x0|, 1)``.
    mu0 : float
        Initial damping relative to the unit-normalized Jacobian columns.
        Smaller values start closer to Gauss-Newton, which can jump into a
        distant valley from a poor starting point.

    Only steps that lower the cost are accepted, so ``cost_history`` is
    monotonically non-increasing.
    """
    x = np.array(x0, dtype=float)
    if x_scale is None:
        x_scale = np.maximum(np.abs(x), 1.0)
    x_scale = np.asarray(x_scale, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise FitError("non-finite residuals at the starting point")
    J = np.asarray(jac(x), dtype=float)
    history = [cost]
    mu = mu0
    converged = False
    it = 0
    n = x.size
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if cost == 0.0 or not np.any(g):
            converged = True
            break
        # column scaling makes the damped solve invariant to parameter units
        d = np.linalg.norm(J, axis=0)
        d[d == 0] = 1.0
        Js = J / d
        accepted = False
        while mu < 1e20:
            aug = np.vstack([Js, np.sqrt(mu) * np.eye(n)])
            rhs = np.concatenate([-r, np.zeros(n)])
            z, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
            dx = z / d
            x_new = x + dx
            with np.errstate(over="ignore", invalid="ignore"):
                # overflowing trial steps are rejected below
                r_new = np.asarray(fun(x_new), dtype=float)
                cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        small_step = np.max(np.abs(dx) / (np.abs(x_new) + x_scale)) <= step_tol
        small_gain = (cost - cost_new) <= cost_tol * cost
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        J = np.asarray(jac(x), dtype=float)
        mu = max(mu / 10.0, 1e-12)
        if small_step or small_gain:
            converged = True
            break
    cov = covariance_from_jacobian(J)
    result = LMResult(x, cost, cov, converged, it, history, J)
    if not converged and raise_on_fail:
        raise FitError(f"no convergence after {max_iter} iterations",
                       residual_norm=result.residual_norm)
    return result
