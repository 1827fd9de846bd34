"""
Extraction of the orbital strain coupling constants, intrinsic strain and
polarization parameters from strain scans and polarization scans.

Frequencies in the dataset files are detunings (Hz) from a nominal
zero-phonon line; the per-site offset absorbs both f_ZPL and df_A1.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import lm
from .errors import DegenerateStrainError, DesignError, FitError, RankDeficiencyError
from .mechanics import (
    CALIBRATION_FRACTION,
    DEPTH_UNCERTAINTY,
    CantileverGeometry,
    mode_strain,
)
from .nv_core import (
    POISSON_RATIO_DIAMOND,
    CouplingConstants,
    IntrinsicStrain,
    canonical_angle,
    stuckelberg_angle,
    zero_strain_splitting,
)
from .optics import effective_power_forms
from .site import NvSite

SIGMA_F_FLOOR = 1e6
PHASE_UNCERTAINTY = np.deg2rad(5.0)
_SQ2 = np.sqrt(2.0)


# --------------------------------------------------------------------------
# data containers

@dataclass(frozen=True)
class StrainScanPoint:
    eps: float
    f_plus: float
    f_minus: float
    sigma_f: float = 0.0
    sigma_eps: float = 0.0

    def __post_init__(self):
        if self.sigma_f < 0 or self.sigma_eps < 0:
            raise ValueError("uncertainties must be nonnegative")


@dataclass
class NvDataset:
    """Transition frequencies of one NV versus applied axial strain.

    ``theta_obs`` (rad) and ``delta_f0_obs`` (Hz) are the undriven dipole
    angle and E_x/E_y splitting; they seed the intrinsic E strain.
    """

    site_id: str
    group: str
    points: list
    theta_obs: float = 0.0
    delta_f0_obs: float = float("nan")

    def __post_init__(self):
        if self.group not in ("A", "B"):
            raise ValueError(f"dataset {self.site_id}: group must be 'A' or 'B'")

    def _col(self, name):
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    @property
    def eps(self):
        return self._col("eps")

    @property
    def f_plus(self):
        return self._col("f_plus")

    @property
    def f_minus(self):
        return self._col("f_minus")

    @property
    def sigma_f(self):
        return self._col("sigma_f")

    @property
    def sigma_eps(self):
        return self._col("sigma_eps")

    def splitting_estimate(self) -> float:
        """Observed splitting if known, else f_plus - f_minus at the smallest |eps|."""
        if np.isfinite(self.delta_f0_obs):
            return self.delta_f0_obs
        i = int(np.argmin(np.abs(self.eps)))
        return float(self.f_plus[i] - self.f_minus[i])


@dataclass
class CommonModeFit:
    lambda_A1: float
    lambda_A1p: float
    covariance: np.ndarray
    offsets: dict
    residual_norm: float


@dataclass
class EConstantsFit:
    lambda_E: float
    lambda_Ep: float
    intrinsic: dict
    offsets: dict
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    lambda_E_identifiable: bool = True
    lambda_Ep_identifiable: bool = True


@dataclass
class LambdaFit:
    constants: CouplingConstants
    intrinsic: dict
    uncertainties: dict
    calibration_fraction: float = CALIBRATION_FRACTION
    statistical: dict = field(default_factory=dict)
    residual_norms: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        k = self.constants
        return {
            "constants": {
                "lambda_a1_hz_per_strain": k.lambda_A1,
                "lambda_a1p_hz_per_strain": k.lambda_A1p,
                "lambda_e_hz_per_strain": k.lambda_E,
                "lambda_ep_hz_per_strain": k.lambda_Ep,
            },
            "fractional_uncertainties": self.uncertainties,
            "statistical_fractional_uncertainties": self.statistical,
            "calibration_fraction": self.calibration_fraction,
            "intrinsic_strain": {
                sid: {"df_a1_hz": s.df_A1, "df_e1_hz": s.df_E1, "df_e2_hz": s.df_E2}
                for sid, s in self.intrinsic.items()
            },
            "residual_norms": self.residual_norms,
            "converged": self.converged,
            "flags": self.flags,
        }


# --------------------------------------------------------------------------
# model coefficients

def a1_coefficients(group: str, nu: float = POISSON_RATIO_DIAMOND):
    """Multipliers of (lambda_A1, lambda_A1p) in the common-mode slope."""
    if group == "A":
        return np.array([(2 - nu) / 3, (1 - 5 * nu) / 3])
    return np.array([-nu, 1 - nu])


def e_coefficients(group: str, nu: float = POISSON_RATIO_DIAMOND):
    """Multipliers of (lambda_E, lambda_Ep) in the E1 shift per unit strain."""
    if group == "A":
        return np.array([-(1 + nu) / 3, -2 * _SQ2 * (1 + nu) / 3])
    return np.array([1 + nu, 0.0])


def _check_groups(datasets):
    groups = {d.group for d in datasets}
    return "A" in groups, "B" in groups


def _combine(stat, cal):
    return float(np.hypot(stat, cal))


# --------------------------------------------------------------------------
# common mode

def fit_common_mode(group_a, group_b, nu: float = POISSON_RATIO_DIAMOND,
                    sigma_floor: float = SIGMA_F_FLOOR, n_reweight: int = 3) -> CommonModeFit:
    """Joint weighted linear fit of the mean transition frequency versus strain.

    Each NV gets its own static offset; the slopes of the two groups share
    lambda_A1 and lambda_A1p. Horizontal errors enter through the effective
    variance ``sigma_f**2/2 + (slope*sigma_eps)**2``.

    Raises
    ------
    RankDeficiencyError
        If either group is missing or a dataset has fewer than two distinct
        strain values.
    """
    datasets = list(group_a) + list(group_b)
    has_a, has_b = _check_groups(datasets)
    if not (has_a and has_b):
        raise RankDeficiencyError(
            "common-mode slopes of a single NV group cannot separate lambda_A1 from lambda_A1p")
    for d in datasets:
        if np.unique(d.eps).size < 2:
            raise RankDeficiencyError(f"dataset {d.site_id} spans no strain range")
    n_sites = len(datasets)
    rows, y, sig_f, sig_e, coef = [], [], [], [], []
    for i, d in enumerate(datasets):
        c = a1_coefficients(d.group, nu)
        for p in d.points:
            r = np.zeros(2 + n_sites)
            r[:2] = c * p.eps
            r[2 + i] = 1.0
            rows.append(r)
            y.append(0.5 * (p.f_plus + p.f_minus))
            sig_f.append(p.sigma_f / _SQ2)
            sig_e.append(p.sigma_eps)
            coef.append(c)
    A, y = np.array(rows), np.array(y)
    sig_f, sig_e, coef = np.array(sig_f), np.array(sig_e), np.array(coef)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0) or np.linalg.matrix_rank(A / norms) < A.shape[1]:
        raise RankDeficiencyError("common-mode design matrix is rank deficient")
    lam = np.zeros(2)
    for _ in range(max(n_reweight, 1)):
        slope = coef @ lam
        sigma = np.sqrt(np.maximum(sig_f ** 2 + (slope * sig_e) ** 2, sigma_floor ** 2))
        Aw = A / sigma[:, None]
        p, *_ = np.linalg.lstsq(Aw, y / sigma, rcond=None)
        lam = p[:2]
    resid = (A @ p - y) / sigma
    cov = lm.covariance_from_jacobian(Aw)
    offsets = {d.site_id: float(p[2 + i]) for i, d in enumerate(datasets)}
    return CommonModeFit(float(p[0]), float(p[1]), cov[:2, :2], offsets,
                         float(np.linalg.norm(resid)))


# --------------------------------------------------------------------------
# E constants

def _seed_intrinsic(d: NvDataset):
    half = 0.5 * d.splitting_estimate()
    two = 2 * d.theta_obs
    return half * np.cos(two), half * np.sin(two)


class _EModel:
    """Residuals and Jacobian of the joint f_plus/f_minus model."""

    def __init__(self, datasets, a1_slopes, nu):
        self.datasets = datasets
        self.n = len(datasets)
        blocks = []
        for i, d in enumerate(datasets):
            blocks.append((i, d.eps, d.f_plus, d.f_minus, d.sigma_f, d.sigma_eps,
                           a1_slopes[d.group], e_coefficients(d.group, nu)))
        self.blocks = blocks
        self.sigma = None

    def unpack(self, p):
        return p[0], p[1], p[2:].reshape(self.n, 3)

    def predict(self, p):
        lE, lEp, loc = self.unpack(p)
        out = []
        for i, eps, _, _, _, _, s, ce in self.blocks:
            c, d1, d2 = loc[i]
            k = ce[0] * lE + ce[1] * lEp
            u = k * eps + d1
            r = np.hypot(u, d2)
            out.append((c + s * eps + r, c + s * eps - r, u, r, k, s))
        return out

    def set_weights(self, p, sigma_floor):
        sig = []
        for (i, eps, _, _, sf, se, _, _), (_, _, u, r, k, s) in zip(self.blocks, self.predict(p)):
            ur = np.divide(u, r, out=np.zeros_like(u), where=r > 0)
            for sign in (1.0, -1.0):
                slope = s + sign * ur * k
                sig.append(np.sqrt(np.maximum(sf ** 2 + (slope * se) ** 2, sigma_floor ** 2)))
        self.sigma = np.concatenate(sig)

    def residuals(self, p):
        res = []
        for (i, eps, fp, fm, *_), (mp, mm, *_) in zip(self.blocks, self.predict(p)):
            res.append(mp - fp)
            res.append(mm - fm)
        return np.concatenate(res) / self.sigma

    def jacobian(self, p):
        rows = []
        npar = 2 + 3 * self.n
        for (i, eps, _, _, _, _, _, ce), (_, _, u, r, k, s) in zip(self.blocks, self.predict(p)):
            d2 = p[2 + 3 * i + 2]
            rr = np.where(r > 0, r, 1.0)
            ur = np.where(r > 0, u / rr, 1.0)
            vr = np.where(r > 0, d2 / rr, 0.0)
            for sign in (1.0, -1.0):
                J = np.zeros((eps.size, npar))
                J[:, 0] = sign * ur * eps * ce[0]
                J[:, 1] = sign * ur * eps * ce[1]
                J[:, 2 + 3 * i] = 1.0
                J[:, 3 + 3 * i] = sign * ur
                J[:, 4 + 3 * i] = sign * vr
                rows.append(J)
        return np.vstack(rows) / self.sigma[:, None]


def fit_e_constants(datasets, a1_constants, nu: float = POISSON_RATIO_DIAMOND,
                    initial: CouplingConstants = CouplingConstants(),
                    sigma_floor: float = SIGMA_F_FLOOR, n_reweight: int = 3) -> EConstantsFit:
    """Joint nonlinear fit of lambda_E and lambda_Ep over all NVs.

    ``a1_constants`` is ``(lambda_A1, lambda_A1p)`` from the common-mode fit.
    Every NV carries an offset and its intrinsic (df_E1, df_E2), seeded from
    its observed splitting and dipole angle.

    With only group-B data lambda_Ep does not enter the model; it is fixed at
    0 and flagged. With only group-A data lambda_E is held at
    ``initial.lambda_E`` and flagged.

    Raises
    ------
    FitError
        On optimizer failure.
    """
    datasets = list(datasets)
    if not datasets:
        raise DesignError("no datasets supplied")
    has_a, has_b = _check_groups(datasets)
    la1, la1p = a1_constants
    a1_slopes = {g: float(a1_coefficients(g, nu) @ np.array([la1, la1p])) for g in "AB"}
    model = _EModel(datasets, a1_slopes, nu)

    p0 = [initial.lambda_E, initial.lambda_Ep]
    for d in datasets:
        eps = d.eps
        c0 = float(np.mean(0.5 * (d.f_plus + d.f_minus) - a1_slopes[d.group] * eps))
        d1, d2 = _seed_intrinsic(d)
        p0 += [c0, d1, d2]
    p = np.array(p0, dtype=float)

    free = np.ones(p.size, dtype=bool)
    e_ident, ep_ident = True, True
    if not has_a:
        free[1] = False
        p[1] = 0.0
        ep_ident = False
    if not has_b:
        free[0] = False
        e_ident = False

    splits = [max(abs(d.splitting_estimate()), 1e6) for d in datasets]
    scale = np.concatenate([[max(abs(initial.lambda_E), 1e13), max(abs(initial.lambda_E), 1e13)],
                            np.repeat(splits, 3)])

    def fun(q):
        full = p.copy()
        full[free] = q
        return model.residuals(full)

    def jac(q):
        full = p.copy()
        full[free] = q
        return model.jacobian(full)[:, free]

    res = None
    for _ in range(max(n_reweight, 1)):
        model.set_weights(p, sigma_floor)
        res = lm.levenberg_marquardt(fun, jac, p[free], x_scale=scale[free])
        p[free] = res.x

    cov_free = lm.covariance_from_jacobian(res.jacobian)
    cov = np.zeros((p.size, p.size))
    cov[np.ix_(free, free)] = cov_free
    intrinsic, offsets = {}, {}
    for i, d in enumerate(datasets):
        c, d1, d2 = p[2 + 3 * i: 5 + 3 * i]
        offsets[d.site_id] = float(c)
        intrinsic[d.site_id] = IntrinsicStrain(float(c), float(d1), float(d2))
    return EConstantsFit(float(p[0]), float(p[1]), intrinsic, offsets, cov[:2, :2],
                         res.residual_norm, res.converged, e_ident, ep_ident)


def fit_lambdas(datasets, nu: float = POISSON_RATIO_DIAMOND,
                calibration_fraction: float = CALIBRATION_FRACTION,
                initial: CouplingConstants = CouplingConstants(),
                f_zpl_reference: float = 0.0,
                sigma_floor: float = SIGMA_F_FLOOR) -> LambdaFit:
    """Extract all four coupling constants: common mode first, then the E channel.

    Reported fractional uncertainties combine the statistical error with the
    deflection-calibration fraction in quadrature, so they never fall below
    ``calibration_fraction``.
    """
    datasets = list(datasets)
    ga = [d for d in datasets if d.group == "A"]
    gb = [d for d in datasets if d.group == "B"]
    cm = fit_common_mode(ga, gb, nu, sigma_floor)
    ef = fit_e_constants(datasets, (cm.lambda_A1, cm.lambda_A1p), nu, initial, sigma_floor)
    k = CouplingConstants(cm.lambda_A1, cm.lambda_A1p, ef.lambda_E, ef.lambda_Ep)

    def frac(value, var):
        return float(np.sqrt(max(var, 0.0)) / abs(value)) if value != 0 else float("inf")

    stat = {
        "lambda_A1": frac(k.lambda_A1, cm.covariance[0, 0]),
        "lambda_A1p": frac(k.lambda_A1p, cm.covariance[1, 1]),
        "lambda_E": frac(k.lambda_E, ef.covariance[0, 0]),
        "lambda_Ep": frac(k.lambda_Ep, ef.covariance[1, 1]),
    }
    unc = {name: _combine(v, calibration_fraction) for name, v in stat.items()}
    intrinsic = {sid: IntrinsicStrain(s.df_A1 - f_zpl_reference, s.df_E1, s.df_E2)
                 for sid, s in ef.intrinsic.items()}
    return LambdaFit(
        constants=k, intrinsic=intrinsic, uncertainties=unc,
        calibration_fraction=calibration_fraction, statistical=stat,
        residual_norms={"common_mode": cm.residual_norm, "e_constants": ef.residual_norm},
        converged={"common_mode": True, "e_constants": bool(ef.converged)},
        flags={"lambda_E_identifiable": ef.lambda_E_identifiable,
               "lambda_Ep_identifiable": ef.lambda_Ep_identifiable},
    )


# --------------------------------------------------------------------------
# uncertainties and synthesis

def propagate_uncertainties(site: NvSite, x_c: float, antinode: str = "up",
                            constants: CouplingConstants = CouplingConstants(),
                            nu: float = POISSON_RATIO_DIAMOND,
                            phase_uncertainty: float = PHASE_UNCERTAINTY,
                            depth_uncertainty: float = DEPTH_UNCERTAINTY):
    """Vertical and horizontal error bars of one strobed strain-scan point.

    ``sigma_f`` is the largest excursion of either transition from its
    antinode value as the strobe phase moves within +-``phase_uncertainty``;
    ``sigma_eps = |d eps / d R_0| * depth_uncertainty``.
    """
    sign = 1.0 if antinode == "up" else -1.0
    xa = sign * x_c
    dphi = np.linspace(-phase_uncertainty, phase_uncertainty, 201)
    fp, fm, _, _ = site.frequencies_at(xa * np.cos(dphi), constants, nu)
    fp0, fm0, _, _ = site.frequencies_at(xa, constants, nu)
    sigma_f = float(max(np.max(np.abs(fp - fp0)), np.max(np.abs(fm - fm0))))
    g = site.geometry
    eps = float(mode_strain(g, xa))
    r0 = g.neutral_axis_offset
    sigma_eps = abs(eps / r0) * depth_uncertainty if r0 != 0 else 0.0
    return sigma_f, float(sigma_eps)


def synthesize_strain_scan(site: NvSite, amplitudes,
                           constants: CouplingConstants = CouplingConstants(),
                           nu: float = POISSON_RATIO_DIAMOND, rng=None,
                           phase_uncertainty: float = PHASE_UNCERTAINTY,
                           depth_uncertainty: float = DEPTH_UNCERTAINTY,
                           sigma_floor: float = 0.0) -> NvDataset:
    """Strobed strain scan of one NV at both antinodes of each amplitude.

    Without ``rng`` the values are exact model evaluations. With a numpy
    ``Generator`` the NV's true depth is drawn around the nominal one (the
    recorded strain keeps the nominal depth) and each frequency receives
    Gaussian noise of its ``sigma_f``.
    """
    g_nom = site.geometry
    true_site = site
    if rng is not None and depth_uncertainty > 0:
        depth = float(np.clip(g_nom.nv_depth_d + rng.normal(0.0, depth_uncertainty),
                              0.0, g_nom.thickness_t))
        g_true = CantileverGeometry(g_nom.length_l, g_nom.width_w, g_nom.thickness_t,
                                    depth, g_nom.nv_axial_z)
        true_site = NvSite(site.orientation, site.intrinsic, site.f_zpl, site.linewidth_gamma,
                           site.pl_scale, g_true, site.site_id)
    points = []
    for a in amplitudes:
        for antinode in ("up", "down"):
            if a == 0 and antinode == "down":
                continue
            x = a if antinode == "up" else -a
            eps = float(mode_strain(g_nom, x))
            fp, fm, _, _ = true_site.frequencies_at(x, constants, nu)
            sf, se = propagate_uncertainties(site, a, antinode, constants, nu,
                                             phase_uncertainty, depth_uncertainty)
            sf = max(sf, sigma_floor)
            fp, fm = float(fp) - site.f_zpl, float(fm) - site.f_zpl
            if rng is not None:
                fp += rng.normal(0.0, sf)
                fm += rng.normal(0.0, sf)
                fp, fm = max(fp, fm), min(fp, fm)
            points.append(StrainScanPoint(eps, fp, fm, sf, se))
    try:
        theta = stuckelberg_angle(site.intrinsic)
    except DegenerateStrainError:
        # unknown angle; seeding then puts the splitting into df_E1 >= 0
        theta = 0.0
    return NvDataset(site.site_id, site.group, points, theta,
                     zero_strain_splitting(site.intrinsic))


# --------------------------------------------------------------------------
# polarization

@dataclass
class PolarizationScan:
    """PL amplitudes of E_x and E_y versus polarization angle ``phi`` (rad)."""

    phi: np.ndarray
    pl_ex: np.ndarray
    pl_ey: np.ndarray
    group: str = "A"
    p_in: float = 0.4e-6
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.pl_ex = np.asarray(self.pl_ex, dtype=float)
        self.pl_ey = np.asarray(self.pl_ey, dtype=float)
        if not (self.phi.shape == self.pl_ex.shape == self.pl_ey.shape):
            raise ValueError("phi, pl_ex and pl_ey must have equal lengths")
        if self.group not in ("A", "B"):
            raise ValueError("group must be 'A' or 'B'")


@dataclass
class PolarizationFit:
    theta: float
    p_sat: float
    psi: float
    scale: float
    covariance: np.ndarray
    residual_norm: float
    converged: bool

    def to_dict(self) -> dict:
        err = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return {
            "theta_deg": float(np.rad2deg(self.theta)),
            "p_sat_w": self.p_sat,
            "psi_deg": float(np.rad2deg(self.psi)),
            "scale_kcps": self.scale,
            "theta_err_deg": float(np.rad2deg(err[0])),
            "p_sat_err_w": float(err[1]),
            "psi_err_deg": float(np.rad2deg(err[2])),
            "scale_err_kcps": float(err[3]),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
        }


def polarization_model(group, phi, theta, p_sat, psi, scale, p_in):
    qx, qy = effective_power_forms(group, theta, phi, psi)
    r = p_in / p_sat
    return scale * -np.expm1(-r * qx), scale * -np.expm1(-r * qy)


def synthesize_polarization_scan(group, theta, phi, p_in=0.4e-6, p_sat=0.4e-6,
                                 psi=np.deg2rad(54.0), scale=1.0, rng=None,
                                 noise_sigma=0.0) -> PolarizationScan:
    phi = np.asarray(phi, dtype=float)
    ex, ey = polarization_model(group, phi, theta, p_sat, psi, scale, p_in)
    if rng is not None and noise_sigma > 0:
        ex = np.maximum(ex + rng.normal(0.0, noise_sigma, ex.shape), 0.0)
        ey = np.maximum(ey + rng.normal(0.0, noise_sigma, ey.shape), 0.0)
    return PolarizationScan(phi, ex, ey, group, p_in)


def _canonical_theta_psi(theta, psi):
    psi = float(np.mod(psi, 2 * np.pi))
    if psi > np.pi:
        psi = 2 * np.pi - psi
    if psi > np.pi / 2:
        # (theta, psi) and (-theta, pi - psi) give identical scans
        psi = np.pi - psi
        theta = -theta
    return canonical_angle(theta), psi


def fit_polarization(scan: PolarizationScan) -> PolarizationFit:
    """Fit dipole angle, saturation power, ellipticity and PL scale to both channels.

    The returned angle lies in (-pi/2, pi/2] and ``psi`` in [0, pi/2], the
    branch that removes the (theta, psi) -> (-theta, pi - psi) symmetry.

    Raises
    ------
    DesignError
        Fewer than 8 distinct angles or less than 150 degrees of coverage.
    FitError
        On optimizer failure.
    """
    phi = scan.phi
    if np.unique(np.round(phi, 12)).size < 8:
        raise DesignError("polarization fit needs at least 8 distinct angles")
    if np.ptp(phi) < np.deg2rad(150.0) - 1e-12:
        raise DesignError("polarization angles must span at least 150 degrees")
    y = np.concatenate([scan.pl_ex, scan.pl_ey])
    if scan.sigma is None:
        w = np.ones_like(y)
    else:
        s = np.asarray(scan.sigma, dtype=float)
        w = 1.0 / np.concatenate([s, s]) if s.shape == scan.phi.shape else 1.0 / s
    group, p_in = scan.group, scan.p_in
    if not p_in > 0:
        raise DesignError("polarization fit needs a positive incident power")

    def model(q):
        ex, ey = polarization_model(group, phi, q[0], np.exp(q[1]), q[2], np.exp(q[3]), p_in)
        return np.concatenate([ex, ey])

    def fun(q):
        return w * (model(q) - y)

    def jac(q):
        theta, lps, psi, lsc = q
        r = p_in / np.exp(lps)
        sc = np.exp(lsc)
        c2t, s2t = np.cos(2 * theta), np.sin(2 * theta)
        qx, qy = effective_power_forms(group, theta, phi, psi)
        if group == "A":
            u2, v2 = np.cos(phi) ** 2, np.sin(phi) ** 2
        else:
            u2, v2 = np.sin(phi) ** 2, np.cos(phi) ** 2
        s2p = np.sin(2 * phi)
        k = 1.0 / (2 * np.sqrt(3.0))
        # d/dtheta and d/dpsi of the quadratic forms
        dqx_t = s2t * v2 - s2t * u2 / 3 - np.cos(psi) * 2 * c2t * s2p * k
        dqy_t = -s2t * v2 + s2t * u2 / 3 + np.cos(psi) * 2 * c2t * s2p * k
        dqx_p = np.sin(psi) * s2t * s2p * k
        dqy_p = -dqx_p
        ex_exp, ey_exp = np.exp(-r * qx), np.exp(-r * qy)
        J = np.empty((2 * phi.size, 4))
        J[:, 0] = sc * r * np.concatenate([ex_exp * dqx_t, ey_exp * dqy_t])
        # dI/dlog(p_sat) = -r q exp(-r q)
        J[:, 1] = -sc * r * np.concatenate([ex_exp * qx, ey_exp * qy])
        J[:, 2] = sc * r * np.concatenate([ex_exp * dqx_p, ey_exp * dqy_p])
        J[:, 3] = sc * np.concatenate([-np.expm1(-r * qx), -np.expm1(-r * qy)])
        return w[:, None] * J

    # deterministic coarse search; scale solved linearly at each node
    best = None
    for th in np.deg2rad(np.arange(-90.0, 90.0, 5.0)):
        for ps in np.deg2rad(np.arange(0.0, 181.0, 15.0)):
            for lps in (np.log(p_in), np.log(p_in) - 1.0, np.log(p_in) + 1.0):
                base = model(np.array([th, lps, ps, 0.0]))
                den = float((w * base) @ (w * base))
                if den <= 0:
                    continue
                sc = float((w * base) @ (w * y)) / den
                if sc <= 0:
                    continue
                cost = float(np.sum((w * (sc * base - y)) ** 2))
                if best is None or cost < best[0]:
                    best = (cost, np.array([th, lps, ps, np.log(sc)]))
    if best is None:
        raise FitError("polarization scan carries no signal", residual_norm=float(np.linalg.norm(y)))
    res = lm.levenberg_marquardt(fun, jac, best[1], x_scale=np.array([1.0, 1.0, 1.0, 1.0]))
    theta, lps, psi, lsc = res.x
    p_sat, scale = float(np.exp(lps)), float(np.exp(lsc))
    cov = lm.covariance_from_jacobian(res.jacobian, res.cost, y.size,
                                      scale_by_residual=scan.sigma is None)
    # log-parameters back to linear ones
    T = np.diag([1.0, p_sat, 1.0, scale])
    cov = T @ cov @ T
    theta_c, psi_c = _canonical_theta_psi(theta, psi)
    return PolarizationFit(theta_c, p_sat, psi_c, scale, cov, res.residual_norm, res.converged)


# --------------------------------------------------------------------------
# files

DATASET_HEADER = ["site_id", "group", "eps", "f_plus_hz", "f_minus_hz", "sigma_f_hz", "sigma_eps"]
POLARIZATION_HEADER = ["phi_deg", "pl_ex_kcps", "pl_ey_kcps"]


def _fmt(v):
    return repr(float(v))


def write_dataset_csv(datasets, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for d in datasets:
            for p in d.points:
                w.writerow([d.site_id, d.group, _fmt(p.eps), _fmt(p.f_plus), _fmt(p.f_minus),
                            _fmt(p.sigma_f), _fmt(p.sigma_eps)])


def read_dataset_csv(path, observations=None):
    """Read a dataset CSV; ``observations`` maps site_id to (theta_obs, delta_f0_obs)."""
    observations = observations or {}
    order, groups, pts = [], {}, {}
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != DATASET_HEADER:
            raise ValueError(f"unexpected dataset header {header!r}")
        for row in r:
            if not row:
                continue
            sid, grp = row[0], row[1]
            if sid not in pts:
                order.append(sid)
                pts[sid] = []
                groups[sid] = grp
            elif groups[sid] != grp:
                raise ValueError(f"site {sid} listed with two groups")
            pts[sid].append(StrainScanPoint(*(float(v) for v in row[2:7])))
    out = []
    for sid in order:
        theta, df0 = observations.get(sid, (0.0, float("nan")))
        out.append(NvDataset(sid, groups[sid], pts[sid], theta, df0))
    return out


def write_observations_json(datasets, path):
    data = {d.site_id: {"theta_obs_deg": float(np.rad2deg(d.theta_obs)),
                        "delta_f0_obs_hz": float(d.delta_f0_obs)} for d in datasets}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_observations_json(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {sid: (float(np.deg2rad(v["theta_obs_deg"])), float(v["delta_f0_obs_hz"]))
            for sid, v in data.items()}


def write_polarization_csv(scan: PolarizationScan, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POLARIZATION_HEADER)
        for p, a, b in zip(np.rad2deg(scan.phi), scan.pl_ex, scan.pl_ey):
            w.writerow([_fmt(p), _fmt(a), _fmt(b)])


def read_polarization_csv(path, group="A", p_in=0.4e-6) -> PolarizationScan:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != POLARIZATION_HEADER:
            raise ValueError(f"unexpected polarization header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return PolarizationScan(np.deg2rad(data[:, 0]), data[:, 1], data[:, 2], group, p_in)
