import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from nvstrain import spectra
from nvstrain.errors import FitError
from nvstrain.mechanics import CantileverGeometry, DriveState, MechanicalMode, drive_response
from nvstrain.nv_core import CouplingConstants, IntrinsicStrain, NvOrientation
from nvstrain.optics import LaserPolarization, saturated_intensity
from nvstrain.site import NvSite
from nvstrain.spectra import (
    Spectrum,
    StrobeWindow,
    amplitude_map,
    cw_spectrum,
    drive_detuning_map,
    fit_lorentzian_peaks,
    lorentzian,
    read_map_csv,
    read_spectrum_csv,
    strobe_spectrum,
    write_map_csv,
    write_spectrum_csv,
)

POL = LaserPolarization(np.deg2rad(30), np.deg2rad(54), 0.4e-6, 0.4e-6)
GEO_TIP = CantileverGeometry(nv_axial_z=10e-6)


def site_b(e1=8e9, e2=0.0, gamma=1e9, geo=GEO_TIP, a1=0.0):
    return NvSite(NvOrientation.from_group("B"), IntrinsicStrain(a1, e1, e2),
                  linewidth_gamma=gamma, geometry=geo, site_id="T")


def grid(lo=-40e9, hi=40e9, n=801):
    return np.linspace(lo, hi, n)


def undriven(site, g, pol=POL):
    return cw_spectrum(site, DriveState.resonant(0.0), pol, g)


def second_moment(f, s):
    w = np.trapezoid(s, f)
    m = np.trapezoid(f * s, f) / w
    return np.trapezoid((f - m) ** 2 * s, f) / w


# ---- oracles -------------------------------------------------------------

def test_lorentzian_shape():
    assert lorentzian(0.0, 0.0, 2.0) == 1.0
    assert lorentzian(1.0, 0.0, 2.0) == pytest.approx(0.5)


def test_undriven_is_two_lorentzians():
    site = site_b(e1=8e9, e2=3e9)
    g = grid()
    spec = undriven(site, g)
    fp, fm, _, _ = site.frequencies_at(0.0)
    theta = 0.5 * np.arctan2(3e9, 8e9)
    pat = saturated_intensity("B", theta, POL)
    expected = pat.i_ex * lorentzian(g, fp, 1e9) + pat.i_ey * lorentzian(g, fm, 1e9)
    np.testing.assert_allclose(spec.signal, expected, rtol=1e-13, atol=1e-16)


def test_mirror_symmetry_of_pure_e_drive():
    k = CouplingConstants(0.0, 0.0, -0.85e15, 0.02e15)
    site = site_b(e1=0.0, e2=0.0)
    pol = LaserPolarization(np.deg2rad(45), np.pi / 2, 0.4e-6, 0.4e-6)
    g = grid(-30e9, 30e9, 601)
    spec = cw_spectrum(site, DriveState.resonant(2e-9), pol, g, k)
    np.testing.assert_allclose(spec.signal, spec.signal[::-1], rtol=1e-9)


def test_double_horn_against_monte_carlo():
    site = site_b(e1=10e9, gamma=1.5e9)
    drive = DriveState.resonant(2e-9)
    g = grid(-40e9, 40e9, 321)
    spec = cw_spectrum(site, drive, POL, g)
    rng = np.random.default_rng(7)
    phases = rng.uniform(0, 2 * np.pi, 1_000_000)
    acc = np.zeros_like(g)
    for chunk in np.array_split(phases, 50):
        x = drive.x_c * np.cos(chunk)
        cp, cm, hp, hm = spectra._line_params(site, x, POL, CouplingConstants(), 0.11, True)
        acc += spectra._weighted_lines(g, cp, cm, hp, hm, np.full(x.size, 1.0), site.linewidth_gamma)
    mc = acc / phases.size
    assert np.max(np.abs(mc - spec.signal)) / np.max(spec.signal) < 0.005
    # horns sit at the turning points
    fp_hi, fm_hi, _, _ = site.frequencies_at(drive.x_c)
    fp_lo, fm_lo, _, _ = site.frequencies_at(-drive.x_c)
    peaks, _ = find_peaks(spec.signal)
    tops = np.sort(g[peaks])
    targets = np.sort([fp_hi, fp_lo, fm_hi, fm_lo])
    assert len(tops) == 4
    np.testing.assert_allclose(tops, targets, atol=site.linewidth_gamma / 2)


def test_strobe_full_period_equals_cw():
    site = site_b(e1=5e9, e2=2e9)
    drive = DriveState.resonant(3e-9)
    g = grid()
    cw = cw_spectrum(site, drive, POL, g)
    st_ = strobe_spectrum(site, drive, POL, StrobeWindow(0.0, drive.period), g)
    np.testing.assert_allclose(st_.signal, cw.signal, rtol=1e-9)


def test_up_down_strobe_shift_oppositely():
    # 24 nm deflections seen by a group-B NV
    site = site_b(e1=20e9, geo=CantileverGeometry(nv_axial_z=14e-6))
    drive = DriveState.resonant(24e-9)
    fp0, fm0, _, _ = site.frequencies_at(0.0)
    fpu, fmu, _, _ = site.frequencies_at(24e-9)
    fpd, fmd, _, _ = site.frequencies_at(-24e-9)
    lo = min(fmu, fmd) - 10e9
    hi = max(fpu, fpd) + 10e9
    g = np.linspace(lo, hi, 2001)
    fits = {}
    for which in ("up", "down"):
        w = StrobeWindow.at_antinode(drive.period, which, drive.period / 400)
        fits[which] = fit_lorentzian_peaks(strobe_spectrum(site, drive, POL, w, g), 2)
    split = {k: v.peaks[1].center - v.peaks[0].center for k, v in fits.items()}
    assert np.sign(split["up"] - (fp0 - fm0)) == -np.sign(split["down"] - (fp0 - fm0))
    mid = {k: 0.5 * (v.peaks[0].center + v.peaks[1].center) for k, v in fits.items()}
    c0 = 0.5 * (fp0 + fm0)
    assert np.sign(mid["up"] - c0) == -np.sign(mid["down"] - c0)


def test_strobe_window_validation():
    with pytest.raises(ValueError):
        StrobeWindow(0.0, 2.0).validate(1.0)
    with pytest.raises(ValueError):
        StrobeWindow(1.5, 0.1).validate(1.0)
    w = StrobeWindow.at_antinode(1.0, "down", 0.1)
    assert w.start_T == pytest.approx(0.45)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        Spectrum(np.array([0.0, 1.0]), np.array([1.0, -1.0]))


# ---- maps ----------------------------------------------------------------

def test_far_detuned_rows_are_undriven():
    site = site_b(e1=6e9, e2=1e9)
    mode = MechanicalMode(x_max=3e-9)
    g = grid(n=201)
    far = np.array([mode.f_c - 8e5, mode.f_c + 8e5])
    m = drive_detuning_map(site, mode, POL, far, g)
    ref = undriven(site, g).signal
    np.testing.assert_allclose(m[0], ref, rtol=1e-6)
    np.testing.assert_allclose(m[1], ref, rtol=1e-6)


def test_detuning_envelope_width():
    site = site_b(e1=25e9, gamma=0.2e9)
    mode = MechanicalMode(x_max=3e-9)
    g = grid(-80e9, 80e9, 1601)
    piezo = mode.f_c + np.linspace(-80, 80, 33)
    m = drive_detuning_map(site, mode, POL, piezo, g)
    v0 = second_moment(g, undriven(site, g).signal)
    env = np.sqrt(np.maximum([second_moment(g, row) - v0 for row in m], 0.0))
    # envelope is proportional to x_c(f_piezo)
    np.testing.assert_allclose(env / env.max(), drive_response(mode, piezo) / mode.x_max, atol=0.02)
    fine = np.linspace(piezo[0], piezo[-1], 20001)
    e = np.interp(fine, piezo, env / env.max())
    above = fine[e >= 0.5]
    assert above[-1] - above[0] == pytest.approx(mode.f_c / mode.quality_q, rel=0.03)


def test_asymmetric_modulation_with_intrinsic_e_strain():
    x = np.linspace(-3e-9, 3e-9, 101)
    fp, fm, _, _ = site_b(e1=0.0, e2=0.0).frequencies_at(x)
    assert np.ptp(fp) == pytest.approx(np.ptp(fm), rel=1e-12)
    fp, fm, _, _ = site_b(e1=2e9, e2=4e9).frequencies_at(x)
    assert abs(np.ptp(fp) - np.ptp(fm)) > 0.05 * np.ptp(fp)


def test_amplitude_map_rows():
    site = site_b(e1=25e9, gamma=0.2e9)
    mode = MechanicalMode(x_max=3e-9)
    g = grid(-80e9, 80e9, 1601)
    amps = np.linspace(0.0, 3e-9, 7)
    m = amplitude_map(site, mode, POL, amps, g)
    ref = undriven(site, g).signal
    np.testing.assert_allclose(m[0], ref, rtol=1e-14)
    v0 = second_moment(g, ref)
    env = np.sqrt([second_moment(g, row) - v0 for row in m[1:]])
    slope = env / amps[1:]
    assert np.ptp(slope) / slope.mean() < 0.05


def test_map_rows_independent_of_thread_count(monkeypatch):
    site = site_b()
    mode = MechanicalMode(x_max=2e-9)
    g = grid(n=101)
    piezo = mode.f_c + np.linspace(-30, 30, 5)
    monkeypatch.setenv("NVSTRAIN_THREADS", "1")
    a = drive_detuning_map(site, mode, POL, piezo, g)
    monkeypatch.setenv("NVSTRAIN_THREADS", "4")
    b = drive_detuning_map(site, mode, POL, piezo, g)
    assert np.array_equal(a, b)


# ---- fitting -------------------------------------------------------------

def test_two_peak_fit_recovers_centres():
    site = site_b(e1=6e9, e2=2e9)
    g = grid(n=801)
    res = fit_lorentzian_peaks(undriven(site, g), 2)
    fp, fm, _, _ = site.frequencies_at(0.0)
    assert res.peaks[0].center == pytest.approx(fm, abs=1e-4 * 1e9)
    assert res.peaks[1].center == pytest.approx(fp, abs=1e-4 * 1e9)
    assert res.peaks[0].fwhm == pytest.approx(1e9, rel=1e-6)
    assert not res.degenerate


def test_single_peak_exact():
    f = np.linspace(-5e9, 5e9, 401)
    y = 3.0 * lorentzian(f, 0.7e9, 0.8e9) + 0.1
    res = fit_lorentzian_peaks(Spectrum(f, y), 1)
    p = res.peaks[0]
    assert p.center == pytest.approx(0.7e9, rel=1e-8)
    assert p.fwhm == pytest.approx(0.8e9, rel=1e-8)
    assert p.amplitude == pytest.approx(3.0, rel=1e-8)
    assert res.background == pytest.approx(0.1, rel=1e-8)


def test_flat_spectrum_fit_error():
    f = np.linspace(0, 1, 64)
    with pytest.raises(FitError):
        fit_lorentzian_peaks(Spectrum(f, np.zeros_like(f)), 2)


def test_close_peaks_flagged():
    f = np.linspace(-5e9, 5e9, 401)
    y = lorentzian(f, 0.0, 1e9) + lorentzian(f, 0.1e9, 1e9)
    with pytest.warns(RuntimeWarning):
        res = fit_lorentzian_peaks(Spectrum(f, y), 2)
    assert res.degenerate


# ---- file formats --------------------------------------------------------

def test_spectrum_csv_roundtrip(tmp_path):
    spec = cw_spectrum(site_b(e2=1e9), DriveState.resonant(1e-9), POL, grid(n=101))
    p = tmp_path / "s.csv"
    write_spectrum_csv(spec, p)
    back = read_spectrum_csv(p)
    assert np.array_equal(back.detunings, spec.detunings)
    assert np.array_equal(back.signal, spec.signal)


def test_map_csv_roundtrip(tmp_path):
    g = grid(n=11)
    vals = np.random.default_rng(1).random((3, 11))
    p = tmp_path / "m.csv"
    write_map_csv(p, "xc_m", [0.0, 1e-9, 2e-9], g, vals)
    key, keys, g2, v2 = read_map_csv(p)
    assert key == "xc_m"
    assert np.array_equal(keys, [0.0, 1e-9, 2e-9])
    assert np.array_equal(g2, g) and np.array_equal(v2, vals)


# ---- properties ----------------------------------------------------------

def test_spectral_weight_conserved():
    site = site_b(e1=6e9, e2=2e9, gamma=0.3e9)
    g = np.unique(np.concatenate([np.linspace(-2e12, -60e9, 3000),
                                  np.linspace(-60e9, 60e9, 4801),
                                  np.linspace(60e9, 2e12, 3000)]))
    w0 = np.trapezoid(undriven(site, g).signal, g)
    for xc in (1e-9, 3e-9):
        s = cw_spectrum(site, DriveState.resonant(xc), POL, g, modulate_intensity=False)
        assert np.trapezoid(s.signal, g) == pytest.approx(w0, rel=1e-6)


@settings(max_examples=15)
@given(st.floats(0.2e-9, 3e-9), st.floats(-15e9, 15e9), st.floats(0.0, 0.5),
       st.sampled_from(["A", "B"]))
def test_quadrature_converged_and_nonnegative(xc, e1, e2_frac, group):
    site = NvSite(NvOrientation.from_group(group), IntrinsicStrain(0, e1, e2_frac * 5e9),
                  linewidth_gamma=1e9, geometry=GEO_TIP)
    drive = DriveState.resonant(xc)
    g = grid(-60e9, 60e9, 241)
    spec = cw_spectrum(site, drive, POL, g)
    assert np.all(spec.signal >= 0)
    n = spec.meta["samples"]
    t = (np.arange(2 * n) + 0.5) / (2 * n) * drive.period
    x = xc * np.cos(2 * np.pi * drive.f_piezo * t)
    cp, cm, hp, hm = spectra._line_params(site, x, POL, CouplingConstants(), 0.11, True)
    finer = spectra._weighted_lines(g, cp, cm, hp, hm, np.full(2 * n, 1 / (2 * n)), 1e9)
    assert np.max(np.abs(finer - spec.signal) / np.abs(finer)) < 1e-6


@pytest.mark.parametrize("e2", [14.14, 1e3, 1e6])
def test_near_degenerate_crossing_converges(e2):
    # E1 passes through zero each cycle while a tiny E2 keeps theta defined
    site = NvSite(NvOrientation.from_group("B"), IntrinsicStrain(0, 0.0, e2),
                  linewidth_gamma=1e9, geometry=GEO_TIP)
    spec = cw_spectrum(site, DriveState.resonant(2.8e-9), POL, grid(-60e9, 60e9, 241))
    assert spec.meta["samples"] <= 1 << 17


@settings(max_examples=10)
@given(st.floats(0.5e-9, 3e-9), st.floats(12e9, 30e9), st.sampled_from(["A", "B"]))
def test_strobe_brackets_cw_peaks(xc, e1, group):
    # f_+- are monotonic in x here (no intrinsic E2, E1 keeps its sign)
    site = NvSite(NvOrientation.from_group(group), IntrinsicStrain(0, e1, 0.0),
                  linewidth_gamma=0.3e9, geometry=GEO_TIP)
    drive = DriveState.resonant(xc)
    g = grid(-60e9, 60e9, 2401)
    cw = cw_spectrum(site, drive, POL, g)
    peaks, _ = find_peaks(cw.signal, prominence=1e-3 * cw.signal.max())
    ends = [site.frequencies_at(s * xc)[:2] for s in (1, -1)]
    lo = min(min(e) for e in ends) - site.f_zpl
    hi = max(max(e) for e in ends) - site.f_zpl
    tol = site.linewidth_gamma / 100 + (g[1] - g[0])
    assert np.all(g[peaks] >= lo - tol) and np.all(g[peaks] <= hi + tol)
