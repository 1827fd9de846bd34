"""
Stroboscopic spectra
====================

Gating the detection to a short window near a turning point of the motion
freezes the strain. The double-horned envelope then turns back into two
Lorentzians at the instantaneous line positions.
"""

import numpy as np

from nvstrain import (CantileverGeometry, DriveState, IntrinsicStrain, LaserPolarization,
                      NvOrientation, NvSite, StrobeWindow, cw_spectrum,
                      fit_lorentzian_peaks, strobe_spectrum)

nv = NvSite(NvOrientation.from_group("B"), IntrinsicStrain(0.0, 6e9, 2e9),
            linewidth_gamma=1e9, geometry=CantileverGeometry(nv_axial_z=8e-6))
laser = LaserPolarization(np.deg2rad(30))
drive = DriveState.resonant(3e-9)
grid = np.linspace(-30e9, 30e9, 1201)

# %%
# A window spanning a whole period is the same measurement as the
# continuous-wave average.
cw = cw_spectrum(nv, drive, laser, grid)
full = strobe_spectrum(nv, drive, laser, StrobeWindow(0.0, drive.period), grid)
print("full-period window vs CW, largest difference:", np.max(np.abs(full.signal - cw.signal)))

# %%
# Narrowing the window around each turning point.
for which, x in (("up", drive.x_c), ("down", -drive.x_c)):
    f_plus, f_minus, _, _ = nv.frequencies_at(x)
    print(f"\nantinode '{which}': static lines at {f_minus / 1e9:.2f} and {f_plus / 1e9:.2f} GHz")
    for fraction in (1 / 4, 1 / 20, 1 / 200):
        window = StrobeWindow.at_antinode(drive.period, which, drive.period * fraction)
        fit = fit_lorentzian_peaks(strobe_spectrum(nv, drive, laser, window, grid), 2)
        centres = ", ".join(f"{p.center / 1e9:.2f}" for p in fit.peaks)
        widths = ", ".join(f"{p.fwhm / 1e9:.2f}" for p in fit.peaks)
        print(f"  window = period/{1 / fraction:<4.0f} centres [{centres}] GHz  widths [{widths}] GHz")
