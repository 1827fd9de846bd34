"""
Time-averaged spectra of a driven cantilever
============================================

With the beam oscillating, a laser scan that is slow compared with the
mechanical period records the time average of the moving lines. The result
is a pair of double-horned envelopes whose width grows with amplitude.
"""

import numpy as np

from nvstrain import (CantileverGeometry, DriveState, IntrinsicStrain, LaserPolarization,
                      NvOrientation, NvSite, cw_spectrum)

nv = NvSite(NvOrientation.from_group("B"), IntrinsicStrain(0.0, 6e9, 2e9),
            linewidth_gamma=0.5e9, geometry=CantileverGeometry(nv_axial_z=8e-6))
laser = LaserPolarization(np.deg2rad(30))
grid = np.linspace(-40e9, 40e9, 1601)

# %%
# For each amplitude, report where the signal rises above half of its
# maximum. The outermost such points bracket the swept range.
for x_c in (0.0, 1e-9, 2e-9, 4e-9):
    spectrum = cw_spectrum(nv, DriveState.resonant(x_c), laser, grid)
    above = spectrum.detunings[spectrum.signal > 0.5 * spectrum.signal.max()]
    print(f"x_c = {x_c * 1e9:3.0f} nm   signal above half max from "
          f"{above[0] / 1e9:6.1f} to {above[-1] / 1e9:6.1f} GHz   peak {spectrum.signal.max():.3f}")

# %%
# Driving off resonance shrinks the realized amplitude along a Lorentzian
# response, so the envelope collapses back toward the static lines.
resonant = DriveState.resonant(4e-9)
for offset in (0.0, 20.0, 50.0, 200.0):
    drive = DriveState.driven(resonant.mode, resonant.mode.f_c + offset)
    print(f"piezo detuned by {offset:5.0f} Hz  ->  tip amplitude {drive.x_c * 1e9:.2f} nm")
