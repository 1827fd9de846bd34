"""
Figures of merit for a nanobeam proposal
========================================

A stiff nanobeam with a large zero-point strain could put an NV in the
regime where optical cooling beats thermal heating of the mode.
"""

from nvstrain import DeviceProposal, report

proposal = DeviceProposal(f_c=238e6, quality_q=1e5, temperature=4.2, gamma2=100e6,
                          rabi_omega=100e6, linewidth_gamma=100e6)

# %%
# With the coupling fixed by hand, then with the coupling derived from the
# zero-point strain of the proposal.
for label, g in (("g = 21.5 MHz", 21.5e6), ("derived g", None)):
    r = report(proposal, g=g)
    print(f"\n{label}")
    print(f"  coupling g            {r['g_hz'] / 1e6:8.2f} MHz")
    print(f"  thermal occupation    {r['n_thermal']:8.1f}")
    print(f"  cooperativity         {r['cooperativity']:8.2f}")
    print(f"  cooling rate          {r['cooling_rate_hz'] / 1e3:8.1f} kHz")
    print(f"  steady-state phonons  {r['n_steady_state']:8.2f}")
