import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nvstrain.mechanics import CantileverGeometry
from nvstrain.nv_core import CouplingConstants, IntrinsicStrain, NvOrientation
from nvstrain.site import NvSite
from nvstrain.inference import synthesize_strain_scan

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("NVSTRAIN_HYPOTHESIS_PROFILE", "default"))

DEFAULT_CONSTANTS = CouplingConstants()
AMPLITUDES = np.linspace(0.0, 24e-9, 7)


def ensemble_sites(seed=0, n_per_group=6):
    """Twelve NVs spread along the beam with GHz-scale intrinsic strain."""
    rng = np.random.default_rng(seed)
    sites = []
    for group in ("A", "B"):
        for i in range(n_per_group):
            geo = CantileverGeometry(nv_axial_z=float(rng.uniform(2e-6, 12e-6)))
            intr = IntrinsicStrain(float(rng.normal(0, 3e9)), float(rng.normal(0, 2e9)),
                                   float(rng.normal(0, 2e9)))
            sites.append(NvSite(NvOrientation.from_group(group), intr, geometry=geo,
                                site_id=f"{group}{i}"))
    return sites


def ensemble_datasets(constants=DEFAULT_CONSTANTS, seed=0, rng=None):
    return [synthesize_strain_scan(s, AMPLITUDES, constants, rng=rng)
            for s in ensemble_sites(seed)]


@pytest.fixture
def default_constants():
    return DEFAULT_CONSTANTS


# ---- acceptance bookkeeping ----------------------------------------------

ACCEPTANCE_LINES = []
OUTCOMES = {}


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so it can report on the property suites
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py")
               or "test_acceptance.py" in it.nodeid.split("::")[0])


def pytest_runtest_logreport(report):
    if report.failed or report.nodeid not in OUTCOMES:
        OUTCOMES[report.nodeid] = "failed" if report.failed else report.outcome


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
