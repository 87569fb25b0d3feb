import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from epsd import pipeline, simulator  # noqa: E402

SEED = 2026
DT = 0.02
N_MC = 2000

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def seismic():
    return simulator.seismic_model()


@pytest.fixture(scope="session")
def seismic_params():
    return simulator.SeismicModelParams()


@pytest.fixture(scope="session")
def seismic_ensemble(seismic):
    """2000 SRM records of the seismic model as a (records, samples) array."""
    recs = simulator.srm_simulate(seismic, N_MC, DT, SEED, workers=1)
    return np.stack([r.samples for r in recs])


@pytest.fixture(scope="session")
def figure8_mc(seismic):
    """Shared 2000-record Monte Carlo run over the five preset transforms."""
    n = int(round(seismic.duration / DT))
    specs = pipeline.figure8_preset(n, DT)
    return pipeline.run_mc(seismic, specs, N_MC, DT, SEED)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
