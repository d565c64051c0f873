import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from smartpur.channel import MeasurementConfig, PathLossModel  # noqa: E402
from smartpur.geometry import CellConfig  # noqa: E402


NOISELESS_MEAS = MeasurementConfig(base_noise_sigma_db=0.0, doppler_coeff_db_per_kmh=0.0)


@pytest.fixture
def cell():
    return CellConfig()


@pytest.fixture
def big_cell():
    return CellConfig(r_cell=2000.0)


@pytest.fixture
def quiet_uma():
    return PathLossModel("UMa", k=3.9, beta_db=12.86, shadow_sigma_db=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# criterion number -> (title, passed); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
