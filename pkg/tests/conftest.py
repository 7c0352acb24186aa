import numpy as np
import pytest

from quadwind.sim import ResidualModelParams, VehicleParams

# criterion number -> (passed, detail), filled in by the acceptance suite
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def vehicle():
    return VehicleParams()


@pytest.fixture
def residual():
    return ResidualModelParams()


@pytest.fixture
def quiet_residual():
    """Default aerodynamic model with label noise switched off."""
    return ResidualModelParams(noise_sigma=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (len(k), k)):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
