import pytest

from rct_lab.battery import BatteryParams, OcvCurve, default_ocv_curve
from rct_lab.evaluation import default_model


@pytest.fixture
def linear_ocv():
    return OcvCurve(((0.0, 3.0), (1.0, 4.2)))


@pytest.fixture
def battery():
    return BatteryParams()


@pytest.fixture(scope="session")
def ocv():
    return default_ocv_curve()


@pytest.fixture(scope="session")
def trained_model():
    """Resistance model fitted on the ten standard simulated sessions."""
    return default_model()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
