from pathlib import Path

import pytest

from sqzsim.inference import MeasurementRecord, fit

DATA = Path(__file__).resolve().parents[1] / "src" / "sqzsim" / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def measured_fit():
    """The minimal-objective fit to the measured record (about 6 s)."""
    return fit(MeasurementRecord())


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
