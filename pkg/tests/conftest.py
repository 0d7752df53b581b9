import numpy as np
import pytest

from wcsr.spectrum import OccupancyProfile

ACCEPTANCE_LINES = []


@pytest.fixture
def hetero_profile():
    return OccupancyProfile.from_blocks([50, 50, 50, 50], [0.2, 0.1, 0.05, 0.05])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda ln: int(ln.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
