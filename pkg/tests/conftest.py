import numpy as np
import pytest
from hypothesis import settings

from zklab.fields import gaussian
from zklab.spectral import Grid2D

settings.register_profile("zklab", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("zklab")


@pytest.fixture(scope="session")
def grid():
    return Grid2D.square(128, 16.0)


@pytest.fixture(scope="session")
def gauss(grid):
    return gaussian(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
