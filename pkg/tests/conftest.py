import numpy as np
import pytest

from slvcal.fdops import assemble
from slvcal.mesh import build_grid
from slvcal.model import case_params, synthetic_lv_surface

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def smile():
    return synthetic_lv_surface("smile")


@pytest.fixture(scope="session")
def case1():
    return case_params(1)


@pytest.fixture(scope="session")
def small_case1(case1):
    """Case 1 on a 20 x 10 mesh, cheap enough for property tests."""
    grid = build_grid(case1, m2=10)
    return grid, assemble(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
