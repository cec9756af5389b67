import numpy as np
import pytest

from modeforge.field import GridSpec
from modeforge.gates import ModeBasis, qutrit_specs

# Small geometry used by the fast unit tests: 32 px of 24 um, waist 80 um.
SMALL_GRID = GridSpec(32, 32, 24e-6, 1550e-9)
SMALL_WAIST = 0.08e-3


@pytest.fixture
def small_grid():
    return SMALL_GRID


@pytest.fixture
def qutrit_basis():
    return ModeBasis.from_specs(qutrit_specs(SMALL_WAIST), SMALL_GRID)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance criteria append "criterion N PASS|FAIL: detail" lines here; they
# are printed at the end of the run whether or not output capture is on.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
