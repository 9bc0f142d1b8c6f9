import numpy as np
import pytest

from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, init_landau_strong, run


@pytest.fixture(scope="session")
def small_grid():
    return PhaseSpaceGrid(16, 32)


@pytest.fixture(scope="session")
def small_series(small_grid):
    """40 Landau frames on a 16 x 32 grid, one every 4 steps."""
    return run(init_landau_strong(small_grid), small_grid, 0.1, 156, record_every=4, ic_name="landau-strong")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one "PASS"/"FAIL" line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES.items()):
            terminalreporter.write_line(line)
