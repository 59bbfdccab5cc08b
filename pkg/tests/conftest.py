import numpy as np
import pytest

from herdlab.calibration import CoMovement, ModelParams


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def small_params():
    """Two sectors of two stocks, a few hundred agents: fast engine checks."""
    return ModelParams(n=4, n_sec=2, co=CoMovement(0.2, (0.5, 0.4)), p=0.01, P=0.3,
                       N=400, L=20, burn_in=0, T_out=50)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
