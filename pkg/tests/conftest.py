import numpy as np
import pytest

from gridmarl.dynamics import BAParams, GenParams


@pytest.fixture
def table2():
    """Two-generator, one-load BA area (M=0.1, D=0.016, R_D=0.1, T_SV=30)."""
    return BAParams(M=0.1, D=0.016, R_D=0.1, T_SV=30.0)


@pytest.fixture
def table3():
    return GenParams(M=[0.1, 0.15], D=[0.016, 0.018], R_D=[0.1, 0.08], T_SV=[30.0, 30.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
