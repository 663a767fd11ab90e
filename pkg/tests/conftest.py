from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from suplab.core.grid import gaussian_density, make_grid  # noqa: E402


@pytest.fixture(scope="session")
def grid600():
    return make_grid(-6.0, 6.0, 600)


@pytest.fixture(scope="session")
def heat_u0(grid600):
    return gaussian_density(grid600, 0.0, 0.25)


def pytest_terminal_summary(terminalreporter):
    import gate

    if gate.LINES:
        terminalreporter.section("acceptance criteria")
        for line in gate.LINES:
            terminalreporter.write_line(line)
