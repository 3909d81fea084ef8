import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hcrom.mesh import build_system  # noqa: E402

# acceptance verdicts collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def lip16():
    return build_system("lipschitz4", 16)


@pytest.fixture(scope="session")
def lat16():
    return build_system("latin4", 16)


@pytest.fixture(scope="session")
def lip8():
    return build_system("lipschitz4", 8)


@pytest.fixture(scope="session")
def grid8():
    return build_system("grid16", 8)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
