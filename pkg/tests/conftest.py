from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from twospeed.geometry import Grid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Filled by tests/test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_grid() -> Grid:
    return Grid.for_problem(12.0, c=2.0, dx=1.0 / 8)


@pytest.fixture(scope="session")
def picard_grid() -> Grid:
    return Grid.for_problem(16.0, c=2.0, dx=1.0 / 16)
