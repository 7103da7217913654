"""Shared fixtures and the acceptance-summary reporter.

Every acceptance test records a single verdict line through the ``acceptance``
fixture; the lines are replayed in the terminal summary so a plain ``pytest``
run always shows one pass/fail line per criterion.
"""

import numpy as np
import pytest

from rdlab import Field, Grid, MCConfig, model_preset

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record ``(number, label, passed, detail)`` for the run summary."""

    def record(number: int, label: str, passed: bool, detail: str = "") -> bool:
        verdict = "PASS" if passed else "FAIL"
        suffix = f"  [{detail}]" if detail else ""
        _ACCEPTANCE_LINES.append(f"ACCEPTANCE {number:02d} {label}: {verdict}{suffix}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)


@pytest.fixture(scope="session")
def cubic64(grid64):
    return model_preset("cubic-default", grid64)


@pytest.fixture(scope="session")
def ou64(grid64):
    return model_preset("ou-linear", grid64, a=1.0, sigma=0.5)


@pytest.fixture
def mc():
    def make(seed: int = 2026, dt: float = 0.01, threads: int = 2, **kw) -> MCConfig:
        return MCConfig(master_seed=seed, dt=dt, threads=threads, **kw)

    return make


def mode_state(grid: Grid, coeffs) -> Field:
    """State with the given leading eigen-coefficients, zero beyond."""
    vals = np.zeros(grid.n)
    for k, c in enumerate(coeffs, start=1):
        vals += c * np.sqrt(2.0) * np.sin(k * np.pi * grid.xi)
    return Field(grid, vals)
