from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bloch_homog import gallery
from bloch_homog.effective import compute_effective

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scalar():
    e = gallery.scalar_1d()
    return e, compute_effective(e.model, 8)


@pytest.fixture(scope="session")
def crossing():
    e = gallery.example_8_7()
    return e, compute_effective(e.model, 8)


@pytest.fixture(scope="session")
def complex_scalar():
    e = gallery.example_15_1(0.2)
    return e, compute_effective(e.model, 8)


@pytest.fixture(scope="session")
def pauli_entry():
    return gallery.example_16_2()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
