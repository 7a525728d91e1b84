import numpy as np
import pytest

from nelsonlab.atomic import GridSpec, PotentialSpec, atomic_basis

ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def harmonic3():
    """Harmonic trap, d=3, L=8, 41 points per axis, four levels."""
    return atomic_basis(PotentialSpec.harmonic(), GridSpec(3, 8.0, 41), 4)


@pytest.fixture(scope="session")
def harmonic1():
    return atomic_basis(PotentialSpec.harmonic(), GridSpec(1, 8.0, 401), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
