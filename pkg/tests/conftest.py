import numpy as np
import pytest

from critwave.geometry import make_builtin
from critwave.harmonic_map import solve_Q

# filled by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def sphere():
    return make_builtin("sphere")


@pytest.fixture(scope="session")
def ym():
    return make_builtin("yang-mills-shifted")


@pytest.fixture(scope="session")
def sphere_Q(sphere):
    return solve_Q(sphere)


@pytest.fixture(scope="session")
def ym_Q(ym):
    return solve_Q(ym)


@pytest.fixture(params=["sphere", "yang-mills-shifted"])
def builtin(request):
    return make_builtin(request.param)


def bump_u(r, k, a=1.0, r0=2.0, w=0.5):
    """Compactly supported test bump (hard cut at 4w, tiny jump e^-16)."""
    return a * (r / r0) ** k * np.exp(-(((r - r0) / w) ** 2)) * (np.abs(r - r0) <= 4 * w)
