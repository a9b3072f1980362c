import numpy as np
import pytest

from carnot_sr import ControlGrid, engel, free, heisenberg


def standard_algebras():
    return [heisenberg(1), heisenberg(2), engel(), free(2, 3), free(3, 3)]


def smooth_nodes(rng, n1, N, amp=1.0):
    """Random smooth first-layer curve through the origin, sampled at N + 1 nodes."""
    t = np.linspace(0.0, 1.0, N + 1)[:, None]
    c = rng.normal(size=(4, n1)) * amp
    return t * c[0] + np.sin(np.pi * t) * c[1] + t**2 * c[2] + (1 - np.cos(2 * np.pi * t)) * c[3]


def smooth_grid(a, rng, N=64, amp=1.0):
    return ControlGrid.from_nodes(a, smooth_nodes(rng, a.n1, N, amp))


def circle_nodes(N):
    t = np.linspace(0.0, 1.0, N + 1)
    return np.c_[np.cos(2 * np.pi * t) - 1.0, np.sin(2 * np.pi * t)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
