import numpy as np
import pytest

from meshadapt.mesh import Mesh, generate_uniform


@pytest.fixture
def unit_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.fixture(scope="session")
def square_h05():
    """[-1, 1]^2 at h = 0.05 (the resolution used by the recovery oracles)."""
    return generate_uniform((-1, 1, -1, 1), 0.05)


@pytest.fixture(scope="session")
def coarse_square():
    return generate_uniform((-1, 1, -1, 1), 0.2)


def interior_mask(mesh, margin):
    p = mesh.points
    lo, hi = p.min(axis=0) + margin, p.max(axis=0) - margin
    return np.all((p > lo) & (p < hi), axis=1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
