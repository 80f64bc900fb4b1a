import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ccbm.mesh import Mesh, generate_annular_mesh
from ccbm.shapes import Circle, lshape

settings.register_profile("ccbm", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ccbm")

LAM = -4.24573


def unit_square():
    """Two counterclockwise triangles on [0, 1]^2."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh(v, [[0, 1, 2], [0, 2, 3]], [], [0, 1, 2, 3])


def right_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 2]], [], [0, 1, 2])


@pytest.fixture(scope="session")
def annulus_coarse():
    return generate_annular_mesh(Circle(0.5), 1.25, 0.1)


@pytest.fixture(scope="session")
def annulus_exact():
    """Annulus whose outer circle is the exact free boundary for LAM."""
    return generate_annular_mesh(Circle(0.5), 0.7, 0.05)


@pytest.fixture(scope="session")
def lmesh():
    return generate_annular_mesh(lshape(), 1.25, 0.1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
