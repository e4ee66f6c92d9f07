import numpy as np
import pytest

from kvdelay.discretization import Mesh, assemble, initial_state
from kvdelay.params import SystemParams


CASE1 = dict(alpha=0.1, mu1=1.0, mu2=0.5, tau=1.0, xi=1.0)
CASE2 = dict(alpha=1.0, mu1=0.5, mu2=1.0, tau=1.0, xi=1.5)


def sine_start(mesh, tau):
    L = mesh.length
    return initial_state(lambda x: np.sin(np.pi * x / (2 * L)), lambda x: 0 * x,
                         lambda x, s: 0 * x, mesh, tau)


@pytest.fixture
def case1():
    return SystemParams(**CASE1)


@pytest.fixture
def case2():
    return SystemParams(**CASE2)


@pytest.fixture
def small_mesh():
    return Mesh(n_cells=20, n_rho=10)


@pytest.fixture
def small_pair(case1, small_mesh):
    return assemble(case1, small_mesh)
