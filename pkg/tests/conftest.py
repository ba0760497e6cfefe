import numpy as np
import pytest

from nlslab import radial_core as rc
from nlslab.ground_state import solve_shooting


@pytest.fixture(scope="session")
def grid():
    """Default desk-scale grid: d=4, 512 nodes, Rmax=30"""
    return rc.make_grid(4, 512, 30.0)


@pytest.fixture(scope="session")
def Q(grid):
    return solve_shooting(4, grid=grid)


@pytest.fixture(scope="session")
def wide_grid():
    """Larger box for the in/out decomposition, whose kernel needs decay by Rmax/2"""
    return rc.make_grid(4, 512, 50.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
