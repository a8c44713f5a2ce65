import numpy as np
import pytest

from hartree_lab.groundstate import constants, default_grid, ground_state
from hartree_lab.linops import solve_eigen


@pytest.fixture(scope="session")
def grid():
    return default_grid(7)


@pytest.fixture(scope="session")
def gs(grid):
    return ground_state(7, grid)


@pytest.fixture(scope="session")
def C(grid):
    return constants(7, grid)


@pytest.fixture(scope="session")
def pair(gs):
    # the first solve takes tens of seconds; everything downstream reuses it
    return solve_eigen(7, gs.grid, gs=gs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cache(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("HARTREE_LAB_CACHE", str(d))
    return d
