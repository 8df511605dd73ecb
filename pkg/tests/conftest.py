import numpy as np
import pytest

from sclaw import TorusGrid, make_kernel, preset


@pytest.fixture(scope="session")
def tasep():
    return preset("tasep")


@pytest.fixture(scope="session")
def burgers():
    return preset("burgers")


@pytest.fixture(scope="session")
def linear():
    return preset("linear", c=1.0)


@pytest.fixture
def grid64():
    return TorusGrid(64)


@pytest.fixture
def grid256():
    return TorusGrid(256)


@pytest.fixture
def kernel64(grid64):
    return make_kernel("triangle", 0.1, grid64)


@pytest.fixture
def kernel256(grid256):
    return make_kernel("triangle", 0.1, grid256)


def l1(grid, a, b):
    return float(np.sum(np.abs(a - b)) * grid.dx)
