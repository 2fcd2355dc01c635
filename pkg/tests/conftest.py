import numpy as np
import pytest

from cdpflow.torus import ScalarField, VectorField, make_grid


@pytest.fixture(params=[2, 3], ids=["2d", "3d"])
def grid(request):
    return make_grid(request.param, 16, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def shear(grid, amplitude=1.0):
    """``amplitude * (sin(2 pi x2), 0, ...)``."""
    x = grid.coords()
    v = np.zeros((grid.dim,) + grid.shape)
    v[0] = amplitude * np.sin(2 * np.pi * x[1])
    return VectorField(grid, v)


def constant_scalar(grid, value):
    return ScalarField(grid, np.full(grid.shape, float(value)))
