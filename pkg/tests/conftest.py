import numpy as np
import pytest

from sqgda.spectral import GridSpec, SpectralField


@pytest.fixture
def grid16():
    return GridSpec(16, 16)


@pytest.fixture
def grid32():
    return GridSpec(32, 32)


@pytest.fixture
def grid64():
    return GridSpec(64, 64)


def field_of(grid, fn, mean_zero=True):
    """SpectralField from a function of the physical mesh (X, Y)."""
    X, Y = grid.mesh()
    return SpectralField.from_physical(grid, fn(X, Y), mean_zero)
