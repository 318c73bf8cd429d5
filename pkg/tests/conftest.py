import numpy as np
import pytest

from covoptest.fcore import FunctionalSample, Grid
from covoptest.power import FCPCModel, sine_basis


@pytest.fixture
def grid():
    return Grid.uniform(0.0, 1.0, 51)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gauss_model(grid):
    return FCPCModel(grid, [2.0, 1.0, 0.5], sine_basis(grid, 3))


def random_sample(rng, grid, n, label=None, rank=4):
    basis = sine_basis(grid, rank)
    scores = rng.standard_normal((n, rank)) * np.sqrt(1.0 / np.arange(1, rank + 1))
    return FunctionalSample(grid, scores @ basis, label)
