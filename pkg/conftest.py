import typing

import numpy as np
import pytest

from lab.fock import CloudFunction, GridRecipe, Mode, ModeGrid


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running convergence checks")


def make_line_grid(momenta: typing.Sequence[float], weights: typing.Sequence[float] | None = None) -> ModeGrid:
    """A 1D grid with the given mode momenta (and unit weights unless given)."""
    weights = [1.0] * len(momenta) if weights is None else list(weights)
    modes = tuple(Mode(i, (float(k),), None, float(w)) for i, (k, w) in enumerate(zip(momenta, weights)))
    ks = [abs(k) for k in momenta]
    return ModeGrid(1, modes, min(ks), max(ks))


@pytest.fixture
def line_grid():
    return make_line_grid


@pytest.fixture
def single_mode():
    return make_line_grid([0.5])


@pytest.fixture
def axes_grid():
    return ModeGrid.build(GridRecipe(3, 0.1, 1.0, 1, "axes"))


@pytest.fixture
def cloud():
    def build(grid: ModeGrid, values) -> CloudFunction:
        return CloudFunction(grid, np.broadcast_to(np.asarray(values, dtype=complex), (len(grid),)))

    return build
