import numpy as np
import pytest

from tzlab import acceptance
from tzlab.fields import TorusGrid


@pytest.fixture(scope="session")
def square():
    return TorusGrid(2 * np.pi, 2 * np.pi, 32, 32)


@pytest.fixture(scope="session")
def clifford_grid():
    return TorusGrid(2 * np.pi, 2 * np.pi / np.sqrt(3.0), 32, 32)


@pytest.fixture(scope="session")
def nontrivial():
    """Certified non-constant solution on a 32x32 lattice (cached)."""
    return acceptance.nontrivial_solution(32)


@pytest.fixture(scope="session")
def one_dim():
    return acceptance.one_dimensional_solution(32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def nontrivial64():
    """Same branch at 64^2, where products like e^v are resolved to roundoff."""
    return acceptance.nontrivial_solution(64)
