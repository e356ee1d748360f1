import numpy as np
import pytest

from ionswap.sequences import World
from ionswap.trap import paper_geometry

PAPER_TARGETS = (1.488, 1.927, 3.248)


@pytest.fixture(scope="session")
def geometry():
    return paper_geometry()


@pytest.fixture(scope="session")
def world(geometry):
    return World(geometry)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
