import numpy as np
import pytest

from coulomb2d.potential import ginibre


@pytest.fixture
def gin():
    return ginibre()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
