from functools import lru_cache

import numpy as np
import pytest

from evolab.mesh import build_icosphere
from evolab.sfem import assemble, generalized_eigenpairs


@lru_cache(maxsize=None)
def fem_at(level):
    return assemble(build_icosphere(level))


@lru_cache(maxsize=None)
def eig_at(level):
    return generalized_eigenpairs(fem_at(level))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
