import numpy as np
import pytest

from permom.tensor_core import DensityMatrix, IndexPermutation


def random_rho(rng, dims, rank=None):
    D = int(np.prod(dims))
    rank = rank or D
    G = rng.normal(size=(D, rank)) + 1j * rng.normal(size=(D, rank))
    rho = G @ G.conj().T
    return DensityMatrix(rho / np.trace(rho).real, tuple(dims))


def random_perm(rng, k):
    return IndexPermutation(tuple(int(x) + 1 for x in rng.permutation(2 * k)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
