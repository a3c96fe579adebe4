import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def sample_test_pairs(p, count, rng, sparse_size):
    """Half Gaussian, half sparse (u, v) rows, mirroring the library oracle."""
    U = rng.standard_normal((count, p))
    V = rng.standard_normal((count, p))
    half = count // 2
    m = count - half
    k = max(1, min(sparse_size, p))
    for M in (U, V):
        sparse = np.zeros((m, p))
        cols = rng.integers(0, p, size=(m, k))
        vals = rng.standard_normal((m, k))
        np.put_along_axis(sparse, cols, vals, axis=1)
        M[half:] = sparse
    return U, V
