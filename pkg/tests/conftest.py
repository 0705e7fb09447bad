import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_full_rank(rng, n, d, scale=1.0):
    """Gaussian matrix, redrawn in the (measure-zero) rank-deficient case."""
    M = scale * rng.standard_normal((n, d))
    while np.linalg.matrix_rank(M) < d:  # pragma: no cover
        M = scale * rng.standard_normal((n, d))
    return M
