import numpy as np
import pytest

from data_types.model import ObservedData
from services.simulation import simulate_full, simulate_observed


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scalar_trajectory():
    # (1, 0.5, 0.25) from a = 0.5
    return simulate_full([[0.5]], [1.0], 3)


@pytest.fixture
def scalar_data():
    # a = 0.5, c = 1, x = 1, T = 3: y = (0.5, 0.25)
    return simulate_observed([[0.5]], [[1.0]], [1.0], 3)


@pytest.fixture
def zero_data():
    return ObservedData(np.zeros(1), np.ones((1, 1)), np.zeros((2, 1)))


@pytest.fixture
def stable_matrix():
    def build(rng, n, radius=0.8):
        A = rng.standard_normal((n, n))
        return A * (radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12))

    return build


@pytest.fixture
def random_observed():
    """Noisy (x, C, y) for a random system; y is not consistent with any A."""

    def build(rng, n=2, p=1, horizon=5):
        return ObservedData(
            rng.standard_normal(n),
            rng.standard_normal((p, n)),
            rng.standard_normal((horizon - 1, p)),
        )

    return build
