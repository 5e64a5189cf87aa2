import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sparse(rng, rows, cols, density=0.3, integer=False):
    """Dense array with roughly ``density`` nonzeros, for building triplets."""
    mask = rng.random((rows, cols)) < density
    vals = rng.integers(1, 6, size=(rows, cols)).astype(float) if integer else rng.standard_normal((rows, cols))
    return np.where(mask, vals, 0.0)
