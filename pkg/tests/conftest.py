import numpy as np
import pytest

from carbonnas import surrogate


@pytest.fixture(scope="session")
def small_benchmark():
    """A 3-gene/arity-3 table (27 architectures) for fast simulator tests."""
    return surrogate.gen_synthetic_benchmark(seed=7, shape=(3, 3))


@pytest.fixture(scope="session")
def default_benchmark():
    """The full 15625-architecture default table (shared; generation ~1s)."""
    return surrogate.gen_synthetic_benchmark(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
