import numpy as np
import pytest


def tv_distance(x, y):
    """Total variation between the empirical laws of two integer samples."""
    vals = np.union1d(x, y)
    px = np.array([np.mean(x == v) for v in vals])
    py = np.array([np.mean(y == v) for v in vals])
    return 0.5 * np.abs(px - py).sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
