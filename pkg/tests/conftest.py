import numpy as np
import pytest

from spdkit.linalg import sym


def make_spd(rng, d, log_spread=1.0):
    """Random SPD matrix with controlled conditioning."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.exp(rng.uniform(-log_spread, log_spread, size=d))
    return sym((q * w) @ q.T)


def make_spd_pair(rng, d, log_spread=1.0):
    return make_spd(rng, d, log_spread), make_spd(rng, d, log_spread)


def make_invertible(rng, d):
    """Random invertible matrix with singular values in [0.5, 2]."""
    q1, _ = np.linalg.qr(rng.standard_normal((d, d)))
    q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = rng.uniform(0.5, 2.0, size=d)
    return (q1 * s) @ q2.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
