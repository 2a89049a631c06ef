import numpy as np
import pytest


def central_diff(f, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h * max(1.0, abs(theta[i]))
        g[i] = (f(theta + e) - f(theta - e)) / (2 * e[i])
    return g


@pytest.fixture
def fd():
    return central_diff


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
