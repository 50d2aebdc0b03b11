import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def random_symmetric(rng, n, scale=1.0):
    M = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (M + M.T)


def random_covariates(rng, p, n):
    X = rng.normal(size=(p, n, n))
    X = 0.5 * (X + np.swapaxes(X, 1, 2))
    for l in range(p):
        np.fill_diagonal(X[l], 0.0)
    return X
