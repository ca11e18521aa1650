"""
Shared fixtures.
"""
import numpy as np
import pytest

from core.coda import inverse_ilr


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def strict_compositions(rng):
    """200 strictly positive 5-part compositions."""
    return rng.dirichlet(np.full(5, 2.0), size=200)


@pytest.fixture
def aln_instance():
    """
    20×5 additive-logistic-normal sample (scaled to totals near 1000) with
    about 15% of the cells of the first three columns censored at their
    0.25 quantile. Columns 3 and 4 stay fully observed.
    """
    gen = np.random.default_rng(7)
    n, D = 20, 5
    cov = 0.3 * np.eye(D - 1) + 0.1
    z = gen.multivariate_normal(np.array([0.5, 0.2, -0.1, 0.3]), cov, size=n)
    x = np.exp(np.column_stack([z, np.zeros(n)]))
    x = 1000 * x / x.sum(axis=1, keepdims=True)
    dl = np.zeros(D)
    truth = x.copy()
    for j in range(3):
        dl[j] = np.quantile(x[:, j], 0.25)
        x[x[:, j] < dl[j], j] = 0.0
    dl[3:] = x[:, 3:].min(axis=0)
    return truth, x, dl


@pytest.fixture
def low_rank_instance():
    """Exactly rank-2 pivot-coordinate matrix (n=40, D=10) and its compositions."""
    gen = np.random.default_rng(11)
    n, D = 40, 10
    scores = gen.normal(size=(n, 2))
    loadings = gen.normal(size=(2, D - 1))
    Z = scores @ loadings
    Z = Z - Z.mean(axis=0) + gen.normal(size=D - 1)
    return Z, inverse_ilr(Z)
