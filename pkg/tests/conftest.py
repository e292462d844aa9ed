"""Shared fixtures: small simulated views with known decompositions."""

import math

import numpy as np
import pytest

from dgcca.dataset import Matrix
from dgcca.simulation import SetupSpec, compound_symmetric_cov, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="module")
def single_factor():
    """Setup 1.1 at theta = 50 degrees, scaled down to p = 60, n = 200."""
    spec = SetupSpec.create("1.1", p1=60, sigma2=1.0, theta=50, n=200, seed=11)
    dataset, truth = generate(spec)
    return spec, dataset, truth


@pytest.fixture(scope="module")
def multi_factor():
    """Setup 2.1 scaled down to p = 80, n = 300."""
    spec = SetupSpec.create("2.1", p1=80, sigma2=1.0, n=300, seed=5)
    dataset, truth = generate(spec)
    return spec, dataset, truth


@pytest.fixture(scope="module")
def two_level_views():
    """Noiseless rank-2 views sharing g exactly, with h_k pairwise at 50 degrees.

    Returns (views, loadings, g, h): view k is V_k diag(20, 10) [g; h_k], and
    g, h_k have unit variance with g orthogonal to every h_k.
    """
    gen = np.random.default_rng(31)
    n, p = 300, 20
    raw = gen.standard_normal((n, 4))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    u = math.sqrt(n) * q.T
    g = u[0]
    h = np.linalg.cholesky(compound_symmetric_cov(50)) @ u[1:]
    loadings = [np.linalg.qr(gen.standard_normal((p, 2)))[0] for _ in range(3)]
    views = [Matrix(v @ np.diag([20.0, 10.0]) @ np.vstack([g, h_k])) for v, h_k in zip(loadings, h)]
    return views, loadings, g, h
