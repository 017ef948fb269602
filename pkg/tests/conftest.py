"""Shared fixtures and synthetic-data helpers for the test suite."""

import numpy as np
import pytest

from microcorr import ExternalDataset, PairedDataset, SmootherConfig


def make_linear_data(
    n=200,
    p=3,
    q=2,
    seed=0,
    beta=None,
    gamma=None,
    noise=0.5,
    n_external=None,
):
    """Paired (and optionally external) data from a linear confounder model."""
    rng = np.random.default_rng(seed)
    beta = np.ones(p) if beta is None else np.asarray(beta, dtype=float)
    gamma = np.arange(1, p + 1, dtype=float) if gamma is None else np.asarray(
        gamma, dtype=float
    )

    def draw(size):
        Z = rng.normal(size=(size, q))
        h = Z.sum(axis=1, keepdims=True)
        X = h + rng.normal(size=(size, p))
        return Z, X

    Z, X = draw(n)
    y = Z.sum(axis=1) + X @ beta + noise * rng.normal(size=n)
    w = Z.sum(axis=1) + X @ gamma + noise * rng.normal(size=n)
    data = PairedDataset(Z=Z, X=X, y=y, w=w)
    if n_external is None:
        return data
    Ze, Xe = draw(n_external)
    return data, ExternalDataset(Z=Ze, X=Xe)


def default_config(data, n_external=None, **overrides):
    return SmootherConfig.defaults(data.n, n_external, q=data.q, **overrides)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, jitter=0.5):
    """Random symmetric positive-definite matrix of size p."""
    a = rng.normal(size=(p, p))
    return a @ a.T + jitter * np.eye(p)
