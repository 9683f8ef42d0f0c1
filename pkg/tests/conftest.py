"""
Shared problem fixtures.
"""

import numpy as np
import pytest

from src.data.datasets import generate_synthetic
from src.optim.problem import ClientData, FederatedProblem


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help="also run the full-size statistical tests marked slow")


def pytest_configure(config):
    config.addinivalue_line('markers', "slow: full-size statistical runs, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def p0_problem():
    """One client, two unit-row components: A = I, y = (1, 1), lambda = 1; x* = (1/3, 1/3)."""
    return FederatedProblem([ClientData(np.eye(2), np.array([1.0, 1.0]))], lam=1.0)


@pytest.fixture(scope='module')
def p1_problem():
    """Heterogeneous 10-client problem with unit-norm rows (lambda = 1/n)."""
    return generate_synthetic(
        np.random.default_rng(1), M=10, n=20, d=10, noise=0.1, heterogeneity=1.0, rescale_rows=True
    )


@pytest.fixture(scope='module')
def homogeneous_problem():
    """Four identical clients, no noise, strongly regularized (kappa close to 1)."""
    return generate_synthetic(
        np.random.default_rng(3), M=4, n=50, d=4, noise=0.0, heterogeneity=0.0, lam=10.0,
        identical_clients=True, rescale_rows=True,
    )


@pytest.fixture
def make_problem():
    """Factory for random desk-size problems used by enumeration-based checks."""
    def factory(seed: int, M: int, n: int, d: int, heterogeneity: float = 1.0, lam: float = 0.1):
        return generate_synthetic(
            np.random.default_rng(seed), M=M, n=n, d=d, noise=0.5, heterogeneity=heterogeneity, lam=lam
        )
    return factory
