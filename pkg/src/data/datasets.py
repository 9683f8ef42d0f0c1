"""
Synthetic problem generation and client partitioning of real datasets.
"""

import logging
from typing import Optional, Union

import numpy as np

from ..optim.problem import ClientData, FederatedProblem
from ..utils.errors import ConfigurationError, LibSVMParseError, ProblemError
from .libsvm import load_libsvm
from .models import LibSVMSource, PartitionKind, PartitionScheme, RawDataset, SyntheticSource

logger = logging.getLogger(__name__)


def normalize_rows(features: np.ndarray) -> np.ndarray:
    """Scale every nonzero row to unit Euclidean norm."""
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return features / np.where(norms > 0, norms, 1.0)


def default_lambda(n: int) -> float:
    return 1.0 / n


def generate_synthetic(rng: np.random.Generator, M: int, n: int, d: int, noise: float = 0.0,
                       heterogeneity: float = 0.0, lam: Optional[float] = None,
                       identical_clients: bool = False, rescale_rows: bool = False) -> FederatedProblem:
    """
    Planted linear model per client: w_m = w_bar + heterogeneity * u_m, y = a^T w_m + noise * xi.

    Args:
        rng: Source of all randomness; draws happen in a fixed order
        M, n, d: Clients, components per client and dimension
        noise: Standard deviation of the target noise
        heterogeneity: Spread of the client models around the shared one
        lam: Ridge weight, 1/n when None
        identical_clients: Every client reuses the same rows and noise
        rescale_rows: Normalize every row to unit norm

    Returns:
        FederatedProblem
    """
    if min(M, n, d) < 1:
        raise ProblemError(f"sizes must be >= 1, got M={M}, n={n}, d={d}")
    if noise < 0 or heterogeneity < 0:
        raise ProblemError("noise and heterogeneity must be >= 0")

    w_bar = rng.standard_normal(d)
    offsets = rng.standard_normal((M, d))
    if identical_clients:
        shared_rows = rng.standard_normal((n, d))
        shared_noise = rng.standard_normal(n)
        rows = np.broadcast_to(shared_rows, (M, n, d))
        xi = np.broadcast_to(shared_noise, (M, n))
    else:
        rows = rng.standard_normal((M, n, d))
        xi = rng.standard_normal((M, n))

    clients = []
    for m in range(M):
        features = normalize_rows(rows[m]) if rescale_rows else np.array(rows[m])
        w_m = w_bar + heterogeneity * offsets[m]
        clients.append(ClientData(features, features @ w_m + noise * xi[m]))

    lam = default_lambda(n) if lam is None else lam
    problem = FederatedProblem(clients, lam)
    logger.info(f"Generated synthetic {problem!r} (noise={noise:g}, heterogeneity={heterogeneity:g})")
    return problem


def partition(raw: RawDataset, scheme: PartitionScheme, rng: np.random.Generator,
              lam: Optional[float] = None, rescale_rows: bool = False) -> FederatedProblem:
    """
    Split a dataset into M equal-size clients.

    IID shuffles the rows, SORTED_BY_TARGET orders them by label (stable); contiguous
    blocks of floor(N/M) rows then form the clients and the remainder is dropped.
    """
    N, M = raw.N, scheme.M
    if N < M:
        raise ProblemError(f"cannot split {N} rows across {M} clients")
    per_client = N // M
    dropped = N - per_client * M
    if dropped:
        logger.warning(f"Dropping {dropped} of {N} rows so every client holds {per_client}")

    if scheme.kind == PartitionKind.IID:
        order = rng.permutation(N)
    else:
        order = np.argsort(raw.targets, kind='stable')
    order = order[:per_client * M]

    features = normalize_rows(raw.features) if rescale_rows else raw.features
    clients = [
        ClientData(features[block], raw.targets[block])
        for block in order.reshape(M, per_client)
    ]
    lam = default_lambda(per_client) if lam is None else lam
    problem = FederatedProblem(clients, lam)
    logger.info(f"Partitioned {raw.source} ({scheme.kind.value}) into {problem!r}")
    return problem


def build_problem(source: Union[SyntheticSource, LibSVMSource]) -> FederatedProblem:
    """
    Materialize the problem described by an experiment's problem section.

    Raises:
        ConfigurationError: the LIBSVM file is missing or malformed (field problem.path)
    """
    rng = np.random.default_rng(source.seed)
    if isinstance(source, SyntheticSource):
        return generate_synthetic(
            rng, source.M, source.n, source.d, source.noise, source.heterogeneity,
            lam=source.lam, identical_clients=source.identical_clients,
            rescale_rows=source.normalize_rows,
        )
    if isinstance(source, LibSVMSource):
        try:
            raw = load_libsvm(source.path, n_features=source.n_features)
        except LibSVMParseError as e:
            raise ConfigurationError(f"cannot load dataset: {e}", 'problem.path') from e
        return partition(raw, PartitionScheme(source.partition, source.M), rng,
                         lam=source.lam, rescale_rows=source.normalize_rows)
    raise ConfigurationError(f"unsupported problem source {type(source).__name__}", 'problem.source')
