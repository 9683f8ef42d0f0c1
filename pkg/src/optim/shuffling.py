"""
Permutation sampling and the two local-epoch kernels run by every client.
"""

import logging
from typing import Optional

import numpy as np

from ..data.models import Permutation
from ..utils.errors import DivergenceError, ProblemError
from ..utils.helpers import as_vector, is_diverged
from .problem import FederatedProblem

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e100


def sample_permutation(rng: np.random.Generator, n: int) -> Permutation:
    """Uniform permutation of the n local components (Fisher-Yates via numpy)."""
    if n < 1:
        raise ProblemError(f"n must be >= 1, got {n}")
    return Permutation(tuple(rng.permutation(n)))


def _check_step(x: np.ndarray, m: int, i: int, threshold: float):
    if is_diverged(x, threshold):
        raise DivergenceError(
            f"divergence detected on client {m + 1} at local step {i + 1}", client=m, step=i + 1
        )


def local_epoch_plain(problem: FederatedProblem, m: int, x0, perm: Permutation, gamma: float,
                      threshold: float = DIVERGENCE_THRESHOLD) -> np.ndarray:
    """
    n sequential component-gradient steps x^{i+1} = x^i - gamma grad f_{pi_i}(x^i).

    Raises:
        DivergenceError: an iterate becomes non-finite or exceeds threshold
    """
    if gamma <= 0:
        raise ProblemError(f"stepsize must be positive, got {gamma}")
    if len(perm) != problem.n:
        raise ProblemError(f"permutation has length {len(perm)}, client has {problem.n} components")
    x = as_vector(x0, problem.d, 'x0').copy()
    A = problem.features[m]
    y = problem.targets[m]
    lam = problem.lam

    for i, j in enumerate(perm):
        a = A[j]
        x = x - gamma * (a * (a @ x - y[j]) + lam * x)
        _check_step(x, m, i, threshold)
    return x


def vr_perturbations(problem: FederatedProblem, m: int, anchor, perm: Permutation) -> np.ndarray:
    """
    Linear perturbations a_i = -grad f_{pi_i}(y) + (1/n) grad F_m(y) in permutation order; they sum to zero.
    """
    anchor_grads = problem.component_grads(m, anchor)
    mean_grad = anchor_grads.sum(axis=0) / problem.n
    return mean_grad - anchor_grads[list(perm.order)]


def local_epoch_vr(problem: FederatedProblem, m: int, x0, anchor, perm: Permutation, gamma: float,
                   threshold: float = DIVERGENCE_THRESHOLD,
                   anchor_grads: Optional[np.ndarray] = None) -> np.ndarray:
    """
    n steps with the estimator g(x, y) = grad f_{pi_i}(x) - grad f_{pi_i}(y) + (1/n) grad F_m(y).

    The anchor gradients (and hence grad F_m(y)) are evaluated once per epoch.

    Raises:
        DivergenceError: an iterate becomes non-finite or exceeds threshold
    """
    if gamma <= 0:
        raise ProblemError(f"stepsize must be positive, got {gamma}")
    if len(perm) != problem.n:
        raise ProblemError(f"permutation has length {len(perm)}, client has {problem.n} components")
    x = as_vector(x0, problem.d, 'x0').copy()
    anchor = as_vector(anchor, problem.d, 'anchor')
    if anchor_grads is None:
        anchor_grads = problem.component_grads(m, anchor)
    mean_grad = anchor_grads.sum(axis=0) / problem.n
    A = problem.features[m]
    y = problem.targets[m]
    lam = problem.lam

    for i, j in enumerate(perm):
        a = A[j]
        component = a * (a @ x - y[j]) + lam * x
        x = x - gamma * (component - anchor_grads[j] + mean_grad)
        _check_step(x, m, i, threshold)
    return x
