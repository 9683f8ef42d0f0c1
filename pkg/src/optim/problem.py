"""
Federated finite-sum ridge regression: component oracles, exact optimum and curvature constants.

Objective: f(x) = (1/M) sum_m g_m(x), g_m(x) = (1/n) sum_i f_{m,i}(x),
f_{m,i}(x) = 1/2 (a_{m,i}^T x - y_{m,i})^2 + (lambda/2) ||x||^2.
Client and component indices are 0-based.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence

import numpy as np

from ..utils.errors import ProblemError
from ..utils.helpers import as_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientData:
    """Local dataset of one client: features A^m (n x d) and targets y^m (n)."""
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        targets = np.array(self.targets, dtype=np.float64)
        if features.ndim != 2:
            raise ProblemError(f"features must be a matrix, got shape {features.shape}")
        if targets.shape != (features.shape[0],):
            raise ProblemError(
                f"targets shape {targets.shape} does not match {features.shape[0]} feature rows"
            )
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise ProblemError("client data contains non-finite values")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'targets', targets)

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SmoothnessConstants:
    """Curvature constants of the ridge problem."""
    L: float
    L_max: float
    mu: float
    kappa: float
    mu_literal: float
    mu_component: float

    def as_dict(self):
        return {
            'L': self.L,
            'L_max': self.L_max,
            'mu': self.mu,
            'kappa': self.kappa,
            'mu_literal': self.mu_literal,
            'mu_component': self.mu_component,
        }


class FederatedProblem:
    """M clients with n ridge components each; immutable after construction."""

    def __init__(self, clients: Sequence[ClientData], lam: float):
        if not clients:
            raise ProblemError("a federated problem needs at least one client")
        if lam < 0 or not np.isfinite(lam):
            raise ProblemError(f"regularization must be finite and >= 0, got {lam}")

        n, d = clients[0].features.shape
        for m, client in enumerate(clients):
            if client.features.shape != (n, d):
                raise ProblemError(
                    f"client {m} has shape {client.features.shape}, expected {(n, d)}"
                )
        if n < 1 or d < 1:
            raise ProblemError("clients need at least one row and one feature")

        self.clients: List[ClientData] = list(clients)
        self.lam = float(lam)
        self.M = len(clients)
        self.n = n
        self.d = d
        # (M, n, d) and (M, n) views used by the vectorized oracles
        self.features = np.stack([c.features for c in self.clients])
        self.targets = np.stack([c.targets for c in self.clients])
        self.features.setflags(write=False)
        self.targets.setflags(write=False)

    def __repr__(self):
        return f"FederatedProblem(M={self.M}, n={self.n}, d={self.d}, lambda={self.lam:g})"

    def _check_client(self, m: int):
        if not 0 <= m < self.M:
            raise ProblemError(f"client index {m} out of range [0, {self.M})")

    def _check_component(self, i: int):
        if not 0 <= i < self.n:
            raise ProblemError(f"component index {i} out of range [0, {self.n})")

    @property
    def stacked_features(self) -> np.ndarray:
        """Concatenated Mn x d data matrix A."""
        return self.features.reshape(self.M * self.n, self.d)

    @property
    def stacked_targets(self) -> np.ndarray:
        return self.targets.reshape(self.M * self.n)

    def component_loss(self, m: int, i: int, x) -> float:
        self._check_client(m)
        self._check_component(i)
        x = as_vector(x, self.d)
        residual = float(self.features[m, i] @ x) - self.targets[m, i]
        return 0.5 * residual ** 2 + 0.5 * self.lam * float(x @ x)

    def component_grad(self, m: int, i: int, x) -> np.ndarray:
        """
        Gradient of f_{m,i}: a (a^T x - y) + lambda x.

        Raises:
            ProblemError: index out of range or dimension mismatch
        """
        self._check_client(m)
        self._check_component(i)
        x = as_vector(x, self.d)
        a = self.features[m, i]
        return a * (float(a @ x) - self.targets[m, i]) + self.lam * x

    def component_grads(self, m: int, x) -> np.ndarray:
        """All n component gradients of client m at x, as an (n, d) array."""
        self._check_client(m)
        x = as_vector(x, self.d)
        A = self.features[m]
        residuals = A @ x - self.targets[m]
        return A * residuals[:, None] + self.lam * x

    def local_full_grad(self, m: int, x) -> np.ndarray:
        """Sum (not average) of the client's component gradients, the gradient of F_m."""
        return self.component_grads(m, x).sum(axis=0)

    def client_full_grads_at(self, x) -> np.ndarray:
        """(M, d) array whose row m is the gradient of F_m at x."""
        x = as_vector(x, self.d)
        residuals = np.einsum('mnd,d->mn', self.features, x) - self.targets
        data_part = np.einsum('mnd,mn->md', self.features, residuals)
        return data_part + self.n * self.lam * x

    def global_grad(self, x) -> np.ndarray:
        x = as_vector(x, self.d)
        A = self.stacked_features
        N = self.M * self.n
        return A.T @ (A @ x - self.stacked_targets) / N + self.lam * x

    def objective(self, x) -> float:
        x = as_vector(x, self.d)
        residuals = self.stacked_features @ x - self.stacked_targets
        return 0.5 * float(residuals @ residuals) / (self.M * self.n) + 0.5 * self.lam * float(x @ x)

    def bregman(self, m: int, i: int, x, y) -> float:
        """Exact Bregman divergence D_{f_{m,i}}(x, y) of a quadratic component."""
        self._check_client(m)
        self._check_component(i)
        delta = as_vector(x, self.d) - as_vector(y, self.d, 'y')
        projection = float(self.features[m, i] @ delta)
        return 0.5 * projection ** 2 + 0.5 * self.lam * float(delta @ delta)

    @cached_property
    def _gram_eigenvalues(self) -> np.ndarray:
        A = self.stacked_features
        return np.clip(np.linalg.eigvalsh(A.T @ A), 0.0, None)

    @cached_property
    def _solution(self) -> np.ndarray:
        A = self.stacked_features
        N = self.M * self.n
        eigenvalues = self._gram_eigenvalues
        if self.lam == 0.0 and eigenvalues[0] <= 1e-12 * max(eigenvalues[-1], 1.0):
            raise ProblemError("problem not strongly convex")
        hessian = A.T @ A / N + self.lam * np.eye(self.d)
        x_star = np.linalg.solve(hessian, A.T @ self.stacked_targets / N)
        x_star.setflags(write=False)
        logger.debug(f"Solved ridge normal equations for {self!r}")
        return x_star

    def exact_solution(self) -> np.ndarray:
        """
        Closed-form optimum of f: (A^T A/(Mn) + lambda I) x = A^T y/(Mn).

        Raises:
            ProblemError: "problem not strongly convex" when lambda = 0 and A^T A is singular
        """
        return self._solution

    def smoothness_constants(self) -> SmoothnessConstants:
        """
        Component smoothness L = L_max = max ||a||^2 + lambda and strong convexity
        mu = rho_min(A^T A)/(Mn) + lambda of f.
        """
        row_norms = np.einsum('ij,ij->i', self.stacked_features, self.stacked_features)
        L_max = float(row_norms.max()) + self.lam
        rho_min = float(self._gram_eigenvalues[0])
        mu = rho_min / (self.M * self.n) + self.lam
        # a rank-one component adds curvature only along a, so for d >= 2 its floor is lambda
        component_floor = float(row_norms.min()) if self.d == 1 else 0.0
        return SmoothnessConstants(
            L=L_max,
            L_max=L_max,
            mu=mu,
            kappa=L_max / mu if mu > 0 else float('inf'),
            mu_literal=rho_min / self.n + self.lam,
            mu_component=component_floor + self.lam,
        )

    def with_lambda(self, lam: float) -> 'FederatedProblem':
        """Same data under a different regularization weight."""
        return FederatedProblem(self.clients, lam)
