"""
Theorem-side quantities for the federated shuffling methods.

Scaling conventions: F_m is the SUM of a client's n components, the objective is
f = (1/(nM)) sum_m F_m, and mu is the strong-convexity constant of f.
"""

import math
import logging
from itertools import permutations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..data.models import (
    Algorithm, ConditionCheck, Neighborhoods, Permutation, RunConfig, ShuffledLimit, TheoryReport,
)
from ..optim.compressors import make_compressor
from ..optim.problem import FederatedProblem
from ..utils.config import Config
from ..utils.errors import ProblemError
from ..utils.helpers import as_vector, sq_norm

logger = logging.getLogger(__name__)

SCALING = {
    'F_m': 'sum over the n local components',
    'objective': 'f(x) = (1/(nM)) sum_m F_m(x)',
    'mu': 'rho_min(A^T A)/(Mn) + lambda (strong convexity of f)',
    'mu_literal': 'rho_min(A^T A)/n + lambda',
    'sigma_star_m': '(1/n) sum_j ||grad f_mj(x*) - (1/n) grad F_m(x*)||^2',
    'sigma_star': 'pooled view, (1/(Mn)) sum ||grad f_i(x*) - grad f(x*)||^2',
    'sigma_rad': 'lifted problem, max_i sum_m E[D_{f_{m,pi_i}}(x*^i_m, x*)] / gamma^2',
    'sigma_rad_single': 'pooled single-machine view over Mn components',
    'thm2_neighborhood': 'compression term plus (1 + 2 omega/M) times the stochastic term, L_max',
    'thm2_printed': 'compression term plus the stochastic term without the (1 + 2 omega/M) factor',
    'bits': 'uplink only, 64-bit values, 32-bit indices',
}


def _theory_settings(settings: Optional[dict] = None) -> dict:
    return settings if settings is not None else Config().theory_config


def _contraction_base(gamma: float, mu: float) -> float:
    return max(1.0 - gamma * mu, 0.0)


def identity_permutations(problem: FederatedProblem) -> List[Permutation]:
    return [Permutation(tuple(range(problem.n))) for _ in range(problem.M)]


def shuffled_limits(problem: FederatedProblem, gamma: float,
                    perms: Sequence[Permutation]) -> ShuffledLimit:
    """
    Limit points of one epoch started and evaluated at x*:
    x*^i_m = x* - gamma sum_{j<i} grad f_{m,pi_j}(x*).
    """
    if gamma <= 0:
        raise ProblemError(f"stepsize must be positive, got {gamma}")
    if len(perms) != problem.M:
        raise ProblemError(f"expected {problem.M} permutations, got {len(perms)}")

    x_star = problem.exact_solution()
    steps = np.empty((problem.M, problem.n + 1, problem.d))
    for m, perm in enumerate(perms):
        grads = problem.component_grads(m, x_star)[list(perm.order)]
        steps[m, 0] = x_star
        steps[m, 1:] = x_star - gamma * np.cumsum(grads, axis=0)
    return ShuffledLimit(client_points=steps[:, -1].copy(), step_points=steps)


def local_variance_at_opt(problem: FederatedProblem, m: int) -> float:
    """sigma_{m,*}^2: spread of client m's component gradients around their mean at x*."""
    grads = problem.component_grads(m, problem.exact_solution())
    centered = grads - grads.sum(axis=0) / problem.n
    return float(np.einsum('ij,ij->', centered, centered)) / problem.n


def variance_at_opt(problem: FederatedProblem) -> float:
    """sigma_*^2 of the pooled single-machine view with Mn components."""
    x_star = problem.exact_solution()
    grads = np.concatenate([problem.component_grads(m, x_star) for m in range(problem.M)])
    centered = grads - grads.mean(axis=0)
    return float(np.einsum('ij,ij->', centered, centered)) / grads.shape[0]


def client_grad_norms(problem: FederatedProblem) -> np.ndarray:
    """||grad F_m(x*)||^2 per client (client drift)."""
    grads = problem.client_full_grads_at(problem.exact_solution())
    return np.einsum('md,md->m', grads, grads)


def _expected_radius_terms(features: np.ndarray, grads: np.ndarray, lam: float,
                           limit: int) -> Optional[np.ndarray]:
    """
    E_pi[D_{f_{pi_i}}(x*^i, x*)] / gamma^2 for i = 0..n-1 by full enumeration.

    For quadratic components the Bregman divergence at x*^i - x* = -gamma p is
    gamma^2 (1/2 (a^T p)^2 + lambda/2 ||p||^2), so the ratio does not depend on gamma.
    """
    n = grads.shape[0]
    if math.factorial(n) > limit:
        return None
    totals = np.zeros(n)
    count = 0
    for order in permutations(range(n)):
        order = list(order)
        prefix = np.zeros_like(grads)
        prefix[1:] = np.cumsum(grads[order[:-1]], axis=0)
        projections = np.einsum('ij,ij->i', features[order], prefix)
        totals += 0.5 * projections ** 2 + 0.5 * lam * np.einsum('ij,ij->i', prefix, prefix)
        count += 1
    return totals / count


def shuffling_radius_exact(problem: FederatedProblem, gamma: float, mode: str = 'lifted',
                           limit: Optional[int] = None) -> Optional[float]:
    """
    Exact shuffling radius by enumerating every permutation.

    Args:
        problem: Federated ridge problem
        gamma: Stepsize (positive; the quadratic closed form makes the value gamma-free)
        mode: 'lifted' (per-client permutations, sum over clients) or 'single' (pooled Mn components)
        limit: Largest permutation count to enumerate; defaults to theory.enumeration_limit

    Returns:
        sigma_rad^2, 0.0 for single-component problems, or None when enumeration is too large
    """
    if gamma <= 0:
        raise ProblemError(f"stepsize must be positive, got {gamma}")
    if limit is None:
        limit = int(_theory_settings().get('enumeration_limit', 720))
    x_star = problem.exact_solution()

    if mode == 'single':
        if problem.M * problem.n == 1:
            return 0.0
        features = problem.stacked_features
        grads = np.concatenate([problem.component_grads(m, x_star) for m in range(problem.M)])
        terms = _expected_radius_terms(features, grads, problem.lam, limit)
        return None if terms is None else float(terms[1:].max())

    if mode != 'lifted':
        raise ValueError(f"unknown radius mode '{mode}'")
    if problem.n == 1:
        return 0.0
    total = np.zeros(problem.n)
    for m in range(problem.M):
        terms = _expected_radius_terms(
            problem.features[m], problem.component_grads(m, x_star), problem.lam, limit
        )
        if terms is None:
            return None
        total += terms
    return float(total[1:].max())


def shuffling_radius_bound(problem: FederatedProblem, mode: str = 'lifted') -> float:
    """
    Closed-form upper bound on the shuffling radius.

    lifted: L_max sum_m (||grad F_m(x*)||^2 + (n/4) sigma_{m,*}^2)
    single: (L_max/2) N (N ||grad f(x*)||^2 + sigma_*^2 / 2) with N = Mn
    """
    L_max = problem.smoothness_constants().L_max
    if mode == 'lifted':
        variances = np.array([local_variance_at_opt(problem, m) for m in range(problem.M)])
        return float(L_max * np.sum(client_grad_norms(problem) + problem.n / 4.0 * variances))
    if mode == 'single':
        N = problem.M * problem.n
        grad = problem.global_grad(problem.exact_solution())
        return 0.5 * L_max * N * (N * sq_norm(grad) + 0.5 * variance_at_opt(problem))
    raise ValueError(f"unknown radius mode '{mode}'")


def _drift_terms(problem: FederatedProblem) -> Tuple[np.ndarray, np.ndarray]:
    """(||grad F_m(x*)||^2, delta_m = ||grad F_m(x*)||^2 + (n/4) sigma_{m,*}^2) per client."""
    norms = client_grad_norms(problem)
    variances = np.array([local_variance_at_opt(problem, m) for m in range(problem.M)])
    return norms, norms + problem.n / 4.0 * variances


def _vr_rate(config: RunConfig, mu: float, exponent: float) -> float:
    """min(alpha, eta (1 - (1 - gamma mu)^exponent))."""
    q = _contraction_base(config.gamma, mu) ** exponent
    return min(config.alpha, config.eta * (1.0 - q))


def _vr_neighborhood(config: RunConfig, omega: float, M: int, smoothness: float,
                     rate: float, drift: float) -> float:
    if rate <= 0:
        return float('inf')
    weight = config.alpha + config.eta + 2.0 * config.eta ** 2 * omega / M
    return 2.0 * weight * config.gamma ** 3 * smoothness * drift / (M * rate)


def theorem_neighborhoods(problem: FederatedProblem, config: RunConfig) -> Neighborhoods:
    """Asymptotic error levels of the three convergence results under config."""
    constants = problem.smoothness_constants()
    omega = make_compressor(config.compressor, problem.d).omega()
    M, n, gamma, mu = problem.M, problem.n, config.gamma, constants.mu
    norms, deltas = _drift_terms(problem)

    limits = shuffled_limits(problem, gamma, identity_permutations(problem))
    limit_norms = np.einsum('md,md->m', limits.client_points, limits.client_points)
    compression = (2.0 * omega / M) * (1.0 / (gamma * mu)) * float(limit_norms.mean())
    stochastic_printed = (2.0 / mu) * gamma ** 2 * constants.L_max * float(deltas.mean())
    stochastic = (1.0 + 2.0 * omega / M) * stochastic_printed

    thm3 = _vr_neighborhood(config, omega, M, constants.L_max,
                            _vr_rate(config, mu, n), float(deltas.sum()))
    thm4 = _vr_neighborhood(config, omega, M, constants.L,
                            _vr_rate(config, mu, n / 2.0), float(norms.sum()))
    return Neighborhoods(
        thm2=compression + stochastic,
        thm2_printed=compression + stochastic_printed,
        thm2_compression=compression,
        thm2_stochastic=stochastic,
        thm3=thm3,
        thm4=thm4,
    )


def lyapunov(x_t, shifts: Sequence[np.ndarray], limits: ShuffledLimit, alpha: float, eta: float,
             omega: float, M: int, x_star: Optional[np.ndarray] = None) -> float:
    """
    Psi = ||x - x*||^2 + (4 eta^2 omega / (alpha M)) (1/M) sum_m ||h_m - x^n_{*,m}||^2.
    """
    if x_star is None:
        x_star = limits.step_points[0, 0]
    x_t = as_vector(x_t, len(x_star))
    value = sq_norm(x_t - x_star)
    if omega == 0:
        return value
    if len(shifts) != M or limits.client_points.shape[0] != M:
        raise ProblemError(f"expected {M} shifts and limit points")
    gaps = np.asarray(shifts) - limits.client_points
    shift_error = float(np.einsum('md,md->', gaps, gaps)) / M
    return value + 4.0 * eta ** 2 * omega / (alpha * M) * shift_error


def lyapunov_contraction(problem: FederatedProblem, config: RunConfig) -> Tuple[float, float]:
    """
    One-step recursion E Psi_{t+1} <= factor E Psi_t + increment for the shifted methods.

    FedCRR_VR2 uses the half-epoch exponent; the increment is neighborhood * rate / 2.
    """
    mu = problem.smoothness_constants().mu
    neighborhoods = theorem_neighborhoods(problem, config)
    if config.algorithm == Algorithm.FED_CRR_VR2:
        rate, neighborhood = _vr_rate(config, mu, problem.n / 2.0), neighborhoods.thm4
    else:
        rate, neighborhood = _vr_rate(config, mu, problem.n), neighborhoods.thm3
    return 1.0 - rate / 2.0, neighborhood * rate / 2.0


def theorem2_bound(problem: FederatedProblem, config: RunConfig, T: int, x0=None) -> float:
    """Finite-T bound on E||x_T - x*||^2 for FedCRR."""
    x_star = problem.exact_solution()
    x0 = config.initial_point(problem.d) if x0 is None else as_vector(x0, problem.d, 'x0')
    mu = problem.smoothness_constants().mu
    decay = _contraction_base(config.gamma, mu) ** (problem.n * T / 2.0)
    return decay * sq_norm(x0 - x_star) + theorem_neighborhoods(problem, config).thm2


def _vr_bound(problem: FederatedProblem, config: RunConfig, T: int, psi0: float,
              exponent: float, neighborhood: float) -> float:
    mu = problem.smoothness_constants().mu
    factor = 1.0 - _vr_rate(config, mu, exponent) / 2.0
    return factor ** T * psi0 + neighborhood


def theorem3_bound(problem: FederatedProblem, config: RunConfig, T: int, psi0: float) -> float:
    """Finite-T bound on E Psi_T for FedCRR-VR."""
    return _vr_bound(problem, config, T, psi0, problem.n, theorem_neighborhoods(problem, config).thm3)


def theorem4_bound(problem: FederatedProblem, config: RunConfig, T: int, psi0: float) -> float:
    """Finite-T bound on E Psi_T for FedCRR-VR-2."""
    return _vr_bound(problem, config, T, psi0, problem.n / 2.0,
                     theorem_neighborhoods(problem, config).thm4)


def epoch_contraction_bound(problem: FederatedProblem, gamma: float, x0,
                            sigma_rad_sq: Optional[float] = None, mu: Optional[float] = None) -> float:
    """
    One-epoch random reshuffling bound on a single client (M = 1):
    (1 - gamma mu)^n ||x0 - x*||^2 + 2 gamma^3 sigma_rad^2 sum_{j<n} (1 - gamma mu)^j.

    mu defaults to the per-component strong-convexity constant.
    """
    if problem.M != 1:
        raise ProblemError("the single-epoch bound applies to one client")
    if mu is None:
        mu = problem.smoothness_constants().mu_component
    if sigma_rad_sq is None:
        sigma_rad_sq = shuffling_radius_exact(problem, gamma)
        if sigma_rad_sq is None:
            sigma_rad_sq = shuffling_radius_bound(problem)
    base = _contraction_base(gamma, mu)
    x0 = as_vector(x0, problem.d, 'x0')
    geometric = sum(base ** j for j in range(problem.n))
    return base ** problem.n * sq_norm(x0 - problem.exact_solution()) + 2.0 * gamma ** 3 * sigma_rad_sq * geometric


def reformulated_variance(problem: FederatedProblem, y, m: Optional[int] = None) -> float:
    """
    Variance of the anchored estimator at the optimum:
    (1/n) sum_i ||grad f_i(x*) - grad f_i(y) + mean_grad(y) - mean_grad(x*)||^2,
    over client m's components, or over all Mn components when m is None.
    """
    y = as_vector(y, problem.d, 'y')
    x_star = problem.exact_solution()
    clients = range(problem.M) if m is None else [m]
    diffs = np.concatenate([
        problem.component_grads(c, x_star) - problem.component_grads(c, y) for c in clients
    ])
    centered = diffs - diffs.mean(axis=0)
    return float(np.einsum('ij,ij->', centered, centered)) / diffs.shape[0]


def theorem4_stepsize(problem: FederatedProblem) -> float:
    """Largest stepsize allowed for FedCRR-VR-2: (1/(8L)) sqrt(mu/(nL))."""
    constants = problem.smoothness_constants()
    return math.sqrt(constants.mu / (problem.n * constants.L)) / (8.0 * constants.L)


def eta_limit(problem: FederatedProblem, gamma: float, omega: float, half_epoch: bool = False) -> float:
    """min(1, (1 - q) M / (12 omega q)) with q = (1 - gamma mu)^n, or ^(n/2) for FedCRR-VR-2."""
    mu = problem.smoothness_constants().mu
    exponent = problem.n / 2.0 if half_epoch else problem.n
    q = _contraction_base(gamma, mu) ** exponent
    if omega == 0 or q == 0:
        return 1.0
    return min(1.0, (1.0 - q) * problem.M / (12.0 * omega * q))


def _check(name, theorem, description, lhs, rhs, satisfied=None) -> ConditionCheck:
    if satisfied is None:
        satisfied = lhs <= rhs
    return ConditionCheck(name, theorem, description, float(lhs), float(rhs), bool(satisfied))


def validate_parameters(problem: FederatedProblem, config: RunConfig,
                        settings: Optional[dict] = None) -> List[ConditionCheck]:
    """Evaluate every stepsize/compression condition as lhs <= rhs; nothing is enforced."""
    settings = _theory_settings(settings)
    constants = problem.smoothness_constants()
    omega = make_compressor(config.compressor, problem.d).omega()
    L, mu, n, M, gamma = constants.L, constants.mu, problem.n, problem.M, config.gamma
    base = _contraction_base(gamma, mu)
    q_half = base ** (n / 2.0)

    omega_limit = float('inf') if q_half == 0 else (M / 2.0) * (1.0 - q_half) / q_half
    delta_sq = float(settings.get('lemma4_delta_squared', 0.125))
    if base <= 0.0:
        big_data_threshold = 0.0
    elif base >= 1.0:
        big_data_threshold = float('inf')
    else:
        big_data_threshold = math.log(1.0 / (1.0 - delta_sq)) / math.log(1.0 / base)

    return [
        _check('thm2_stepsize', 'Theorem 2', 'gamma <= 1/L', gamma, 1.0 / L),
        _check('thm2_omega', 'Theorem 2', 'omega <= (M/2)(1-q)/q, q = (1-gamma mu)^(n/2)',
               omega, omega_limit),
        _check('thm3_stepsize', 'Theorem 3', 'gamma <= 1/L', gamma, 1.0 / L),
        _check('thm3_alpha', 'Theorem 3', 'alpha <= 1/(omega+1)', config.alpha, 1.0 / (omega + 1.0)),
        _check('thm3_eta', 'Theorem 3', 'eta <= min(1, (1-q)M/(12 omega q)), q = (1-gamma mu)^n',
               config.eta, eta_limit(problem, gamma, omega)),
        _check('thm4_stepsize', 'Theorem 4', 'gamma <= (1/(8L)) sqrt(mu/(nL))',
               gamma, theorem4_stepsize(problem)),
        _check('thm4_alpha', 'Theorem 4', 'alpha <= 1/(omega+1)', config.alpha, 1.0 / (omega + 1.0)),
        _check('thm4_eta', 'Theorem 4', 'eta <= min(1, (1-q)M/(12 omega q)), q = (1-gamma mu)^(n/2)',
               config.eta, eta_limit(problem, gamma, omega, half_epoch=True)),
        _check('thm4_balance', 'Theorem 4', '1/8 <= q(1-q), q = (1-gamma mu)^(n/2)',
               0.125, q_half * (1.0 - q_half)),
        _check('lemma4_big_data', 'Lemma 4', 'n > log(1/(1-delta^2)) / log(1/(1-gamma mu))',
               big_data_threshold, n, satisfied=n > big_data_threshold),
    ]


RELEVANT_THEOREMS = {
    Algorithm.FED_CRR: 'Theorem 2',
    Algorithm.FED_RR: 'Theorem 2',
    Algorithm.FED_CRR_VR: 'Theorem 3',
    Algorithm.FED_CRR_VR2: 'Theorem 4',
}


def relevant_checks(checks: Sequence[ConditionCheck], algorithm: Algorithm) -> List[ConditionCheck]:
    """Conditions of the convergence result that covers algorithm."""
    theorem = RELEVANT_THEOREMS[Algorithm(algorithm)]
    return [check for check in checks if check.theorem == theorem]


def communication_complexity(problem: FederatedProblem, config: RunConfig,
                             eps: Optional[float] = None) -> Dict[str, float]:
    """Order-of-magnitude epoch counts to reach accuracy eps; constants are not pinned down."""
    if eps is None:
        eps = float(_theory_settings().get('target_accuracy', 1e-6))
    constants = problem.smoothness_constants()
    kappa, mu, n = constants.kappa, constants.mu, problem.n
    omega = make_compressor(config.compressor, problem.d).omega()
    norms, _ = _drift_terms(problem)
    sigmas = np.sqrt([local_variance_at_opt(problem, m) for m in range(problem.M)])
    delta = float(np.mean(np.sqrt(norms) + math.sqrt(n) * sigmas))
    delta_prime = float(np.mean(np.sqrt(norms)))

    log_term = math.log(1.0 / eps)
    drift = math.sqrt(kappa) / (mu * math.sqrt(eps))

    def shift_term(r: float, exponent: float) -> float:
        q = max(1.0 - r, 0.0) ** exponent
        return float('inf') if q == 1.0 else (omega + 1.0) * q / (1.0 - q) ** 2

    return {
        'eps': eps,
        'delta': delta,
        'delta_prime': delta_prime,
        'fedcrr': (kappa + drift * delta) * log_term,
        'fedcrr_vr': (shift_term(1.0 / kappa, n) + drift * delta) * log_term,
        'fedcrr_vr2': (shift_term(1.0 / (kappa * math.sqrt(kappa * n)), n / 2.0)
                       + drift * delta_prime) * log_term,
    }


def build_theory_report(problem: FederatedProblem, config: RunConfig,
                        settings: Optional[dict] = None) -> TheoryReport:
    """Collect every theorem-side quantity for problem and config."""
    settings = _theory_settings(settings)
    limit = int(settings.get('enumeration_limit', 720))
    constants = problem.smoothness_constants()
    x_star = problem.exact_solution()

    logger.info(f"Building theory report for {problem!r}")
    sigma_rad_exact = shuffling_radius_exact(problem, config.gamma, 'lifted', limit)
    if sigma_rad_exact is None:
        logger.info(f"n = {problem.n} exceeds the enumeration limit; reporting the radius bound only")

    validity = validate_parameters(problem, config, settings)
    report = TheoryReport(
        x_star=[float(v) for v in x_star],
        constants=constants.as_dict(),
        omega=make_compressor(config.compressor, problem.d).omega(),
        sigma_star=variance_at_opt(problem),
        sigma_star_m=[local_variance_at_opt(problem, m) for m in range(problem.M)],
        grad_norms=[float(v) for v in client_grad_norms(problem)],
        sigma_rad_bound=shuffling_radius_bound(problem, 'lifted'),
        sigma_rad_bound_single=shuffling_radius_bound(problem, 'single'),
        sigma_rad_exact=sigma_rad_exact,
        neighborhoods=theorem_neighborhoods(problem, config),
        validity=validity,
        complexity=communication_complexity(problem, config, settings.get('target_accuracy', 1e-6)),
        scaling=dict(SCALING),
    )
    violated = [check.name for check in report.violated()]
    logger.info(f"Theory report ready: {len(violated)} of {len(validity)} conditions violated")
    return report


def generate_theory_report(report: TheoryReport, config: Optional[RunConfig] = None) -> str:
    """Human-readable summary of a TheoryReport."""
    c = report.constants
    lines = [
        "=" * 60,
        "THEORY REPORT",
        "=" * 60,
        "",
        "PROBLEM CONSTANTS:",
        f"  L = L_max:            {c['L']:.6g}",
        f"  mu:                   {c['mu']:.6g}",
        f"  kappa:                {c['kappa']:.6g}",
        f"  mu (component):       {c['mu_component']:.6g}",
        f"  omega:                {report.omega:.6g}",
        "",
        "VARIANCES AT THE OPTIMUM:",
        f"  sigma_*^2 (pooled):   {report.sigma_star:.6g}",
        f"  max sigma_m,*^2:      {max(report.sigma_star_m):.6g}",
        f"  max ||grad F_m||^2:   {max(report.grad_norms):.6g}",
        "",
        "SHUFFLING RADIUS:",
        f"  Bound (lifted):       {report.sigma_rad_bound:.6g}",
        f"  Bound (pooled):       {report.sigma_rad_bound_single:.6g}",
    ]
    if report.sigma_rad_exact is None:
        lines.append("  Exact:                n/a (too many permutations)")
    else:
        lines.append(f"  Exact:                {report.sigma_rad_exact:.6g}")

    nb = report.neighborhoods
    lines.extend([
        "",
        "NEIGHBORHOODS:",
        f"  FedCRR:               {nb.thm2:.6g} (as printed: {nb.thm2_printed:.6g})",
        f"    compression part:   {nb.thm2_compression:.6g}",
        f"  FedCRR-VR:            {nb.thm3:.6g}",
        f"  FedCRR-VR-2:          {nb.thm4:.6g}",
        "",
        "PARAMETER CONDITIONS:",
    ])
    checks = report.validity
    if config is not None:
        checks = relevant_checks(checks, config.algorithm) + [
            check for check in checks if check.theorem == 'Lemma 4'
        ]
    for check in checks:
        status = "ok" if check.satisfied else "VIOLATED"
        lines.append(f"  [{status:>8}] {check.theorem}: {check.description} "
                     f"({check.lhs:.4g} vs {check.rhs:.4g})")
    lines.append("")
    return "\n".join(lines)
