"""
Federated outer loops: FedCRR/FedCSO, FedCRR-VR and FedCRR-VR-2, plus the uncompressed FedRR baseline.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from ..analysis import theory
from ..data.models import (
    Algorithm, EpochRecord, Permutation, RunConfig, ShuffleMode, Trace,
)
from ..utils.config import Config
from ..utils.errors import ConfigurationError, DivergenceError
from ..utils.helpers import is_diverged, sq_norm
from .compressors import make_compressor
from .problem import FederatedProblem
from .shuffling import local_epoch_plain, local_epoch_vr, sample_permutation

logger = logging.getLogger(__name__)

PURPOSES = {'perm': 0, 'comp': 1}


def rng_substream(seed: int, t: int, m: int, purpose: str) -> np.random.Generator:
    """
    Independent generator keyed by (seed, epoch, client, purpose).

    Streams never depend on the order in which clients are scheduled.
    """
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose '{purpose}'")
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(t), int(m), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(sequence))


class FederatedSimulator:
    """Runs one configuration of a federated method on a problem and records a Trace."""

    def __init__(self, problem: FederatedProblem, config: RunConfig, parallel: Optional[bool] = None,
                 max_workers: Optional[int] = None, keep_iterates: bool = False):
        self.problem = problem
        self.config = config
        self.settings = Config().simulation_config
        self.parallel = self.settings.get('parallel_clients', False) if parallel is None else parallel
        self.max_workers = max_workers or self.settings.get('max_workers', 4)
        self.threshold = float(self.settings.get('divergence_threshold', 1e100))
        self.keep_iterates = keep_iterates

        self.compressor = make_compressor(config.compressor, problem.d)
        self.omega = self.compressor.omega()
        self.x_star = problem.exact_solution()
        self.f_star = problem.objective(self.x_star)
        self.bits_per_epoch = problem.M * self.compressor.uplink_bits()

    def _epoch_permutations(self, t: int) -> List[Permutation]:
        epoch = 0 if self.config.shuffle == ShuffleMode.SO else t
        return [
            sample_permutation(rng_substream(self.config.seed, epoch, m, 'perm'), self.problem.n)
            for m in range(self.problem.M)
        ]

    def _record(self, t: int, x: np.ndarray, shifts: Optional[List[np.ndarray]],
                perms: List[Permutation]) -> EpochRecord:
        lyapunov = None
        if shifts is not None:
            limits = theory.shuffled_limits(self.problem, self.config.gamma, perms)
            lyapunov = theory.lyapunov(
                x, shifts, limits, self.config.alpha, self.config.eta, self.omega, self.problem.M,
                x_star=self.x_star,
            )
        return EpochRecord(
            t=t,
            sq_dist=sq_norm(x - self.x_star),
            f_gap=self.problem.objective(x) - self.f_star,
            cum_bits=t * self.bits_per_epoch,
            lyapunov=lyapunov,
        )

    def _local_epoch(self, m: int, x_t: np.ndarray, perm: Permutation) -> np.ndarray:
        if self.config.algorithm == Algorithm.FED_CRR_VR2:
            return local_epoch_vr(self.problem, m, x_t, x_t, perm, self.config.gamma, self.threshold)
        return local_epoch_plain(self.problem, m, x_t, perm, self.config.gamma, self.threshold)

    def _client_round(self, t: int, m: int, x_t: np.ndarray, shift: Optional[np.ndarray],
                      perm: Permutation) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Local epoch plus compressed upload. Returns (server-side estimate, updated shift).

        Plain: estimate = C(x^n). Shifted: q = C(x^n - h), estimate = q + h, h' = h + alpha q.
        """
        x_n = self._local_epoch(m, x_t, perm)
        rng = rng_substream(self.config.seed, t, m, 'comp')
        if shift is None:
            return self.compressor.compress(x_n, rng), None

        q = self.compressor.compress(x_n - shift, rng)
        # lossless channel: q + h reconstructs x^n exactly
        estimate = x_n if self.compressor.lossless else q + shift
        return estimate, shift + self.config.alpha * q

    def _run_clients(self, t, x_t, shifts, perms, executor):
        def work(m):
            shift = None if shifts is None else shifts[m]
            try:
                return self._client_round(t, m, x_t, shift, perms[m])
            except DivergenceError as e:
                e.epoch = t
                raise

        if executor is None:
            return [work(m) for m in range(self.problem.M)]
        return list(executor.map(work, range(self.problem.M)))

    @staticmethod
    def _average(vectors: List[np.ndarray]) -> np.ndarray:
        # ordered reduction in client-index order
        return sum(vectors) / float(len(vectors))

    def run(self) -> Trace:
        """Execute config.epochs epochs; divergence truncates the trace instead of raising."""
        config = self.config
        problem = self.problem
        uses_shifts = config.algorithm.uses_shifts
        trace = Trace(config=config, iterates=[] if self.keep_iterates else None)

        x = config.initial_point(problem.d)
        shifts = [np.zeros(problem.d) for _ in range(problem.M)] if uses_shifts else None
        so_perms = self._epoch_permutations(0) if config.shuffle == ShuffleMode.SO else None

        logger.info(
            f"Running {config.algorithm.value}/{config.shuffle.value} on {problem!r}: "
            f"gamma={config.gamma:g}, compressor={config.compressor.label()}, "
            f"T={config.epochs}, seed={config.seed}"
        )

        executor = ThreadPoolExecutor(max_workers=self.max_workers) if self.parallel else None
        try:
            for t in range(config.epochs):
                perms = so_perms or self._epoch_permutations(t)
                trace.records.append(self._record(t, x, shifts, perms))
                trace.permutations.append([p.one_based() for p in perms])
                if self.keep_iterates:
                    trace.iterates.append(x.copy())

                try:
                    results = self._run_clients(t, x, shifts, perms, executor)
                except DivergenceError as e:
                    trace.terminated_early = True
                    trace.termination_reason = f"epoch {t + 1}: {e}"
                    logger.warning(f"Run stopped early - {trace.termination_reason}")
                    break

                estimates = [estimate for estimate, _ in results]
                if uses_shifts:
                    x = (1.0 - config.eta) * x + config.eta * self._average(estimates)
                    shifts = [shift for _, shift in results]
                else:
                    x = self._average(estimates)

                if is_diverged(x, self.threshold):
                    trace.terminated_early = True
                    trace.termination_reason = f"epoch {t + 1}: divergence detected in server aggregate"
                    logger.warning(f"Run stopped early - {trace.termination_reason}")
                    break
            else:
                perms = so_perms or self._epoch_permutations(config.epochs)
                trace.records.append(self._record(config.epochs, x, shifts, perms))
                if self.keep_iterates:
                    trace.iterates.append(x.copy())
        finally:
            if executor is not None:
                executor.shutdown()

        trace.final_x = x
        last = trace.records[-1]
        logger.info(
            f"Finished {config.algorithm.value} after {len(trace.records) - 1} epochs: "
            f"sq_dist={last.sq_dist:.3e}, cum_bits={last.cum_bits}"
        )
        return trace


def _check_algorithm(config: RunConfig, allowed: Tuple[Algorithm, ...]):
    if config.algorithm not in allowed:
        names = ', '.join(a.value for a in allowed)
        raise ConfigurationError(f"expected one of {names}, got {config.algorithm.value}", 'algorithm')


def run_fedcrr(problem: FederatedProblem, config: RunConfig, **kwargs) -> Trace:
    """Compressed local RR/SO iterates averaged by the server."""
    _check_algorithm(config, (Algorithm.FED_CRR, Algorithm.FED_RR))
    return FederatedSimulator(problem, config, **kwargs).run()


def run_fedcrr_vr(problem: FederatedProblem, config: RunConfig, **kwargs) -> Trace:
    """Compressed differences to learned shifts, damped server step."""
    _check_algorithm(config, (Algorithm.FED_CRR_VR,))
    return FederatedSimulator(problem, config, **kwargs).run()


def run_fedcrr_vr2(problem: FederatedProblem, config: RunConfig, **kwargs) -> Trace:
    """Shifted compression with the anchored variance-reduced local estimator."""
    _check_algorithm(config, (Algorithm.FED_CRR_VR2,))
    return FederatedSimulator(problem, config, **kwargs).run()


RUNNERS = {
    Algorithm.FED_CRR: run_fedcrr,
    Algorithm.FED_RR: run_fedcrr,
    Algorithm.FED_CRR_VR: run_fedcrr_vr,
    Algorithm.FED_CRR_VR2: run_fedcrr_vr2,
}


def run_algorithm(problem: FederatedProblem, config: RunConfig, **kwargs) -> Trace:
    return RUNNERS[config.algorithm](problem, config, **kwargs)
