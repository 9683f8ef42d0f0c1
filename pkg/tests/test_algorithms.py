"""
Tests for the federated outer loops.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.analysis import theory
from src.analysis.trace_stats import final_values, log_linear_fit, plateau_stats
from src.data.models import Algorithm, CompressorSpec, Permutation, RunConfig
from src.optim.algorithms import (
    FederatedSimulator, rng_substream, run_algorithm, run_fedcrr, run_fedcrr_vr, run_fedcrr_vr2,
)
from src.optim.shuffling import local_epoch_plain
from src.utils.errors import ConfigurationError

RANDK_2 = CompressorSpec('randk', k=2)


def _zero_based(one_based):
    return Permutation(tuple(i - 1 for i in one_based))


@pytest.fixture(scope='module')
def vr_lyapunov_runs(p1_problem):
    """FedCRR-VR with RandK(2) at valid parameters: the config and a (1000, 6) array of Psi_t."""
    gamma = 1.0 / (2.0 * p1_problem.smoothness_constants().L)
    omega = 4.0
    config = RunConfig(algorithm='FedCRR_VR', gamma=gamma, alpha=1.0 / (omega + 1.0),
                       eta=theory.eta_limit(p1_problem, gamma, omega), epochs=5,
                       compressor=RANDK_2, seed=0)
    assert all(check.satisfied for check in theory.relevant_checks(
        theory.validate_parameters(p1_problem, config), Algorithm.FED_CRR_VR))
    values = np.array([
        run_fedcrr_vr(p1_problem, replace(config, seed=seed), parallel=False).lyapunov_values
        for seed in range(1000)
    ])
    return config, values


class TestRngSubstream:
    """Test cases for keyed random streams."""

    def test_same_key_same_stream(self):
        """Identical (seed, t, m, purpose) reproduce the stream."""
        a = rng_substream(7, 3, 1, 'perm').integers(0, 2 ** 63, size=4)
        b = rng_substream(7, 3, 1, 'perm').integers(0, 2 ** 63, size=4)
        np.testing.assert_array_equal(a, b)

    def test_distinct_clients_differ(self):
        """Different client indices give different first outputs."""
        a = rng_substream(7, 0, 1, 'perm').integers(0, 2 ** 63)
        b = rng_substream(7, 0, 2, 'perm').integers(0, 2 ** 63)
        assert a != b

    def test_purposes_differ(self):
        """Permutation and compression streams are separate."""
        a = rng_substream(7, 0, 0, 'perm').random()
        b = rng_substream(7, 0, 0, 'comp').random()
        assert a != b

    def test_unknown_purpose(self):
        """Only perm and comp streams exist."""
        with pytest.raises(ValueError):
            rng_substream(0, 0, 0, 'noise')


class TestFedCRR:
    """Test cases for compressed federated random reshuffling."""

    def test_record_count_and_bits(self, p1_problem):
        """T epochs give T+1 records with cum_bits = t * M * uplink bits."""
        config = RunConfig(gamma=0.1, epochs=10, compressor=RANDK_2, seed=3)
        trace = run_fedcrr(p1_problem, config)
        assert len(trace.records) == 11
        assert not trace.terminated_early
        per_epoch = p1_problem.M * 2 * 96
        np.testing.assert_array_equal(trace.cum_bits, np.arange(11) * per_epoch)
        assert all(r.lyapunov is None for r in trace.records)
        assert np.all(trace.sq_dists >= 0)

    def test_first_epoch_on_two_component_problem(self, p0_problem):
        """Identity, gamma = 0.1: x_1 is the hand-evaluated local epoch in the drawn order."""
        config = RunConfig(algorithm='FedRR', shuffle='SO', gamma=0.1, epochs=1, seed=0)
        trace = run_fedcrr(p0_problem, config)
        expected = [0.09, 0.1] if trace.permutations[0][0] == (1, 2) else [0.1, 0.09]
        np.testing.assert_allclose(trace.final_x, expected, rtol=1e-14)

    def test_single_client_matches_plain_random_reshuffling(self, make_problem):
        """M = 1 with Identity follows the single-machine local epochs bit for bit."""
        problem = make_problem(seed=4, M=1, n=8, d=3)
        config = RunConfig(gamma=0.05, epochs=20, seed=11)
        trace = FederatedSimulator(problem, config, keep_iterates=True).run()
        for t in range(20):
            perm = _zero_based(trace.permutations[t][0])
            expected = local_epoch_plain(problem, 0, trace.iterates[t], perm, 0.05)
            np.testing.assert_array_equal(trace.iterates[t + 1], expected)

    def test_shuffle_once_reuses_permutations(self, p1_problem):
        """SO keeps every client's permutation fixed; RR redraws them."""
        so = run_fedcrr(p1_problem, RunConfig(shuffle='SO', gamma=0.1, epochs=5, seed=2))
        rr = run_fedcrr(p1_problem, RunConfig(shuffle='RR', gamma=0.1, epochs=5, seed=2))
        assert all(perms == so.permutations[0] for perms in so.permutations)
        assert any(perms != rr.permutations[0] for perms in rr.permutations[1:])
        assert rr.permutations[0] == so.permutations[0]

    def test_parallel_matches_serial(self, p1_problem):
        """Thread-pool client execution is bitwise identical to the serial loop."""
        config = RunConfig(algorithm='FedCRR_VR', gamma=0.1, alpha=0.2, eta=0.5, epochs=15,
                           compressor=RANDK_2, seed=9)
        serial = FederatedSimulator(p1_problem, config, parallel=False).run()
        parallel = FederatedSimulator(p1_problem, config, parallel=True, max_workers=4).run()
        np.testing.assert_array_equal(serial.sq_dists, parallel.sq_dists)
        np.testing.assert_array_equal(serial.lyapunov_values, parallel.lyapunov_values)
        np.testing.assert_array_equal(serial.final_x, parallel.final_x)

    def test_divergence_truncates_trace(self, p0_problem):
        """A stepsize far above 1/L stops the run with a reason instead of raising."""
        config = RunConfig(algorithm='FedRR', gamma=5.0, epochs=500, seed=0)
        trace = run_fedcrr(p0_problem, config)
        assert trace.terminated_early
        assert len(trace.records) < 501
        assert "divergence detected" in trace.termination_reason
        assert trace.termination_reason.startswith("epoch ")

    def test_wrong_runner_rejected(self, p1_problem):
        """run_fedcrr only accepts FedCRR and FedRR configurations."""
        with pytest.raises(ConfigurationError, match="algorithm"):
            run_fedcrr(p1_problem, RunConfig(algorithm='FedCRR_VR', gamma=0.1, epochs=1))

    def test_fedrr_requires_identity(self):
        """FedRR with a lossy compressor is a configuration error."""
        with pytest.raises(ConfigurationError, match="compressor.kind"):
            RunConfig(algorithm='FedRR', compressor=RANDK_2)

    def test_expected_distance_below_finite_horizon_bound(self, make_problem):
        """Over 1000 seeds, mean ||x_t - x*||^2 stays below the finite-T FedCRR bound at every epoch."""
        problem = make_problem(seed=31, M=4, n=3, d=2, lam=5.0)
        gamma = 0.5 / problem.smoothness_constants().L
        config = RunConfig(gamma=gamma, epochs=10, compressor=CompressorSpec('randk', k=1), seed=0)
        assert all(check.satisfied for check in theory.relevant_checks(
            theory.validate_parameters(problem, config), Algorithm.FED_CRR))

        sq_dists = np.array([
            run_fedcrr(problem, replace(config, seed=seed), parallel=False).sq_dists
            for seed in range(1000)
        ])
        means = sq_dists.mean(axis=0)
        ses = sq_dists.std(axis=0, ddof=1) / math.sqrt(len(sq_dists))
        for t in range(11):
            assert means[t] <= theory.theorem2_bound(problem, config, t) + 4 * ses[t]

    @pytest.mark.parametrize('epochs, seeds, last', [
        (200, 50, 50),
        pytest.param(400, 200, 100, marks=pytest.mark.slow),
    ])
    def test_plateau_under_compression(self, p1_problem, epochs, seeds, last):
        """RandK keeps FedCRR on a plateau inside the predicted neighborhood but above zero."""
        gamma = 1.0 / (2.0 * p1_problem.smoothness_constants().L)
        traces = [
            run_fedcrr(p1_problem, RunConfig(gamma=gamma, epochs=epochs, compressor=RANDK_2, seed=seed))
            for seed in range(seeds)
        ]
        stats = plateau_stats(traces, last=last)
        neighborhood = theory.theorem_neighborhoods(p1_problem, traces[0].config).thm2
        assert stats['mean'] <= neighborhood + 4 * stats['se']
        assert stats['mean'] >= 1e-3 * neighborhood


class TestShiftedMethods:
    """Test cases for FedCRR-VR and FedCRR-VR-2."""

    def test_full_step_identity_reduces_to_fedcrr(self, p1_problem):
        """alpha = eta = 1 with Identity reproduces FedCRR bit for bit over 50 epochs."""
        plain = run_fedcrr(p1_problem, RunConfig(gamma=0.2, epochs=50, seed=5))
        shifted = run_fedcrr_vr(
            p1_problem, RunConfig(algorithm='FedCRR_VR', gamma=0.2, alpha=1.0, eta=1.0, epochs=50, seed=5)
        )
        np.testing.assert_array_equal(plain.sq_dists, shifted.sq_dists)
        np.testing.assert_array_equal(plain.cum_bits, shifted.cum_bits)
        np.testing.assert_array_equal(plain.final_x, shifted.final_x)

    def test_identity_lyapunov_is_distance(self, p1_problem):
        """omega = 0 makes the Lyapunov value the squared distance."""
        trace = run_fedcrr_vr(
            p1_problem, RunConfig(algorithm='FedCRR_VR', gamma=0.2, alpha=0.5, eta=0.7, epochs=5, seed=1)
        )
        np.testing.assert_array_equal(trace.lyapunov_values, trace.sq_dists)

    def test_first_shift_update(self, p1_problem):
        """h_0 = 0, Identity, alpha = 0.5: the new shift is half the local result."""
        config = RunConfig(algorithm='FedCRR_VR', gamma=0.1, alpha=0.5, eta=1.0, epochs=1, seed=0)
        simulator = FederatedSimulator(p1_problem, config)
        x0 = np.zeros(p1_problem.d)
        perm = Permutation(tuple(range(p1_problem.n)))
        estimate, shift = simulator._client_round(0, 3, x0, np.zeros(p1_problem.d), perm)
        x_n = local_epoch_plain(p1_problem, 3, x0, perm, 0.1)
        np.testing.assert_array_equal(estimate, x_n)
        np.testing.assert_allclose(shift, 0.5 * x_n)

    def test_lyapunov_recorded(self, p1_problem):
        """Shifted methods log a Lyapunov value at every epoch, at least the squared distance."""
        config = RunConfig(algorithm='FedCRR_VR', gamma=0.1, alpha=0.2, eta=0.3, epochs=5,
                           compressor=RANDK_2, seed=4)
        trace = run_algorithm(p1_problem, config)
        values = trace.lyapunov_values
        assert not np.any(np.isnan(values))
        assert np.all(values >= trace.sq_dists)

    @pytest.mark.parametrize('epochs, seeds', [
        (200, 40),
        pytest.param(400, 200, marks=pytest.mark.slow),
    ])
    def test_shifts_beat_plain_compression(self, p1_problem, epochs, seeds):
        """Same compressor and bits: the shifted method ends far below FedCRR's plateau."""
        gamma = 1.0 / (2.0 * p1_problem.smoothness_constants().L)
        omega = 4.0
        eta = theory.eta_limit(p1_problem, gamma, omega)
        differences = []
        for seed in range(seeds):
            plain = run_fedcrr(p1_problem, RunConfig(gamma=gamma, epochs=epochs, compressor=RANDK_2, seed=seed))
            shifted = run_fedcrr_vr(p1_problem, RunConfig(
                algorithm='FedCRR_VR', gamma=gamma, alpha=1.0 / (omega + 1.0), eta=eta, epochs=epochs,
                compressor=RANDK_2, seed=seed,
            ))
            assert shifted.records[-1].cum_bits == plain.records[-1].cum_bits
            differences.append(final_values([shifted])[0] - final_values([plain])[0])
        differences = np.array(differences)
        upper = differences.mean() + 1.96 * differences.std(ddof=1) / math.sqrt(len(differences))
        assert upper < 0

    def test_vr2_fixed_point_on_identical_clients(self, homogeneous_problem):
        """Starting at x* with zero drift, FedCRR-VR-2 with Identity stays at x*."""
        x_star = homogeneous_problem.exact_solution()
        config = RunConfig(algorithm='FedCRR_VR2', gamma=0.01, alpha=1.0, eta=1.0, epochs=3,
                           x0=tuple(x_star), seed=0)
        trace = run_fedcrr_vr2(homogeneous_problem, config)
        assert np.all(trace.sq_dists <= 1e-26)

    def test_vr2_exact_convergence_without_drift(self, homogeneous_problem):
        """Identical clients and valid parameters: linear decay to 1e-12 within the predicted horizon."""
        problem = homogeneous_problem
        gamma = theory.theorem4_stepsize(problem)
        omega = 1.0
        base = RunConfig(algorithm='FedCRR_VR2', gamma=gamma, alpha=0.5,
                         eta=theory.eta_limit(problem, gamma, omega, half_epoch=True),
                         epochs=1, compressor=RANDK_2, seed=0)
        assert all(check.satisfied for check in theory.relevant_checks(
            theory.validate_parameters(problem, base), Algorithm.FED_CRR_VR2))

        factor, increment = theory.lyapunov_contraction(problem, base)
        assert increment <= 1e-20
        limits = theory.shuffled_limits(problem, gamma, theory.identity_permutations(problem))
        psi0 = theory.lyapunov(np.zeros(problem.d), np.zeros((problem.M, problem.d)), limits,
                               base.alpha, base.eta, omega, problem.M)
        horizon = math.ceil(1.5 * math.log(psi0 / 1e-12) / -math.log(factor))

        config = RunConfig(algorithm='FedCRR_VR2', gamma=gamma, alpha=base.alpha, eta=base.eta,
                           epochs=horizon, compressor=RANDK_2, seed=0)
        trace = run_fedcrr_vr2(problem, config)
        assert not trace.terminated_early
        assert trace.records[-1].sq_dist <= 1e-12

        sq_dists = trace.sq_dists
        start = int(np.argmax(sq_dists < 1e-6))
        below = np.flatnonzero(sq_dists < 1e-24)
        stop = int(below[0]) if below.size else len(sq_dists)
        assert stop - start >= 20
        assert log_linear_fit(sq_dists[start:stop])['r_squared'] >= 0.99

    def test_vr2_single_client_converges(self, make_problem):
        """One client has no drift, so FedCRR-VR-2 with Identity converges to x*."""
        problem = make_problem(seed=12, M=1, n=5, d=3, lam=20.0)
        gamma = theory.theorem4_stepsize(problem)
        trace = run_fedcrr_vr2(problem, RunConfig(algorithm='FedCRR_VR2', gamma=gamma, epochs=1000, seed=1))
        assert trace.records[-1].sq_dist <= 1e-20

    def test_lyapunov_one_step_contraction(self, p1_problem, vr_lyapunov_runs):
        """Averaged over seeds, Psi contracts by the predicted factor up to the neighborhood increment."""
        config, values = vr_lyapunov_runs
        factor, increment = theory.lyapunov_contraction(p1_problem, config)
        means = values.mean(axis=0)
        ses = values.std(axis=0, ddof=1) / math.sqrt(len(values))
        for t in range(5):
            assert means[t + 1] <= factor * means[t] + increment + 4 * ses[t + 1]

    def test_vr_lyapunov_below_finite_horizon_bound(self, p1_problem, vr_lyapunov_runs):
        """Mean Psi_t of FedCRR-VR over 1000 seeds stays below factor^t Psi_0 + neighborhood."""
        config, values = vr_lyapunov_runs
        means = values.mean(axis=0)
        psi0 = means[0]
        ses = values.std(axis=0, ddof=1) / math.sqrt(len(values))
        for t in range(6):
            assert means[t] <= theory.theorem3_bound(p1_problem, config, t, psi0) + 4 * ses[t]

    def test_vr2_lyapunov_below_finite_horizon_bound(self, homogeneous_problem):
        """Identical clients: mean Psi_t of FedCRR-VR-2 over 1000 seeds stays below factor^t Psi_0."""
        problem = homogeneous_problem
        gamma = theory.theorem4_stepsize(problem)
        config = RunConfig(algorithm='FedCRR_VR2', gamma=gamma, alpha=0.5,
                           eta=theory.eta_limit(problem, gamma, 1.0, half_epoch=True),
                           epochs=5, compressor=RANDK_2, seed=0)
        assert all(check.satisfied for check in theory.relevant_checks(
            theory.validate_parameters(problem, config), Algorithm.FED_CRR_VR2))

        values = np.array([
            run_fedcrr_vr2(problem, replace(config, seed=seed), parallel=False).lyapunov_values
            for seed in range(1000)
        ])
        means = values.mean(axis=0)
        psi0 = means[0]
        ses = values.std(axis=0, ddof=1) / math.sqrt(len(values))
        for t in range(6):
            assert means[t] <= theory.theorem4_bound(problem, config, t, psi0) + 4 * ses[t]


if __name__ == "__main__":
    pytest.main([__file__])
