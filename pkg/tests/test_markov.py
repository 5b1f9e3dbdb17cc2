"""Controlled Markov chains: simulation, stationary analysis, support checks."""

import numpy as np
import pytest

from idlab import (
    ControlledMarkovChain,
    NonErgodicChainError,
    RegressorDistribution,
    make_rng,
    phi_index,
    simulate_cmc,
    stationary_distribution,
    support_check,
)
from conftest import ergodic_chain_3x2, support_gap_chain_3x2, two_state_chain


def deterministic_cycle_chain():
    """Two states, one action, deterministic swap: periodic."""
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    pi = np.array([[1.0], [1.0]])
    return ControlledMarkovChain(P=P, pi=pi)


def disconnected_chain():
    P = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
    pi = np.array([[1.0], [1.0]])
    return ControlledMarkovChain(P=P, pi=pi)


class TestChainValidation:
    def test_row_sum_enforced(self):
        P = np.array([[[0.5, 0.4]], [[0.5, 0.5]]])
        with pytest.raises(ValueError, match=r"P\[0, 0"):
            ControlledMarkovChain(P=P, pi=np.array([[1.0], [1.0]]))

    def test_policy_row_sum_enforced(self):
        with pytest.raises(ValueError, match=r"pi\[0"):
            ControlledMarkovChain(
                P=np.array([[[1.0, 0.0]], [[0.0, 1.0]]]), pi=np.array([[0.9], [1.0]])
            )


class TestSimulate:
    def test_deterministic_orbit(self):
        chain = deterministic_cycle_chain()
        traj = simulate_cmc(chain, 6, make_rng(0, 0), init=0)
        assert traj.y.tolist() == [0, 1, 0, 1, 0, 1]
        assert traj.u.tolist() == [0] * 6

    def test_symmetric_chain_state_frequency(self):
        P = np.full((2, 2, 2), 0.5)
        pi = np.full((2, 2), 0.5)
        chain = ControlledMarkovChain(P=P, pi=pi)
        traj = simulate_cmc(chain, 100_000, make_rng(1, 0), init=0)
        freq0 = float(np.mean(traj.y == 0))
        assert freq0 == pytest.approx(0.5, abs=0.01)

    def test_symbols_always_in_range(self):
        chain = ergodic_chain_3x2()
        traj = simulate_cmc(chain, 5000, make_rng(2, 0), init=2)
        assert traj.y.min() >= 0 and traj.y.max() < 3
        assert traj.u.min() >= 0 and traj.u.max() < 2

    def test_stationary_init_on_reducible_chain_errors(self):
        with pytest.raises(NonErgodicChainError):
            simulate_cmc(disconnected_chain(), 10, make_rng(0, 0), init="stationary")

    def test_invalid_init_state(self):
        with pytest.raises(ValueError):
            simulate_cmc(ergodic_chain_3x2(), 10, make_rng(0, 0), init=7)


class TestStationaryDistribution:
    def test_uniform_chain_gives_uniform_pairs(self):
        P = np.full((2, 2, 2), 0.5)
        pi = np.full((2, 2), 0.5)
        dist = stationary_distribution(ControlledMarkovChain(P=P, pi=pi))
        assert np.allclose(dist.probs, 0.25, atol=1e-10)

    def test_two_state_hand_solution(self):
        # Left eigenvector of [[0.9, 0.1], [0.5, 0.5]]: solve by hand,
        # 0.1 p0 = 0.5 p1 -> p = (5/6, 1/6).
        dist = stationary_distribution(two_state_chain())
        assert dist.probs == pytest.approx([5 / 6, 1 / 6], abs=1e-10)

    def test_hand_solution_matches_simulation_frequencies(self):
        chain = two_state_chain()
        traj = simulate_cmc(chain, 1_000_000, make_rng(3, 0), init=0)
        freq0 = float(np.mean(traj.y == 0))
        assert freq0 == pytest.approx(5 / 6, abs=0.005)

    def test_disconnected_components_not_ergodic(self):
        with pytest.raises(NonErgodicChainError, match="reducible"):
            stationary_distribution(disconnected_chain())

    def test_periodic_chain_not_ergodic(self):
        with pytest.raises(NonErgodicChainError):
            stationary_distribution(deterministic_cycle_chain())

    def test_fixed_point_residual(self):
        chain = ergodic_chain_3x2()
        dist = stationary_distribution(chain)
        M = chain.pair_transition_matrix()
        residual = float(np.abs(dist.probs @ M - dist.probs).sum())
        assert residual < 1e-8

    def test_simulation_agreement_over_seeds(self):
        chain = ergodic_chain_3x2()
        dist = stationary_distribution(chain)
        l1s = []
        for seed in (1, 2, 3):
            traj = simulate_cmc(chain, 1_000_000, make_rng(seed, 0), init=0)
            counts = np.zeros(6)
            flat = traj.y.astype(np.int64) * 2 + traj.u.astype(np.int64)
            np.add.at(counts, flat, 1.0)
            l1s.append(float(np.abs(counts / counts.sum() - dist.probs).sum()))
        assert float(np.mean(l1s)) < 0.01

    def test_unreachable_pair_gets_zero_mass_without_error(self):
        dist = stationary_distribution(support_gap_chain_3x2())
        assert dist.as_matrix()[0, 1] == pytest.approx(0.0, abs=1e-12)


class TestSupportCheck:
    def test_uniform_distribution_full_support(self):
        dist = RegressorDistribution(np.full(4, 0.25), 2, 2)
        result = support_check(dist)
        assert result.full_support and result.zero_set == ()

    def test_structural_zero_named(self):
        result = support_check(stationary_distribution(support_gap_chain_3x2()))
        assert not result.full_support
        assert result.zero_set == ((0, 1),)

    def test_threshold_comparison(self):
        probs = np.array([0.5, 0.5 - 1e-9, 1e-9, 0.0])
        probs = probs / probs.sum()
        dist = RegressorDistribution(probs, 2, 2)
        result = support_check(dist, threshold=1e-8)
        assert not result.full_support
        assert (1, 0) in result.zero_set and (1, 1) in result.zero_set

    def test_phi_index_state_major(self):
        assert phi_index(0, 1, n_actions=2) == 1
        assert phi_index(2, 0, n_actions=2) == 4
