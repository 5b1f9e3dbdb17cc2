"""Estimators: closed-form least squares, counting, projected gradient, grid."""

import numpy as np
import pytest

from idlab import (
    ArxStructure,
    GaussianPredictorModel,
    GradientOptions,
    NotPersistentlyExcitingError,
    ParameterVector,
    Trajectory,
    arx_gradient,
    avg_loglik,
    finite_difference_gradient,
    fit_arx_least_squares,
    fit_projected_gradient,
    fit_tabular,
    grid_maximize,
    make_rng,
    simulate_cmc,
    simulate_linear_closed_loop,
)
from conftest import ar1_system, ergodic_chain_3x2, open_loop_arx_system, support_gap_chain_3x2

BOX_AB = np.array([[0.0, 1.0], [0.5, 1.5]])


def noise_free_arx_traj(T=100, seed=1):
    rng = make_rng(seed, 0)
    u = rng.standard_normal(T)
    y = np.zeros(T)
    for t in range(1, T):
        y[t] = 0.5 * y[t - 1] + 1.0 * u[t - 1]
    return Trajectory(u=u, y=y)


class TestArxLeastSquares:
    def test_noise_free_exact_recovery(self):
        fit = fit_arx_least_squares(noise_free_arx_traj(), 1, 1, sigma=0.1, box=BOX_AB)
        assert np.max(np.abs(fit.theta_hat.values - [0.5, 1.0])) < 1e-9
        assert fit.converged
        assert fit.method == "arx_least_squares"

    def test_zero_input_singular_u_block(self):
        rng = make_rng(2, 0)
        y = np.zeros(500)
        e = rng.standard_normal(500)
        for t in range(1, 500):
            y[t] = 0.3 * y[t - 1] + e[t]
        traj = Trajectory(u=np.zeros(500), y=y)
        with pytest.raises(NotPersistentlyExcitingError, match="u-block"):
            fit_arx_least_squares(traj, 1, 1, sigma=1.0, box=BOX_AB)

    def test_consistency_at_long_horizon(self):
        traj = simulate_linear_closed_loop(
            open_loop_arx_system(), 200_000, make_rng(3, 0), burn_in=1000
        )
        fit = fit_arx_least_squares(traj, 1, 1, sigma=0.1, box=BOX_AB)
        assert np.max(np.abs(fit.theta_hat.values - [0.5, 1.0])) < 0.01
        # Independent route: coarse grid around the truth agrees.
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=0.1)
        grid = [
            ParameterVector([a, b], BOX_AB)
            for a in np.linspace(0.4, 0.6, 21)
            for b in np.linspace(0.9, 1.1, 21)
        ]
        oracle = grid_maximize(model, traj, grid)
        assert np.max(np.abs(oracle.theta_hat.values - fit.theta_hat.values)) <= 0.01

    def test_objective_value_consistent_with_avg_loglik(self):
        traj = noise_free_arx_traj(T=200)
        fit = fit_arx_least_squares(traj, 1, 1, sigma=0.1, box=BOX_AB)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=0.1)
        assert fit.objective_value == pytest.approx(
            avg_loglik(model, fit.theta_hat, traj), abs=1e-10
        )

    def test_too_short_trajectory(self):
        traj = Trajectory(u=np.zeros(2), y=np.zeros(2))
        with pytest.raises(ValueError, match="too short"):
            fit_arx_least_squares(traj, 1, 1, sigma=1.0, box=BOX_AB)

    def test_box_fallback_to_projected_gradient(self):
        traj = simulate_linear_closed_loop(ar1_system(), 20_000, make_rng(4, 0), burn_in=100)
        box = np.array([[0.0, 0.3], [-0.5, 0.5]])  # excludes the LS optimum a = 0.5
        fit = fit_arx_least_squares(traj, 1, 1, sigma=1.0, box=box)
        assert fit.diagnostics["box_fallback"] == "projected_gradient"
        assert fit.theta_hat.values[0] == pytest.approx(0.3, abs=1e-8)


class TestFitTabular:
    def test_deterministic_orbit_concentrates_with_floor(self):
        y = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.int64)
        u = np.zeros(8, dtype=np.int64)
        fit = fit_tabular(Trajectory(u=u, y=y), 2, 1, floor=1e-6)
        Q = fit.fitted_model.Q
        assert Q[0, 0, 1] == pytest.approx(1.0 - 1e-6, abs=1e-12)
        assert Q[1, 0, 0] == pytest.approx(1.0 - 1e-6, abs=1e-12)

    def test_ergodic_chain_rows_converge(self):
        chain = ergodic_chain_3x2()
        traj = simulate_cmc(chain, 100_000, make_rng(5, 0), init=0)
        fit = fit_tabular(traj, 3, 2)
        tv = 0.5 * np.abs(fit.fitted_model.Q - chain.P).sum(axis=2)
        assert float(tv.max()) < 0.03
        assert fit.diagnostics["unvisited_phi"] == ()

    def test_unreachable_row_uniform_and_flagged(self):
        chain = support_gap_chain_3x2()
        traj = simulate_cmc(chain, 50_000, make_rng(6, 0), init=0)
        fit = fit_tabular(traj, 3, 2)
        assert fit.diagnostics["unvisited_phi"] == ((0, 1),)
        assert np.allclose(fit.fitted_model.Q[0, 1], 1.0 / 3.0)

    def test_rows_sum_to_one_and_respect_floor(self):
        chain = ergodic_chain_3x2()
        traj = simulate_cmc(chain, 2_000, make_rng(7, 0), init=1)
        fit = fit_tabular(traj, 3, 2, floor=1e-4)
        Q = fit.fitted_model.Q
        assert np.allclose(Q.sum(axis=2), 1.0, atol=1e-12)
        assert Q.min() >= 1e-4 - 1e-15

    def test_symbols_out_of_range_rejected(self):
        traj = Trajectory(u=np.array([0, 5]), y=np.array([0, 1]))
        with pytest.raises(ValueError, match="out of range"):
            fit_tabular(traj, 2, 2)


class TestProjectedGradient:
    def test_matches_least_squares_on_interior_optimum(self):
        traj = simulate_linear_closed_loop(
            open_loop_arx_system(), 50_000, make_rng(8, 0), burn_in=500
        )
        ls = fit_arx_least_squares(traj, 1, 1, sigma=0.1, box=BOX_AB)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=0.1)
        pg = fit_projected_gradient(model, traj, ParameterVector([0.2, 0.7], BOX_AB))
        assert np.max(np.abs(pg.theta_hat.values - ls.theta_hat.values)) < 1e-6
        assert pg.converged

    def test_boundary_optimum_lands_on_box_edge(self):
        traj = simulate_linear_closed_loop(ar1_system(), 20_000, make_rng(9, 0), burn_in=100)
        box = np.array([[0.0, 0.3], [-0.5, 0.5]])
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        pg = fit_projected_gradient(model, traj, ParameterVector([0.1, 0.0], box))
        assert pg.theta_hat.values[0] == pytest.approx(0.3, abs=1e-8)
        # Independent verification by grid sweep along the constrained box.
        grid = [
            ParameterVector([a, b], box)
            for a in np.linspace(0.0, 0.3, 31)
            for b in np.linspace(-0.1, 0.1, 11)
        ]
        oracle = grid_maximize(model, traj, grid)
        assert oracle.theta_hat.values[0] == pytest.approx(0.3, abs=1e-9)

    def test_already_optimal_start_converges_immediately(self):
        traj = noise_free_arx_traj(T=300)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=0.1)
        theta_star = fit_arx_least_squares(traj, 1, 1, sigma=0.1, box=BOX_AB).theta_hat
        pg = fit_projected_gradient(model, traj, theta_star)
        assert pg.converged
        assert pg.iterations <= 1
        assert np.array_equal(pg.theta_hat.values, theta_star.values)

    def test_objective_monotone_and_in_box(self):
        traj = simulate_linear_closed_loop(
            open_loop_arx_system(), 5_000, make_rng(10, 0), burn_in=100
        )
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=0.1)
        theta0 = ParameterVector([0.0, 0.5], BOX_AB)
        pg = fit_projected_gradient(model, traj, theta0, GradientOptions(max_iterations=50))
        assert pg.objective_value >= avg_loglik(model, theta0, traj)
        assert np.all(pg.theta_hat.values >= BOX_AB[:, 0])
        assert np.all(pg.theta_hat.values <= BOX_AB[:, 1])

    def test_non_finite_start_rejected(self):
        traj = Trajectory(u=np.zeros(10), y=np.full(10, 1e200))
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1e-3)
        with pytest.raises(ValueError, match="finite"):
            fit_projected_gradient(model, traj, ParameterVector([0.0, 0.0], BOX_AB))


class TestGridMaximize:
    def test_singleton(self):
        traj = noise_free_arx_traj(T=50)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        only = ParameterVector([0.1, 0.6], BOX_AB)
        res = grid_maximize(model, traj, [only])
        assert res.theta_hat is only

    def test_two_point_ordering(self):
        traj = noise_free_arx_traj(T=200)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        good = ParameterVector([0.5, 1.0], BOX_AB)
        bad = ParameterVector([0.0, 0.5], BOX_AB)
        res = grid_maximize(model, traj, [bad, good])
        assert res.theta_hat is good

    def test_ar1_grid_nearest_truth(self):
        traj = simulate_linear_closed_loop(ar1_system(), 100_000, make_rng(11, 0), burn_in=100)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        box = np.array([[0.0, 0.9], [-0.5, 0.5]])
        grid = [ParameterVector([a, 0.0], box) for a in np.linspace(0.0, 0.9, 41)]
        res = grid_maximize(model, traj, grid)
        assert res.theta_hat.values[0] == pytest.approx(0.5, abs=0.0226)  # one grid step
        ls = fit_arx_least_squares(traj, 1, 1, sigma=1.0, box=box)
        assert abs(ls.theta_hat.values[0] - res.theta_hat.values[0]) <= 0.0226

    def test_empty_grid_rejected(self):
        traj = noise_free_arx_traj(T=50)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        with pytest.raises(ValueError):
            grid_maximize(model, traj, [])

    def test_tie_indices_report_flat_directions(self):
        traj = noise_free_arx_traj(T=50)
        model = GaussianPredictorModel(ArxStructure(1, 1), sigma=1.0)
        p = ParameterVector([0.5, 1.0], BOX_AB)
        res = grid_maximize(model, traj, [p, p, ParameterVector([0.0, 0.5], BOX_AB)])
        assert res.diagnostics["tie_indices"] == (0, 1)


class TestGradients:
    def test_analytic_matches_central_differences(self):
        # Quadratic objective: central differences are exact up to rounding.
        rng = make_rng(12, 0)
        model = GaussianPredictorModel(ArxStructure(2, 2), sigma=0.5)
        box = np.array([[-2.0, 2.0]] * 4)
        for probe in range(100):
            sub = rng.substream(probe)
            traj = Trajectory(u=sub.standard_normal(400), y=sub.standard_normal(400))
            theta = sub.uniform(-1.0, 1.0, 4)
            ga = arx_gradient(model, theta, traj)
            gf = finite_difference_gradient(model, theta, traj, h=1e-5)
            rel = np.linalg.norm(ga - gf) / max(1.0, np.linalg.norm(ga))
            assert rel < 1e-6

    def test_argmax_invariant_to_sigma_rescaling(self):
        traj = simulate_linear_closed_loop(
            open_loop_arx_system(), 30_000, make_rng(13, 0), burn_in=500
        )
        thetas = []
        for sigma in (0.1, 1.0, 10.0):
            fit = fit_arx_least_squares(traj, 1, 1, sigma=sigma, box=BOX_AB)
            thetas.append(fit.theta_hat.values)
        assert np.array_equal(thetas[0], thetas[1])
        assert np.array_equal(thetas[1], thetas[2])
