"""Shift polynomials, stability radii, and the closed-loop simulator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idlab import (
    LinearClosedLoopSystem,
    RationalFilter,
    ShiftPolynomial,
    UnstableSystemError,
    burn_in_length,
    closed_loop_stability_radius,
    make_rng,
    respond_to_noise,
    simulate_linear_closed_loop,
    stability_radius,
)
from conftest import ar1_system, open_loop_arx_system, rf, white_system


class TestShiftPolynomial:
    def test_strips_trailing_zeros(self):
        p = ShiftPolynomial([1.0, -0.5, 0.0, 0.0])
        assert p.degree == 1
        assert p.coeffs.tolist() == [1.0, -0.5]

    def test_zero_polynomial_kept_as_single_coefficient(self):
        assert ShiftPolynomial([0.0, 0.0]).coeffs.tolist() == [0.0]

    def test_multiplication_is_convolution(self):
        p = ShiftPolynomial([1.0, -0.5]) * ShiftPolynomial([1.0, 0.7])
        assert np.allclose(p.coeffs, [1.0, 0.2, -0.35])


class TestStabilityRadius:
    def test_first_order(self):
        assert stability_radius([1.0, -0.5]) == pytest.approx(0.5)

    def test_constant_has_no_roots(self):
        assert stability_radius([1.0]) == 0.0

    def test_quadratic_cross_checked_against_formula(self):
        # z^2 - 1.3 z + 0.4: quadratic-formula oracle.
        disc = math.sqrt(1.3**2 - 4 * 0.4)
        expected = max(abs((1.3 + disc) / 2), abs((1.3 - disc) / 2))
        assert stability_radius([1.0, -1.3, 0.4]) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.8)

    def test_zero_leading_coefficient_rejected(self):
        with pytest.raises(ValueError):
            stability_radius([0.0, 1.0])

    @given(
        st.floats(-0.9, 0.9),
        st.floats(-0.9, 0.9),
        st.floats(0.01, 100.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_invariant_under_coefficient_scaling(self, r1, r2, scale):
        # Repeated roots are defective for the companion matrix, where
        # eigenvalue perturbations scale like sqrt(machine eps); the
        # invariance tolerance must respect that conditioning.
        coeffs = np.convolve([1.0, -r1], [1.0, -r2])
        base = stability_radius(coeffs)
        scaled = stability_radius(scale * coeffs)
        assert scaled == pytest.approx(base, rel=1e-6, abs=1e-9)


class TestClosedLoopStabilityRadius:
    @pytest.mark.parametrize("a,b,k", [(0.9, 1.0, 0.3), (0.5, 2.0, 0.4), (-0.7, 1.0, 0.2)])
    def test_proportional_loop_matches_hand_derivation(self, a, b, k):
        # G = b q^-1 / (1 - a q^-1), K = k, H = 1: characteristic polynomial
        # (1 - a q^-1) + b k q^-1, radius |a - b k|.
        sys = LinearClosedLoopSystem(
            G=rf([0.0, b], [1.0, -a]), H=rf([1.0]), K=rf([k]), sigma_e=1.0
        )
        assert closed_loop_stability_radius(sys) == pytest.approx(abs(a - b * k), abs=1e-12)

    def test_open_loop_reduces_to_denominator_radii(self):
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 1.0], [1.0, -0.8]),
            H=rf([1.0], [1.0, -0.3]),
            K=rf([0.0]),
            sigma_e=1.0,
        )
        expected = max(stability_radius([1.0, -0.8]), stability_radius([1.0, -0.3]))
        assert closed_loop_stability_radius(sys) == pytest.approx(expected)

    def test_k_zero_special_case(self):
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 1.0], [1.0, -0.9]), H=rf([1.0]), K=rf([0.0]), sigma_e=1.0
        )
        assert closed_loop_stability_radius(sys) == pytest.approx(0.9)


class TestSystemValidation:
    def test_g_must_be_strictly_proper(self):
        with pytest.raises(ValueError, match="strictly proper"):
            LinearClosedLoopSystem(G=rf([1.0]), H=rf([1.0]), K=rf([0.0]), sigma_e=1.0)

    def test_h_must_be_monic(self):
        with pytest.raises(ValueError, match="monic"):
            LinearClosedLoopSystem(
                G=rf([0.0, 1.0]), H=rf([2.0], [1.0]), K=rf([0.0]), sigma_e=1.0
            )

    def test_h_must_be_minimum_phase(self):
        with pytest.raises(ValueError, match="minimum-phase"):
            LinearClosedLoopSystem(
                G=rf([0.0, 1.0]), H=rf([1.0, -1.5], [1.0]), K=rf([0.0]), sigma_e=1.0
            )

    def test_filter_denominator_constant_term_nonzero(self):
        with pytest.raises(ValueError, match="nonzero"):
            RationalFilter.from_coeffs([1.0], [0.0, 1.0])


class TestSimulate:
    def test_degenerate_loop_gives_white_signals(self):
        traj = simulate_linear_closed_loop(white_system(), 20_000, make_rng(1, 0))
        y = traj.y
        lag1 = np.dot(y[1:], y[:-1]) / (len(y) - 1)
        assert abs(lag1) < 4.0 / math.sqrt(len(y))
        assert np.std(traj.u) == pytest.approx(1.0, abs=0.05)

    def test_cross_covariance_matches_plant_gain(self):
        # y_t = 0.5 u_{t-1} + e_t: E[y_t u_{t-1}] = 0.5 sigma_r^2.
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 0.5]), H=rf([1.0]), K=rf([0.0]), sigma_e=0.1, sigma_r=1.0
        )
        traj = simulate_linear_closed_loop(sys, 100_000, make_rng(2, 0), burn_in=10)
        est = float(np.mean(traj.y[1:] * traj.u[:-1]))
        assert est == pytest.approx(0.5, abs=0.02)

    def test_unstable_loop_rejected(self):
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 1.0], [1.0, -1.1]), H=rf([1.0]), K=rf([0.0]), sigma_e=1.0
        )
        with pytest.raises(UnstableSystemError):
            simulate_linear_closed_loop(sys, 100, make_rng(0, 0))

    def test_output_length_and_finiteness(self):
        traj = simulate_linear_closed_loop(open_loop_arx_system(), 777, make_rng(3, 0), burn_in=50)
        assert len(traj.u) == len(traj.y) == 777
        assert np.all(np.isfinite(traj.u)) and np.all(np.isfinite(traj.y))
        assert traj.t0 == 51

    def test_y_depends_only_on_e_stream_without_feedback_or_reference(self):
        sys = ar1_system(sigma_r=0.0)
        shared_e = make_rng(11, 0)
        t1 = simulate_linear_closed_loop(
            sys, 500, make_rng(0, 0), e_rng=make_rng(11, 0), r_rng=make_rng(12, 0)
        )
        t2 = simulate_linear_closed_loop(
            sys, 500, make_rng(0, 0), e_rng=shared_e, r_rng=make_rng(13, 99)
        )
        assert np.array_equal(t1.y, t2.y)

    def test_recursion_matches_direct_convolution_oracle(self):
        # Independent oracle: expand y = G u + H e with u = r - K y by brute
        # force on the impulse responses of the closed-loop transfer functions.
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 1.0], [1.0, -0.5]),
            H=rf([1.0, 0.3], [1.0, -0.2]),
            K=rf([0.4], [1.0, 0.1]),
            sigma_e=1.0,
            sigma_r=1.0,
        )
        rng = make_rng(21, 0)
        T = 40
        e = rng.standard_normal(T)
        r = rng.standard_normal(T)
        u, y = respond_to_noise(sys, e, r)

        # Oracle: step-by-step solve of the loop equations with explicit
        # python floats and naive polynomial application.
        bg, ag = [0.0, 1.0], [1.0, -0.5]
        bh, ah = [1.0, 0.3], [1.0, -0.2]
        bk, ak = [0.4], [1.0, 0.1]

        def apply(b, a, x, out, t):
            acc = sum(b[i] * x[t - i] for i in range(len(b)) if t - i >= 0)
            acc -= sum(a[i] * out[t - i] for i in range(1, len(a)) if t - i >= 0)
            return acc / a[0]

        g_o, h_o, k_o, u_o, y_o = [], [], [], [], []
        for t in range(T):
            g_o.append(apply(bg, ag, u_o + [0.0], g_o + [0.0], t))
            h_o.append(apply(bh, ah, e, h_o + [0.0], t))
            y_o.append(g_o[t] + h_o[t])
            k_o.append(apply(bk, ak, y_o, k_o + [0.0], t))
            u_o.append(r[t] - k_o[t])
        assert np.allclose(u, u_o, atol=1e-12)
        assert np.allclose(y, y_o, atol=1e-12)


class TestBurnInLength:
    def test_fast_decay_hits_floor(self):
        sys = ar1_system(pole=0.5)
        assert burn_in_length(sys, 1e-8) == 100

    def test_slow_decay_formula(self):
        sys = ar1_system(pole=0.99)
        assert burn_in_length(sys, 1e-8) == 1833
        assert burn_in_length(sys, 1e-8) == math.ceil(math.log(1e-8) / math.log(0.99))

    def test_memoryless_floor(self):
        assert burn_in_length(white_system(), 1e-8) == 100

    def test_unstable_rejected(self):
        sys = LinearClosedLoopSystem(
            G=rf([0.0, 1.0], [1.0, -1.2]), H=rf([1.0]), K=rf([0.0]), sigma_e=1.0
        )
        with pytest.raises(UnstableSystemError):
            burn_in_length(sys)
