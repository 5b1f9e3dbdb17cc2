"""Shared builders for the systems the tests exercise repeatedly."""

import numpy as np
import pytest

from idlab import ControlledMarkovChain, LinearClosedLoopSystem, RationalFilter


def rf(num, den=(1.0,)) -> RationalFilter:
    return RationalFilter.from_coeffs(num, den)


def open_loop_arx_system(sigma_e=0.1, sigma_r=1.0) -> LinearClosedLoopSystem:
    """y_t = 0.5 y_{t-1} + 1.0 u_{t-1} + e_t with white-noise input."""
    return LinearClosedLoopSystem(
        G=rf([0.0, 1.0], [1.0, -0.5]),
        H=rf([1.0], [1.0, -0.5]),
        K=rf([0.0]),
        sigma_e=sigma_e,
        sigma_r=sigma_r,
    )


def closed_loop_bias_system() -> LinearClosedLoopSystem:
    """Same plant, colored noise, pure proportional feedback u_t = -0.4 y_t."""
    return LinearClosedLoopSystem(
        G=rf([0.0, 1.0], [1.0, -0.5]),
        H=rf([1.0, 0.7], [1.0, -0.5]),
        K=rf([0.4]),
        sigma_e=0.1,
        sigma_r=0.0,
    )


def ar1_system(pole=0.5, sigma_e=1.0, sigma_r=1.0) -> LinearClosedLoopSystem:
    """Pure AR(1) output y_t = pole * y_{t-1} + e_t; input is white noise."""
    return LinearClosedLoopSystem(
        G=rf([0.0]),
        H=rf([1.0], [1.0, -pole]),
        K=rf([0.0]),
        sigma_e=sigma_e,
        sigma_r=sigma_r,
    )


def white_system(sigma_e=1.0, sigma_r=1.0) -> LinearClosedLoopSystem:
    """Degenerate loop: y_t = e_t, u_t = r_t."""
    return LinearClosedLoopSystem(
        G=rf([0.0]), H=rf([1.0]), K=rf([0.0]), sigma_e=sigma_e, sigma_r=sigma_r
    )


TRANSITIONS_3x2 = np.array(
    [
        [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]],
        [[0.25, 0.5, 0.25], [0.3, 0.3, 0.4]],
        [[0.2, 0.3, 0.5], [0.5, 0.25, 0.25]],
    ]
)
POLICY_3x2 = np.array([[0.6, 0.4], [0.5, 0.5], [0.3, 0.7]])


def ergodic_chain_3x2() -> ControlledMarkovChain:
    return ControlledMarkovChain(P=TRANSITIONS_3x2, pi=POLICY_3x2)


def support_gap_chain_3x2() -> ControlledMarkovChain:
    """Policy never plays action 1 in state 0, so the pair (0, 1) is unreachable."""
    pi = POLICY_3x2.copy()
    pi[0] = [1.0, 0.0]
    return ControlledMarkovChain(P=TRANSITIONS_3x2, pi=pi)


def two_state_chain() -> ControlledMarkovChain:
    """Single action, rows (0.9, 0.1) and (0.5, 0.5); stationary (5/6, 1/6)."""
    P = np.array([[[0.9, 0.1]], [[0.5, 0.5]]])
    pi = np.array([[1.0], [1.0]])
    return ControlledMarkovChain(P=P, pi=pi)
