"""Controlled Markov chains on finite state spaces.

States play the role of outputs and actions the role of inputs:

    p(S_{1:T}, A_{1:T}) = prod_t p(S_t | S_{t-1}, A_{t-1}) p(A_t | S_t)

The pair chain ``Phi_t = (S_{t-1}, A_{t-1})`` is itself a Markov chain with
transition ``T[(s,a) -> (s',a')] = P[s,a,s'] * pi[s',a']``; its stationary
distribution is what the consistency condition (all pairs persistently
visited) is about.  Pairs are indexed state-major: ``phi = s * n_actions + a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from .core import RngStream, Trajectory

__all__ = [
    "ControlledMarkovChain",
    "RegressorDistribution",
    "NonErgodicChainError",
    "SupportCheckResult",
    "simulate_cmc",
    "stationary_distribution",
    "support_check",
    "phi_index",
]

_ROW_SUM_TOL = 1e-12


class NonErgodicChainError(RuntimeError):
    """Power iteration failed to contract to a unique fixed point."""


def phi_index(s: int, a: int, n_actions: int) -> int:
    """Flat state-major index of the pair ``(s, a)``."""
    return s * n_actions + a


@dataclass(frozen=True, eq=False)
class ControlledMarkovChain:
    """Transition tensor ``P[s, a, s']`` plus policy matrix ``pi[s, a]``."""

    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        pi = np.asarray(self.pi, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("P must have shape (n_states, n_actions, n_states)")
        if pi.shape != P.shape[:2]:
            raise ValueError("pi must have shape (n_states, n_actions)")
        if np.any(P < 0.0) or np.any(P > 1.0) or np.any(pi < 0.0) or np.any(pi > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        bad_p = np.abs(P.sum(axis=2) - 1.0) > _ROW_SUM_TOL
        if np.any(bad_p):
            s, a = np.argwhere(bad_p)[0]
            raise ValueError(f"P[{s}, {a}, :] sums to {P[s, a].sum()!r}, expected 1")
        bad_pi = np.abs(pi.sum(axis=1) - 1.0) > _ROW_SUM_TOL
        if np.any(bad_pi):
            s = int(np.argwhere(bad_pi)[0][0])
            raise ValueError(f"pi[{s}, :] sums to {pi[s].sum()!r}, expected 1")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def pair_transition_matrix(self) -> np.ndarray:
        """Transition matrix of the pair chain, ``(S*A) x (S*A)`` state-major."""
        S, A = self.n_states, self.n_actions
        # M[(s,a),(s',a')] = P[s,a,s'] * pi[s',a']
        M = np.einsum("ijk,kl->ijkl", self.P, self.pi)
        return M.reshape(S * A, S * A)


@dataclass(frozen=True, eq=False)
class RegressorDistribution:
    """Distribution over pairs ``(s, a)``, flattened state-major."""

    probs: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if probs.shape[0] != self.n_states * self.n_actions:
            raise ValueError("probs length must equal n_states * n_actions")
        if np.any(probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, expected 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def as_matrix(self) -> np.ndarray:
        return self.probs.reshape(self.n_states, self.n_actions)

    def state_marginal(self) -> np.ndarray:
        return self.as_matrix().sum(axis=1)


def stationary_distribution(
    chain: ControlledMarkovChain,
    tol: float = 1e-12,
    max_iterations: int = 100_000,
) -> RegressorDistribution:
    """Stationary distribution of the pair chain by power iteration.

    Ergodicity is decided operationally: iteration from two distinct starting
    vectors must each contract below ``tol`` (L1 step change) and agree on the
    fixed point; reducible or periodic chains fail one of the two and raise
    :class:`NonErgodicChainError` with the diagnostic residuals.
    """
    M = chain.pair_transition_matrix()
    n = M.shape[0]
    starts = [np.full(n, 1.0 / n)]
    skew = np.zeros(n)
    skew[0] = 1.0
    starts.append(skew)

    results = []
    residuals = []
    for v in starts:
        converged = False
        for _ in range(max_iterations):
            w = v @ M
            step = float(np.abs(w - v).sum())
            v = w
            if step < tol:
                converged = True
                break
        residuals.append(step)
        if not converged:
            raise NonErgodicChainError(
                f"power iteration did not converge within {max_iterations} iterations "
                f"(last L1 step {step:.3e}); the pair chain is not ergodic"
            )
        results.append(v / v.sum())

    disagreement = float(np.abs(results[0] - results[1]).sum())
    if disagreement > 1e-8:
        raise NonErgodicChainError(
            f"power iteration fixed points disagree (L1 distance {disagreement:.3e}); "
            "the pair chain is reducible"
        )
    return RegressorDistribution(results[0], chain.n_states, chain.n_actions)


def simulate_cmc(
    chain: ControlledMarkovChain,
    T: int,
    rng: RngStream,
    init: Union[int, str] = 0,
) -> Trajectory:
    """Sample ``T`` steps: actions into ``u``, states into ``y``.

    Per step: ``A_t | S_t`` from the policy, then ``S_{t+1} | (S_t, A_t)``
    from the transition tensor.  ``init`` is a start state index, or
    ``"stationary"`` to draw ``S_1`` from the stationary state marginal
    (requires the ergodicity check to pass).
    """
    if T < 1:
        raise ValueError("T must be positive")
    S, A = chain.n_states, chain.n_actions
    if init == "stationary":
        marginal = stationary_distribution(chain).state_marginal()
        s = int(np.searchsorted(np.cumsum(marginal), rng.uniform(), side="right"))
        s = min(s, S - 1)
    else:
        s = int(init)
        if not (0 <= s < S):
            raise ValueError(f"init state {s} outside [0, {S})")

    cum_pi = np.cumsum(chain.pi, axis=1).tolist()
    cum_P = np.cumsum(chain.P, axis=2).tolist()
    draws = rng.uniform(size=2 * T).tolist()

    states = [0] * T
    actions = [0] * T
    for t in range(T):
        states[t] = s
        u = draws[2 * t]
        row = cum_pi[s]
        a = A - 1
        for j in range(A - 1):
            if u <= row[j]:
                a = j
                break
        actions[t] = a
        u = draws[2 * t + 1]
        row = cum_P[s][a]
        nxt = S - 1
        for j in range(S - 1):
            if u <= row[j]:
                nxt = j
                break
        s = nxt

    return Trajectory(
        u=np.array(actions, dtype=np.int64),
        y=np.array(states, dtype=np.int64),
        t0=1,
    )


@dataclass(frozen=True)
class SupportCheckResult:
    full_support: bool
    zero_set: Tuple[Tuple[int, int], ...]
    threshold: float


def support_check(dist: RegressorDistribution, threshold: float = 0.0) -> SupportCheckResult:
    """List pairs with stationary mass at or below ``threshold``.

    ``full_support`` holds iff every pair has mass strictly above the
    threshold, the consistency condition for tabular ML fits.
    """
    if threshold < 0.0:
        raise ValueError("threshold must be nonnegative")
    mat = dist.as_matrix()
    zero = [
        (int(s), int(a))
        for s in range(dist.n_states)
        for a in range(dist.n_actions)
        if mat[s, a] <= threshold
    ]
    return SupportCheckResult(full_support=not zero, zero_set=tuple(zero), threshold=threshold)
