"""Parameterized conditional models and their log-likelihood evaluation.

Two families are shipped:

* :class:`GaussianPredictorModel` -- a one-step predictor ``yhat_t`` with
  fixed noise scale ``sigma``; the log-likelihood of ``y_t`` is the exact
  normal log-density of the prediction error ``eps_t = y_t - yhat_t``.
  Since ``sigma`` is fixed, maximizing the likelihood is the same as
  minimizing the mean squared prediction error.
* :class:`TabularMarkovModel` -- a floor-regularized transition table
  ``Q[s, a, s']`` for finite state/action spaces.

Each model supports a finite-memory evaluation: the likelihood of ``y_t``
computed as if only the last ``s`` observations existed (the predictor
recursion restarts with zero initial conditions at ``t - s`` and anything
earlier is zeroed).  The decay of the full-vs-truncated gap is the
forgetting property the convergence diagnostics measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.signal import lfilter

from .core import ParameterVector, Trajectory
from .linsys import RationalFilter, ShiftPolynomial, stability_radius

__all__ = [
    "ArxStructure",
    "ArmaxStructure",
    "GaussianPredictorModel",
    "TabularMarkovModel",
    "LogLikelihoodSeries",
    "NonMinimumPhaseError",
    "predictor_errors",
    "arx_lag_matrix",
    "loglik_at",
    "loglik_truncated_at",
    "avg_loglik",
    "loglik_series",
]


class NonMinimumPhaseError(ValueError):
    """The inverse noise filter of a predictor would be unstable."""


@dataclass(frozen=True)
class ArxStructure:
    """Linear regression predictor ``yhat_t = sum a_i y_{t-i} + sum b_j u_{t-j}``.

    ``theta = (a_1..a_{n_a}, b_1..b_{n_b})``; missing pre-sample lags are zero.
    """

    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 1:
            raise ValueError("ARX needs n_a >= 0 and n_b >= 1")

    @property
    def n_params(self) -> int:
        return self.n_a + self.n_b


@dataclass(frozen=True)
class ArmaxStructure:
    """Predictor induced by ``A(q) y = B(q) u + C(q) e``.

    ``A = 1 + a_1 q^-1 + ...``, ``B = b_1 q^-1 + ...`` (strictly proper),
    ``C = 1 + c_1 q^-1 + ...`` (monic); ``theta = (a..., b..., c...)``.
    The implied filters are ``G = B/A`` and ``H = C/A``, and the prediction
    error solves ``C(q) eps = A(q) y - B(q) u`` from zero initial conditions,
    which is stable iff the roots of ``C`` lie inside the unit circle
    (minimum-phase ``H``).
    """

    n_a: int
    n_b: int
    n_c: int

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 0 or self.n_c < 0:
            raise ValueError("ARMAX orders must be nonnegative")
        if self.n_a + self.n_b + self.n_c == 0:
            raise ValueError("ARMAX structure needs at least one parameter")

    @property
    def n_params(self) -> int:
        return self.n_a + self.n_b + self.n_c

    def polynomials(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if len(theta) != self.n_params:
            raise ValueError(f"theta has {len(theta)} entries, structure needs {self.n_params}")
        a = theta[: self.n_a]
        b = theta[self.n_a : self.n_a + self.n_b]
        c = theta[self.n_a + self.n_b :]
        A = np.concatenate(([1.0], a))
        B = np.concatenate(([0.0], b))
        C = np.concatenate(([1.0], c))
        return A, B, C

    def filters(self, theta) -> Tuple[RationalFilter, RationalFilter]:
        """The rational filters ``(G, H)`` at this parameter value."""
        A, B, C = self.polynomials(_theta_values(theta))
        return (
            RationalFilter(ShiftPolynomial(B), ShiftPolynomial(A)),
            RationalFilter(ShiftPolynomial(C), ShiftPolynomial(A)),
        )


Structure = Union[ArxStructure, ArmaxStructure]


@dataclass(frozen=True)
class GaussianPredictorModel:
    """Gaussian one-step-ahead model with fixed (never estimated) sigma."""

    structure: Structure
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")

    @property
    def n_params(self) -> int:
        return self.structure.n_params


@dataclass(frozen=True, eq=False)
class TabularMarkovModel:
    """Transition table ``Q[s, a, s']`` with a uniform probability floor.

    Every entry is at least ``floor``, which bounds ``log Q`` away from
    ``-inf`` and keeps the squared log-likelihood uniformly integrable.
    """

    Q: np.ndarray
    floor: float = 1e-6

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.ndim != 3 or Q.shape[0] != Q.shape[2]:
            raise ValueError("Q must have shape (n_states, n_actions, n_states)")
        if self.floor <= 0.0:
            raise ValueError("floor must be positive")
        if self.floor * Q.shape[0] > 1.0:
            raise ValueError("floor too large: n_states * floor must be <= 1")
        if np.any(Q < self.floor - 1e-15):
            raise ValueError("some Q entries fall below the floor")
        bad = np.abs(Q.sum(axis=2) - 1.0) > 1e-12
        if np.any(bad):
            s, a = np.argwhere(bad)[0]
            raise ValueError(f"Q[{s}, {a}, :] sums to {Q[s, a].sum()!r}, expected 1")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    @property
    def n_states(self) -> int:
        return self.Q.shape[0]

    @property
    def n_actions(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def from_row_weights(cls, weights, floor: float = 1e-6) -> "TabularMarkovModel":
        """Build a floored table from nonnegative row weights.

        Rows are ``floor + (1 - n_states*floor) * w / sum(w)``, which sums to
        one and respects the floor for any positive weight vector.
        """
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        totals = w.sum(axis=2, keepdims=True)
        if np.any(totals <= 0.0):
            raise ValueError("every (s, a) row needs positive total weight")
        k = w.shape[0]
        Q = floor + (1.0 - k * floor) * (w / totals)
        return cls(Q, floor)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, floor: float = 1e-6) -> "TabularMarkovModel":
        Q = np.full((n_states, n_actions, n_states), 1.0 / n_states)
        return cls(Q, floor)


Model = Union[GaussianPredictorModel, TabularMarkovModel]


@dataclass(frozen=True, eq=False)
class LogLikelihoodSeries:
    """Per-step log-likelihoods, optionally with a truncated companion series.

    ``values[t-1]`` is the full-history term at time ``t``; when ``s`` is
    set, ``truncated_values[i]`` is the ``s``-window term at time ``s+1+i``
    (the truncated series is defined only for ``t > s``).
    """

    values: np.ndarray
    truncated_s: Optional[int] = None
    truncated_values: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("log-likelihood entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if (self.truncated_s is None) != (self.truncated_values is None):
            raise ValueError("truncated_s and truncated_values must be given together")
        if self.truncated_values is not None:
            tv = np.asarray(self.truncated_values, dtype=np.float64)
            if self.truncated_s < 1:
                raise ValueError("truncated_s must be >= 1")
            if len(tv) != max(0, len(values) - self.truncated_s):
                raise ValueError("truncated series must cover exactly t = s+1 .. T")
            if not np.all(np.isfinite(tv)):
                raise ValueError("log-likelihood entries must be finite")
            tv.setflags(write=False)
            object.__setattr__(self, "truncated_values", tv)


def _theta_values(theta) -> np.ndarray:
    if theta is None:
        raise ValueError("this model requires a parameter vector")
    if isinstance(theta, ParameterVector):
        return theta.values
    return np.asarray(theta, dtype=np.float64).reshape(-1)


def _continuous_signals(traj: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    u = np.asarray(traj.u, dtype=np.float64).reshape(-1)
    y = np.asarray(traj.y, dtype=np.float64).reshape(-1)
    if len(u) != len(y):
        raise ValueError("trajectory u and y must have equal length")
    return u, y


def arx_lag_matrix(u: np.ndarray, y: np.ndarray, n_a: int, n_b: int) -> np.ndarray:
    """Regressor matrix with rows ``(y_{t-1}..y_{t-n_a}, u_{t-1}..u_{t-n_b})``.

    Lags reaching before the first sample are zero (zero initial conditions).
    """
    T = len(y)
    Phi = np.zeros((T, n_a + n_b))
    for i in range(1, n_a + 1):
        Phi[i:, i - 1] = y[:-i] if i < T else y[:0]
    for j in range(1, n_b + 1):
        if j < T:
            Phi[j:, n_a + j - 1] = u[:-j]
    return Phi


def predictor_errors(model: GaussianPredictorModel, theta, traj: Trajectory) -> np.ndarray:
    """Prediction errors ``eps_{1:T}`` from zero initial conditions.

    ARX: ``eps_t = y_t - theta . phi_t`` with the lag regressor ``phi_t``.
    ARMAX: solves ``C(q) eps = A(q) y - B(q) u`` recursively; raises
    :class:`NonMinimumPhaseError` when the roots of ``C`` leave the unit disc.
    """
    if not isinstance(model, GaussianPredictorModel):
        raise TypeError("predictor_errors applies to GaussianPredictorModel")
    th = _theta_values(theta)
    if len(th) != model.n_params:
        raise ValueError(f"theta has {len(th)} entries, model needs {model.n_params}")
    u, y = _continuous_signals(traj)
    st = model.structure
    if isinstance(st, ArxStructure):
        Phi = arx_lag_matrix(u, y, st.n_a, st.n_b)
        return y - Phi @ th
    A, B, C = st.polynomials(th)
    radius = stability_radius(ShiftPolynomial(C))
    if radius >= 1.0:
        raise NonMinimumPhaseError(
            f"H numerator has root radius {radius:.6g} >= 1; prediction-error recursion unstable"
        )
    v = lfilter(A, [1.0], y) - lfilter(B, [1.0], u)
    return lfilter([1.0], C, v)


def _gaussian_loglik(eps, sigma: float):
    return -math.log(math.sqrt(2.0 * math.pi) * sigma) - np.square(eps) / (2.0 * sigma**2)


def _tabular_steps(model: TabularMarkovModel, traj: Trajectory) -> np.ndarray:
    """log Q[s_{t-1}, a_{t-1}, s_t] for t = 2..T."""
    s = np.asarray(traj.y)
    a = np.asarray(traj.u)
    if s.dtype.kind not in "iu" or a.dtype.kind not in "iu":
        raise ValueError("tabular models need finite-alphabet (integer) trajectories")
    if np.any(s < 0) or np.any(s >= model.n_states):
        raise ValueError("state symbol out of range")
    if np.any(a < 0) or np.any(a >= model.n_actions):
        raise ValueError("action symbol out of range")
    if len(s) < 2:
        return np.zeros(0)
    return np.log(model.Q[s[:-1], a[:-1], s[1:]])


def loglik_at(model: Model, theta, traj: Trajectory, t: int) -> float:
    """Log-likelihood term at time ``t`` (1-based position in the trajectory).

    Tabular models score the transition into ``s_t``; the ``t = 1`` term uses
    a fixed uniform initial-state distribution.
    """
    T = len(traj.y)
    if not (1 <= t <= T):
        raise IndexError(f"t={t} outside [1, {T}]")
    if isinstance(model, TabularMarkovModel):
        if t == 1:
            return -math.log(model.n_states)
        s = traj.y
        a = traj.u
        return float(np.log(model.Q[int(s[t - 2]), int(a[t - 2]), int(s[t - 1])]))
    eps = predictor_errors(model, theta, traj)
    return float(_gaussian_loglik(eps[t - 1], model.sigma))


def loglik_truncated_at(model: Model, theta, traj: Trajectory, t: int, s: int) -> float:
    """Log-likelihood at ``t`` with history limited to the last ``s`` observations.

    The model is re-evaluated on the window ``[t-s, t]`` with zero initial
    conditions, so the result is exactly independent of all data before
    ``t - s``.
    """
    T = len(traj.y)
    if not (1 <= t <= T):
        raise IndexError(f"t={t} outside [1, {T}]")
    if not (0 < s < t):
        raise ValueError(f"truncation must satisfy 0 < s < t, got s={s}, t={t}")
    if isinstance(model, TabularMarkovModel):
        # First-order model: the window always contains (s_{t-1}, a_{t-1}).
        return float(np.log(model.Q[int(traj.y[t - 2]), int(traj.u[t - 2]), int(traj.y[t - 1])]))
    window = Trajectory(
        u=np.asarray(traj.u, dtype=np.float64)[t - s - 1 : t],
        y=np.asarray(traj.y, dtype=np.float64)[t - s - 1 : t],
        t0=traj.t0 + t - s - 1,
    )
    eps = predictor_errors(model, theta, window)
    return float(_gaussian_loglik(eps[-1], model.sigma))


def loglik_series(model: Model, theta, traj: Trajectory, s: Optional[int] = None) -> LogLikelihoodSeries:
    """Full per-step series, plus the ``s``-truncated series when requested."""
    T = len(traj.y)
    if isinstance(model, TabularMarkovModel):
        steps = _tabular_steps(model, traj)
        values = np.concatenate(([-math.log(model.n_states)], steps))
    else:
        eps = predictor_errors(model, theta, traj)
        values = _gaussian_loglik(eps, model.sigma)
    truncated = None
    if s is not None:
        truncated = np.array(
            [loglik_truncated_at(model, theta, traj, t, s) for t in range(s + 1, T + 1)]
        )
    return LogLikelihoodSeries(values=values, truncated_s=s, truncated_values=truncated)


def avg_loglik(model: Model, theta, traj: Trajectory) -> float:
    """Average log-likelihood ``(1/T) sum_t l_t(theta)`` over the trajectory."""
    T = len(traj.y)
    if T < 1:
        raise ValueError("trajectory must contain at least one sample")
    if isinstance(model, TabularMarkovModel):
        steps = _tabular_steps(model, traj)
        return float((-math.log(model.n_states) + steps.sum()) / T)
    eps = predictor_errors(model, theta, traj)
    return float(np.mean(_gaussian_loglik(eps, model.sigma)))
