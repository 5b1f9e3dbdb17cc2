"""Empirical convergence and consistency diagnostics.

The estimators in this package come with asymptotic guarantees that hold
under stability, regularity, and excitation conditions.  Nothing here proves
those guarantees; instead each diagnostic measures the finite-sample quantity
the theory talks about:

* exponential forgetting of the log-likelihood (full vs. truncated history),
* the long-run average objective and the sup-gap of ``L_T`` against it,
* the exact KL bias of tabular models under the stationary pair distribution,
* persistent excitation of the lag regressor,
* coupled-noise probes of r-mean exponential stability,
* drift checks guarding the stationarity assumption itself,
* Lipschitz/dominance probes of the objective's regularity.

Monte-Carlo replications draw from per-replication substreams of the caller's
stream, so results are independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import ParameterVector, RngStream, Trajectory, make_rng
from .estimation import grid_maximize  # noqa: F401  (re-exported convenience)
from .linsys import (
    LinearClosedLoopSystem,
    UnstableSystemError,
    burn_in_length,
    closed_loop_stability_radius,
    respond_to_noise,
    simulate_linear_closed_loop,
)
from .markov import ControlledMarkovChain, simulate_cmc, stationary_distribution
from .models import (
    TabularMarkovModel,
    avg_loglik,
    loglik_at,
    loglik_series,
    loglik_truncated_at,
)

__all__ = [
    "DecayFit",
    "DecayScenario",
    "ForgettingReport",
    "AsymptoticEstimate",
    "RegressorMoment",
    "PersistentExcitationResult",
    "ObjectiveCurve",
    "GapReport",
    "KlArgminResult",
    "RMeanProbeReport",
    "DriftFlag",
    "DriftReport",
    "fit_exponential_decay",
    "estimate_forgetting_decay",
    "estimate_asymptotic_objective",
    "uniform_convergence_gap",
    "exact_kl_bias",
    "argmin_kl_oracle",
    "persistent_excitation_check",
    "r_mean_stability_probe",
    "stationarity_drift_check",
    "lipschitz_probe",
    "dominance_probe",
]

System = Union[LinearClosedLoopSystem, ControlledMarkovChain]

# Stream id offset for the per-(seed, T) trajectories of the gap table.
_GAP_STREAM_BASE = 7000


def simulate_system(
    system: System,
    T: int,
    rng: RngStream,
    burn_in: Optional[int] = None,
    init: Union[int, str] = 0,
) -> Trajectory:
    """Simulate either system kind with its natural warm-up convention."""
    if isinstance(system, LinearClosedLoopSystem):
        burn = burn_in_length(system) if burn_in is None else burn_in
        return simulate_linear_closed_loop(system, T, rng, burn)
    if isinstance(system, ControlledMarkovChain):
        return simulate_cmc(system, T, rng, init=init)
    raise TypeError(f"unsupported system type {type(system).__name__}")


# ---------------------------------------------------------------------------
# Exponential decay fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecayFit:
    """Least-squares fit of ``gap(s) ~ c_hat * lambda_hat**s`` in log space.

    ``used`` marks the points that entered the fit (those above the noise
    floor); ``r_squared`` measures log-linearity over those points.
    """

    s_values: np.ndarray
    mean_sq_gaps: np.ndarray
    stderrs: np.ndarray
    c_hat: float
    lambda_hat: float
    r_squared: float
    used: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=np.int64)
        g = np.asarray(self.mean_sq_gaps, dtype=np.float64)
        se = np.asarray(self.stderrs, dtype=np.float64)
        used = np.asarray(self.used, dtype=bool)
        if not (len(s) == len(g) == len(se) == len(used)):
            raise ValueError("s_values, gaps, stderrs, used must have equal length")
        if np.any(g < 0.0):
            raise ValueError("mean squared gaps must be nonnegative")
        if self.c_hat <= 0.0 or self.lambda_hat <= 0.0:
            raise ValueError("fitted constants must be positive")
        for name, arr in (("s_values", s), ("mean_sq_gaps", g), ("stderrs", se), ("used", used)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def fit_exponential_decay(
    s_values: Sequence[int],
    mean_sq_gaps: Sequence[float],
    stderrs: Sequence[float],
    noise_floor_factor: float = 10.0,
) -> Optional[DecayFit]:
    """Fit ``log(gap)`` linearly in ``s``, ignoring noise-floor points.

    Points whose estimate is below ``noise_floor_factor`` times its own
    Monte-Carlo standard error carry no decay information and are excluded.
    Returns ``None`` when every gap is exactly zero (the model has exact
    finite memory, so there is nothing to fit); raises if noise leaves fewer
    than two usable points.
    """
    s = np.asarray(s_values, dtype=np.int64)
    g = np.asarray(mean_sq_gaps, dtype=np.float64)
    se = np.asarray(stderrs, dtype=np.float64)
    if np.all(g == 0.0):
        return None
    used = (g > 0.0) & (g > noise_floor_factor * se)
    if used.sum() < 2:
        raise ValueError(
            "fewer than two decay points above the noise floor; "
            "increase replications or shrink the s grid"
        )
    x = s[used].astype(np.float64)
    z = np.log(g[used])
    slope, intercept = np.polyfit(x, z, 1)
    resid = z - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res < 1e-24 else -math.inf
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return DecayFit(
        s_values=s,
        mean_sq_gaps=g,
        stderrs=se,
        c_hat=float(np.exp(intercept)),
        lambda_hat=float(np.exp(slope)),
        r_squared=r_squared,
        used=used,
    )


# ---------------------------------------------------------------------------
# Forgetting-rate estimation (full vs truncated log-likelihood)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecayScenario:
    """A system, a model, and the parameter points to probe."""

    system: System
    model: object
    thetas: Sequence[Optional[ParameterVector]]
    burn_in: Optional[int] = None
    init: Union[int, str] = 0


@dataclass(frozen=True, eq=False)
class ForgettingReport:
    """Forgetting-rate estimates, one fit per probed parameter point.

    ``exact_finite_memory`` means every gap was identically zero for every
    theta: the model's truncated and full evaluations coincide (finite
    regressors, first-order tabular models).  ``worst`` is the fit with the
    largest decay rate, matching the uniform-over-parameters reading of the
    stability assumption.
    """

    s_values: np.ndarray
    t_eval: int
    replications: int
    mean_sq_gaps: np.ndarray  # (n_theta, n_s)
    stderrs: np.ndarray       # (n_theta, n_s)
    fits: Tuple[Optional[DecayFit], ...]
    exact_finite_memory: bool
    worst: Optional[DecayFit]


def estimate_forgetting_decay(
    scenario: DecayScenario,
    s_values: Sequence[int],
    t_eval: int,
    replications: int,
    rng: RngStream,
) -> ForgettingReport:
    """Monte-Carlo estimate of ``E|l_t - l_{t,s}|^2`` and its decay in ``s``.

    Each replication simulates a fresh trajectory, evaluates the full-history
    log-likelihood at ``t_eval`` and its ``s``-window truncations, and
    accumulates the squared gaps.  A log-linear fit per theta yields
    ``(c_hat, lambda_hat)``; the worst (largest) rate over the theta set is
    reported.
    """
    s_arr = sorted(int(s) for s in s_values)
    if not s_arr or s_arr[0] < 1:
        raise ValueError("s_values must be positive integers")
    if t_eval <= s_arr[-1]:
        raise ValueError("t_eval must exceed max(s_values)")
    if replications < 30:
        raise ValueError("need at least 30 replications for a meaningful decay estimate")

    thetas = list(scenario.thetas)
    gaps = np.zeros((len(thetas), len(s_arr), replications))
    for rep in range(replications):
        traj = simulate_system(
            scenario.system, t_eval, rng.substream(rep), scenario.burn_in, scenario.init
        )
        for i, theta in enumerate(thetas):
            full = loglik_at(scenario.model, theta, traj, t_eval)
            for j, s in enumerate(s_arr):
                trunc = loglik_truncated_at(scenario.model, theta, traj, t_eval, s)
                gaps[i, j, rep] = (full - trunc) ** 2

    means = gaps.mean(axis=2)
    stderrs = gaps.std(axis=2, ddof=1) / math.sqrt(replications)
    fits: List[Optional[DecayFit]] = []
    for i in range(len(thetas)):
        if np.all(gaps[i] == 0.0):
            fits.append(None)
        else:
            fits.append(fit_exponential_decay(s_arr, means[i], stderrs[i]))
    non_null = [f for f in fits if f is not None]
    worst = max(non_null, key=lambda f: f.lambda_hat) if non_null else None
    return ForgettingReport(
        s_values=np.asarray(s_arr, dtype=np.int64),
        t_eval=t_eval,
        replications=replications,
        mean_sq_gaps=means,
        stderrs=stderrs,
        fits=tuple(fits),
        exact_finite_memory=all(f is None for f in fits),
        worst=worst,
    )


# ---------------------------------------------------------------------------
# Long-run objective and uniform convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AsymptoticEstimate:
    """Monte-Carlo estimate of the long-run average log-likelihood."""

    value: float
    stderr: float
    ci_halfwidth: float
    per_replication: np.ndarray
    T_ref: int

    @property
    def replications(self) -> int:
        return len(self.per_replication)


def estimate_asymptotic_objective(
    system: System,
    model,
    theta,
    T_ref: int,
    replications: int,
    rng: RngStream,
    burn_in: Optional[int] = None,
    init: Union[int, str] = 0,
) -> AsymptoticEstimate:
    """Estimate the limiting objective by long-run averaging after warm-up.

    The confidence interval is ``+- 2 * stderr`` across replications; every
    theorem-level assertion made elsewhere is relative to this interval.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications for a standard error")
    values = np.empty(replications)
    for j in range(replications):
        traj = simulate_system(system, T_ref, rng.substream(j), burn_in, init)
        values[j] = avg_loglik(model, theta, traj)
    stderr = float(values.std(ddof=1) / math.sqrt(replications))
    return AsymptoticEstimate(
        value=float(values.mean()),
        stderr=stderr,
        ci_halfwidth=2.0 * stderr,
        per_replication=values,
        T_ref=T_ref,
    )


@dataclass(frozen=True, eq=False)
class ObjectiveCurve:
    """``L_T`` samples per (T, seed, grid point) plus the reference estimate."""

    T_values: np.ndarray
    samples: np.ndarray        # (n_T, n_seeds, n_grid)
    ref_values: np.ndarray     # (n_grid,)
    ref_stderr: np.ndarray     # (n_grid,)


@dataclass(frozen=True, eq=False)
class GapReport:
    """Sup-over-grid convergence gaps and their decay across T."""

    T_values: np.ndarray
    seeds: Tuple[int, ...]
    sup_gaps: np.ndarray          # (n_T, n_seeds)
    median_sup_gaps: np.ndarray   # (n_T,)
    ratios: np.ndarray            # (n_T - 1,) consecutive median ratios
    curve: ObjectiveCurve


def uniform_convergence_gap(
    system: System,
    model,
    theta_grid: Sequence[ParameterVector],
    T_list: Sequence[int],
    seeds: Sequence[int],
    rng: RngStream,
    T_ref: int,
    ref_replications: int = 3,
    burn_in: Optional[int] = None,
    init: Union[int, str] = 0,
) -> GapReport:
    """Sup over the grid of ``|L_T - L_ref|`` for each T and seed.

    The reference objective comes from ``ref_replications`` long runs of
    length ``T_ref`` (shared across all grid points), which must dominate
    ``max(T_list)`` by at least a factor 10.  The report includes the
    median-over-seeds gap per T and the consecutive ratios, which quantify
    how fast the sup-gap shrinks.
    """
    T_list = [int(T) for T in T_list]
    seeds = [int(s) for s in seeds]
    grid = list(theta_grid)
    if not grid:
        raise ValueError("theta grid must be nonempty")
    if T_ref < 10 * max(T_list):
        raise ValueError(
            f"T_ref={T_ref} is not well separated from max(T_list)={max(T_list)}; need ratio >= 10"
        )

    ref_samples = np.empty((ref_replications, len(grid)))
    for j in range(ref_replications):
        traj = simulate_system(system, T_ref, rng.substream(j), burn_in, init)
        ref_samples[j] = [avg_loglik(model, th, traj) for th in grid]
    ref_values = ref_samples.mean(axis=0)
    if ref_replications >= 2:
        ref_stderr = ref_samples.std(axis=0, ddof=1) / math.sqrt(ref_replications)
    else:
        ref_stderr = np.zeros(len(grid))

    samples = np.empty((len(T_list), len(seeds), len(grid)))
    sup_gaps = np.empty((len(T_list), len(seeds)))
    for i, T in enumerate(T_list):
        for j, seed in enumerate(seeds):
            stream = make_rng(seed, _GAP_STREAM_BASE + i)
            traj = simulate_system(system, T, stream, burn_in, init)
            row = np.array([avg_loglik(model, th, traj) for th in grid])
            samples[i, j] = row
            sup_gaps[i, j] = float(np.max(np.abs(row - ref_values)))

    medians = np.median(sup_gaps, axis=1)
    ratios = medians[1:] / medians[:-1]
    return GapReport(
        T_values=np.asarray(T_list, dtype=np.int64),
        seeds=tuple(seeds),
        sup_gaps=sup_gaps,
        median_sup_gaps=medians,
        ratios=ratios,
        curve=ObjectiveCurve(
            T_values=np.asarray(T_list, dtype=np.int64),
            samples=samples,
            ref_values=ref_values,
            ref_stderr=ref_stderr,
        ),
    )


# ---------------------------------------------------------------------------
# Exact KL bias on finite chains
# ---------------------------------------------------------------------------


def exact_kl_bias(chain: ControlledMarkovChain, model) -> float:
    """Stationary-weighted KL divergence of the model rows from the truth.

    Computes ``sum_phi p(phi) * KL(P[phi] || Q[phi])`` as an exact finite
    sum, with the ``0 * log(0/q) = 0`` convention.  Pairs with zero
    stationary mass contribute nothing.  A zero model probability where the
    chain has positive mass yields ``+inf`` (cannot happen for
    floor-respecting models).
    """
    Q = model.Q if isinstance(model, TabularMarkovModel) else np.asarray(model, dtype=np.float64)
    if Q.shape != chain.P.shape:
        raise ValueError(f"model shape {Q.shape} does not match chain shape {chain.P.shape}")
    p_phi = stationary_distribution(chain).as_matrix()
    P = chain.P
    total = 0.0
    for s in range(chain.n_states):
        for a in range(chain.n_actions):
            w = p_phi[s, a]
            if w == 0.0:
                continue
            row_p = P[s, a]
            row_q = Q[s, a]
            mask = row_p > 0.0
            if np.any(row_q[mask] == 0.0):
                return math.inf
            total += w * float(np.sum(row_p[mask] * np.log(row_p[mask] / row_q[mask])))
    return total


@dataclass(frozen=True, eq=False)
class KlArgminResult:
    best_index: int
    best_model: object
    biases: np.ndarray
    tie_indices: Tuple[int, ...]


def argmin_kl_oracle(
    chain: ControlledMarkovChain,
    model_grid: Sequence[TabularMarkovModel],
    tie_tol: float = 0.0,
) -> KlArgminResult:
    """Grid point minimizing the exact KL bias; ties go to the lowest index.

    This is the brute-force prediction of where a tabular ML fit must
    converge; ``tie_indices`` exposes the argmin set when several grid
    points are equivalent within ``tie_tol``.
    """
    models = list(model_grid)
    if not models:
        raise ValueError("model grid must be nonempty")
    biases = np.array([exact_kl_bias(chain, m) for m in models])
    best = int(np.argmin(biases))
    tie = tuple(int(i) for i in np.nonzero(biases <= biases[best] + tie_tol)[0])
    return KlArgminResult(best_index=best, best_model=models[best], biases=biases, tie_indices=tie)


# ---------------------------------------------------------------------------
# Persistent excitation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegressorMoment:
    """Sample second-moment matrix of the lag regressor."""

    matrix: np.ndarray
    min_eigenvalue: float
    sample_size: int

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=np.float64)
        if np.max(np.abs(M - M.T)) > 1e-10:
            raise ValueError("moment matrix must be symmetric")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)


@dataclass(frozen=True, eq=False)
class PersistentExcitationResult:
    moment: RegressorMoment
    verdict: bool
    threshold: float


def persistent_excitation_check(
    source: Union[Trajectory, LinearClosedLoopSystem],
    u_lags: int,
    y_lags: int,
    threshold: Optional[float] = None,
    T: Optional[int] = None,
    rng: Optional[RngStream] = None,
    burn_in: Optional[int] = None,
) -> PersistentExcitationResult:
    """Check positive definiteness of ``E[phi phi^T]`` for the lag regressor.

    ``phi_t = (u_{t-1}..u_{t-u_lags}, y_{t-1}..y_{t-y_lags})`` over complete
    rows only.  The default threshold is ``1e-8 * trace/dim``; the verdict is
    positive iff the smallest sample eigenvalue clears it.
    """
    if u_lags < 0 or y_lags < 0 or u_lags + y_lags == 0:
        raise ValueError("need at least one lag in u or y")
    if isinstance(source, LinearClosedLoopSystem):
        if T is None or rng is None:
            raise ValueError("simulating a system source requires T and rng")
        traj = simulate_system(source, T, rng, burn_in)
    else:
        traj = source
    u = np.asarray(traj.u, dtype=np.float64).reshape(-1)
    y = np.asarray(traj.y, dtype=np.float64).reshape(-1)
    n = len(y)
    dim = u_lags + y_lags
    maxlag = max(u_lags, y_lags)
    if n - maxlag < 10 * dim:
        raise ValueError(
            f"trajectory too short: {n} samples for regressor dimension {dim} "
            "(need at least 10x the dimension after lag trimming)"
        )
    cols = [u[maxlag - i : n - i] for i in range(1, u_lags + 1)]
    cols += [y[maxlag - i : n - i] for i in range(1, y_lags + 1)]
    Phi = np.column_stack(cols)
    M = Phi.T @ Phi / Phi.shape[0]
    M = (M + M.T) / 2.0
    min_eig = float(np.linalg.eigvalsh(M)[0])
    if threshold is None:
        threshold = 1e-8 * float(np.trace(M)) / dim
    moment = RegressorMoment(matrix=M, min_eigenvalue=min_eig, sample_size=Phi.shape[0])
    return PersistentExcitationResult(
        moment=moment, verdict=min_eig > threshold, threshold=float(threshold)
    )


# ---------------------------------------------------------------------------
# r-mean exponential stability probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RMeanProbeReport:
    """Decay of ``E|Y_t - Y_{t,s}|^r`` for the coupled re-simulation copy."""

    r: int
    s_values: np.ndarray
    mean_gaps: np.ndarray
    stderrs: np.ndarray
    replications: int
    exact_zero: bool
    fit: Optional[DecayFit]


def r_mean_stability_probe(
    sys: LinearClosedLoopSystem,
    r: int = 4,
    s_values: Sequence[int] = (1, 2, 3, 4, 5),
    t_eval: int = 40,
    replications: int = 2000,
    rng: Optional[RngStream] = None,
    burn_in: Optional[int] = None,
) -> RMeanProbeReport:
    """Probe geometric decay of the coupling gap ``|Y_t - Y_{t,s}|``.

    The copy ``Y_{t,s}`` re-runs the closed loop with freshly drawn noise for
    all times up to ``t - s`` and the original noise afterwards, so it is
    independent of the original remote past while sharing the recent inputs.
    The mean ``r``-th power of the gap is fitted to an exponential in ``s``.
    """
    if r not in (2, 4):
        raise ValueError("r must be 2 or 4")
    if rng is None:
        raise ValueError("rng is required")
    s_arr = sorted(int(s) for s in s_values)
    if not s_arr or s_arr[0] < 1:
        raise ValueError("s_values must be positive integers")
    if t_eval <= s_arr[-1]:
        raise ValueError("t_eval must exceed max(s_values)")
    rho = closed_loop_stability_radius(sys)
    if rho >= 1.0:
        raise UnstableSystemError(f"closed loop is not stable (radius {rho:.6g})")
    burn = burn_in_length(sys) if burn_in is None else burn_in
    L = burn + t_eval

    gaps = np.zeros((len(s_arr), replications))
    for rep in range(replications):
        sub = rng.substream(rep)
        e = sys.sigma_e * sub.substream(0).standard_normal(L)
        rsig = sys.sigma_r * sub.substream(1).standard_normal(L)
        _, y = respond_to_noise(sys, e, rsig)
        y_end = y[-1]
        for j, s in enumerate(s_arr):
            e_fresh = sys.sigma_e * sub.substream(2 + 2 * j).standard_normal(L - s)
            r_fresh = sys.sigma_r * sub.substream(3 + 2 * j).standard_normal(L - s)
            e_c = np.concatenate([e_fresh, e[L - s :]])
            r_c = np.concatenate([r_fresh, rsig[L - s :]])
            _, y_c = respond_to_noise(sys, e_c, r_c)
            gaps[j, rep] = abs(y_c[-1] - y_end) ** r

    means = gaps.mean(axis=1)
    stderrs = gaps.std(axis=1, ddof=1) / math.sqrt(replications)
    exact = bool(np.all(gaps == 0.0))
    fit = None if exact else fit_exponential_decay(s_arr, means, stderrs)
    return RMeanProbeReport(
        r=r,
        s_values=np.asarray(s_arr, dtype=np.int64),
        mean_gaps=means,
        stderrs=stderrs,
        replications=replications,
        exact_zero=exact,
        fit=fit,
    )


# ---------------------------------------------------------------------------
# Stationarity drift check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftFlag:
    signal: str
    window: int
    statistic: str
    zscore: float


@dataclass(frozen=True, eq=False)
class DriftReport:
    n_windows: int
    z_threshold: float
    window_means: dict
    window_vars: dict
    flags: Tuple[DriftFlag, ...]

    @property
    def ok(self) -> bool:
        return not self.flags


def _window_drift(vals: np.ndarray, signal: str, n_windows: int, z_threshold: float,
                  means_out: dict, vars_out: dict, flags: list) -> None:
    n = len(vals) // n_windows
    windows = [vals[k * n : (k + 1) * n] for k in range(n_windows)]
    means_out[signal] = np.array([w.mean() for w in windows])
    vars_out[signal] = np.array([w.var(ddof=1) for w in windows])
    for k, w in enumerate(windows):
        rest = np.concatenate([windows[m] for m in range(n_windows) if m != k])
        dm = abs(w.mean() - rest.mean())
        denom = math.sqrt(w.var(ddof=1) / len(w) + rest.var(ddof=1) / len(rest))
        z = 0.0 if dm == 0.0 else (dm / denom if denom > 0.0 else math.inf)
        if z > z_threshold:
            flags.append(DriftFlag(signal, k, "mean", z))
        dv = abs(w.var(ddof=1) - rest.var(ddof=1))
        se = math.sqrt(
            2.0 * w.var(ddof=1) ** 2 / (len(w) - 1) + 2.0 * rest.var(ddof=1) ** 2 / (len(rest) - 1)
        )
        zv = 0.0 if dv == 0.0 else (dv / se if se > 0.0 else math.inf)
        if zv > z_threshold:
            flags.append(DriftFlag(signal, k, "variance", zv))


def stationarity_drift_check(
    source: Union[Trajectory, System],
    n_windows: int = 2,
    T: Optional[int] = None,
    rng: Optional[RngStream] = None,
    burn_in: Optional[int] = None,
    init: Union[int, str] = 0,
    z_threshold: float = 4.0,
) -> DriftReport:
    """Flag windows whose mean or variance drifts from the rest of the data.

    Guards the stationarity assumption behind every time-average diagnostic:
    a short burn-in or a large initial transient shows up as a flagged first
    window.  Each window is compared against the remaining data at
    ``z_threshold`` standard errors.
    """
    if n_windows < 2:
        raise ValueError("need at least 2 windows")
    if isinstance(source, Trajectory):
        traj = source
    else:
        if T is None or rng is None:
            raise ValueError("simulating a system source requires T and rng")
        traj = simulate_system(source, T, rng, burn_in, init)
    flags: list = []
    means: dict = {}
    variances: dict = {}
    for signal, vals in (("u", traj.u), ("y", traj.y)):
        _window_drift(np.asarray(vals, dtype=np.float64).reshape(-1), signal,
                      n_windows, z_threshold, means, variances, flags)
    return DriftReport(
        n_windows=n_windows,
        z_threshold=z_threshold,
        window_means=means,
        window_vars=variances,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# Regularity probes
# ---------------------------------------------------------------------------


def lipschitz_probe(
    model,
    traj: Trajectory,
    box,
    n_pairs: int,
    rng: RngStream,
) -> float:
    """Empirical Lipschitz constant of ``l_t`` in theta over random pairs.

    Samples parameter pairs uniformly from the box and random time indices,
    returning the largest observed ratio ``|l_t(a) - l_t(b)| / ||a - b||``.
    A finite value supports the Lipschitz regularity the convergence theory
    assumes; the constant also bounds the off-grid error of any grid-based
    sup over the box.
    """
    box_arr = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    T = len(traj.y)
    max_ratio = 0.0
    for _ in range(n_pairs):
        a = rng.uniform(box_arr[:, 0], box_arr[:, 1])
        b = rng.uniform(box_arr[:, 0], box_arr[:, 1])
        dist = float(np.linalg.norm(a - b))
        if dist < 1e-12:
            continue
        t = int(rng.integers(1, T + 1))
        la = loglik_at(model, a, traj, t)
        lb = loglik_at(model, b, traj, t)
        ratio = abs(la - lb) / dist
        if ratio > max_ratio:
            max_ratio = ratio
    return max_ratio


def dominance_probe(
    model,
    thetas: Sequence[Optional[ParameterVector]],
    system: System,
    t_eval: int,
    replications: int,
    rng: RngStream,
    burn_in: Optional[int] = None,
    init: Union[int, str] = 0,
) -> float:
    """Average of ``sup_theta l_t(theta)^2`` over fresh trajectories.

    Finiteness of this quantity is the dominance condition that lets
    expectations and suprema interact in the convergence argument.
    """
    total = 0.0
    for rep in range(replications):
        traj = simulate_system(system, t_eval, rng.substream(rep), burn_in, init)
        worst = max(loglik_at(model, th, traj, t_eval) ** 2 for th in thetas)
        total += worst
    return total / replications
