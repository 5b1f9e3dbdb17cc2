"""Maximum-likelihood fitting over compact parameter boxes.

Four routes to the same objective (the average log-likelihood): closed-form
least squares for ARX predictors, transition counting for tabular models,
projected gradient ascent for anything differentiable, and exhaustive grid
search as a brute-force oracle.  Routes are deliberately independent so they
can cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ParameterVector, Trajectory
from .models import (
    ArxStructure,
    GaussianPredictorModel,
    TabularMarkovModel,
    arx_lag_matrix,
    avg_loglik,
    predictor_errors,
)

__all__ = [
    "FitResult",
    "GradientOptions",
    "NotPersistentlyExcitingError",
    "fit_arx_least_squares",
    "fit_tabular",
    "fit_projected_gradient",
    "grid_maximize",
    "arx_gradient",
    "finite_difference_gradient",
    "fit_result_csv_header",
    "fit_result_csv_row",
]

_SINGULAR_REL_TOL = 1e-10


class NotPersistentlyExcitingError(ValueError):
    """The regressor moment matrix is singular; the data cannot identify theta."""


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a fit: the estimate, its objective value, and bookkeeping.

    ``objective_value`` always equals ``avg_loglik`` at ``theta_hat`` on the
    training trajectory; ``diagnostics`` carries method-specific notes
    (moment eigenvalues, unvisited rows, optimizer residuals, grid values).
    """

    theta_hat: ParameterVector
    objective_value: float
    method: str
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    fitted_model: Optional[object] = None


def fit_result_csv_header(n_params: int) -> str:
    cols = ["method"] + [f"theta{i}" for i in range(n_params)] + [
        "objective", "converged", "iterations",
    ]
    return ",".join(cols)


def fit_result_csv_row(result: FitResult) -> str:
    cells = [result.method]
    cells += [repr(float(v)) for v in result.theta_hat.values]
    cells += [repr(float(result.objective_value)), str(result.converged).lower(),
              str(result.iterations)]
    return ",".join(cells)


def _moment_blocks(M: np.ndarray, n_a: int, n_b: int):
    y_block = M[:n_a, :n_a]
    u_block = M[n_a:, n_a:]
    return y_block, u_block


def fit_arx_least_squares(
    traj: Trajectory,
    n_a: int,
    n_b: int,
    sigma: float,
    box,
) -> FitResult:
    """Solve the ARX normal equations, falling back to projected gradient
    when the unconstrained optimum leaves the box.

    A singular regressor moment matrix means the data are not persistently
    exciting for this parameterization and raises
    :class:`NotPersistentlyExcitingError`, naming the deficient block.
    """
    structure = ArxStructure(n_a, n_b)
    if len(traj.y) <= structure.n_params:
        raise ValueError(
            f"trajectory length {len(traj.y)} too short for {structure.n_params} parameters"
        )
    u = np.asarray(traj.u, dtype=np.float64).reshape(-1)
    y = np.asarray(traj.y, dtype=np.float64).reshape(-1)
    Phi = arx_lag_matrix(u, y, n_a, n_b)
    T = len(y)
    M = Phi.T @ Phi / T
    rhs = Phi.T @ y / T

    eigs = np.linalg.eigvalsh(M)
    scale = float(np.trace(M)) / M.shape[0]
    threshold = _SINGULAR_REL_TOL * max(scale, np.finfo(float).tiny)
    min_eig = float(eigs[0])
    if min_eig <= threshold:
        culprit = "regressor"
        y_block, u_block = _moment_blocks(M, n_a, n_b)
        if n_b and u_block.size and np.linalg.eigvalsh(u_block)[0] <= threshold:
            culprit = "u-block"
        elif n_a and y_block.size and np.linalg.eigvalsh(y_block)[0] <= threshold:
            culprit = "y-block"
        raise NotPersistentlyExcitingError(
            f"{culprit} moment matrix is singular (min eigenvalue {min_eig:.3e}); "
            "the data are not persistently exciting for this model"
        )

    theta_unc = np.linalg.solve(M, rhs)
    model = GaussianPredictorModel(structure, sigma)
    box_arr = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    inside = np.all(theta_unc >= box_arr[:, 0]) and np.all(theta_unc <= box_arr[:, 1])
    if inside:
        theta_hat = ParameterVector(theta_unc, box_arr)
        return FitResult(
            theta_hat=theta_hat,
            objective_value=avg_loglik(model, theta_hat, traj),
            method="arx_least_squares",
            iterations=0,
            converged=True,
            diagnostics={"min_moment_eigenvalue": min_eig},
        )

    pg = fit_projected_gradient(model, traj, ParameterVector.clamped(theta_unc, box_arr))
    diagnostics = dict(pg.diagnostics)
    diagnostics.update(
        {
            "min_moment_eigenvalue": min_eig,
            "box_fallback": "projected_gradient",
            "unconstrained_theta": tuple(float(v) for v in theta_unc),
        }
    )
    return FitResult(
        theta_hat=pg.theta_hat,
        objective_value=pg.objective_value,
        method="arx_least_squares",
        iterations=pg.iterations,
        converged=pg.converged,
        diagnostics=diagnostics,
    )


def fit_tabular(
    traj: Trajectory,
    n_states: int,
    n_actions: int,
    floor: float = 1e-6,
) -> FitResult:
    """Counting MLE of the transition table, floored toward uniform.

    Visited rows get ``floor + (1 - n_states*floor) * counts/total``; rows
    whose pair ``(s, a)`` never occurs are set uniform and listed in
    ``diagnostics['unvisited_phi']`` (they carry no data, so no estimate).
    """
    s = np.asarray(traj.y)
    a = np.asarray(traj.u)
    if s.dtype.kind not in "iu" or a.dtype.kind not in "iu":
        raise ValueError("tabular fitting needs finite-alphabet (integer) trajectories")
    if np.any(s < 0) or np.any(s >= n_states):
        raise ValueError("state symbol out of range")
    if np.any(a < 0) or np.any(a >= n_actions):
        raise ValueError("action symbol out of range")

    counts = np.zeros((n_states, n_actions, n_states))
    if len(s) >= 2:
        np.add.at(counts, (s[:-1], a[:-1], s[1:]), 1.0)
    totals = counts.sum(axis=2)
    unvisited = [
        (int(i), int(j))
        for i in range(n_states)
        for j in range(n_actions)
        if totals[i, j] == 0.0
    ]

    Q = np.empty_like(counts)
    for i in range(n_states):
        for j in range(n_actions):
            if totals[i, j] == 0.0:
                Q[i, j, :] = 1.0 / n_states
            else:
                Q[i, j, :] = floor + (1.0 - n_states * floor) * counts[i, j] / totals[i, j]
    model = TabularMarkovModel(Q, floor)

    # Clamp absorbs any last-ulp spill of the floored rows over the box edge.
    box = np.tile([floor, 1.0 - (n_states - 1) * floor], (Q.size, 1))
    theta_hat = ParameterVector.clamped(Q.reshape(-1), box)
    return FitResult(
        theta_hat=theta_hat,
        objective_value=avg_loglik(model, None, traj),
        method="tabular_counts",
        iterations=0,
        converged=True,
        diagnostics={"unvisited_phi": tuple(unvisited), "visit_totals": totals},
        fitted_model=model,
    )


@dataclass(frozen=True)
class GradientOptions:
    max_iterations: int = 10_000
    tol: float = 1e-8
    initial_step: float = 1.0
    shrink: float = 0.5
    fd_step: float = 1e-5
    armijo: float = 1e-4
    min_step: float = 1e-16


def arx_gradient(model: GaussianPredictorModel, theta, traj: Trajectory) -> np.ndarray:
    """Analytic gradient of the average log-likelihood for ARX predictors."""
    if not isinstance(model.structure, ArxStructure):
        raise TypeError("analytic gradient is only available for ARX structures")
    u = np.asarray(traj.u, dtype=np.float64).reshape(-1)
    y = np.asarray(traj.y, dtype=np.float64).reshape(-1)
    Phi = arx_lag_matrix(u, y, model.structure.n_a, model.structure.n_b)
    eps = predictor_errors(model, theta, traj)
    return Phi.T @ eps / (model.sigma**2 * len(y))


def finite_difference_gradient(model, theta, traj: Trajectory, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the average log-likelihood."""
    v = np.array(theta.values if isinstance(theta, ParameterVector) else theta, dtype=np.float64)
    grad = np.zeros_like(v)
    for i in range(len(v)):
        vp = v.copy()
        vm = v.copy()
        vp[i] += h
        vm[i] -= h
        grad[i] = (avg_loglik(model, vp, traj) - avg_loglik(model, vm, traj)) / (2.0 * h)
    return grad


def fit_projected_gradient(
    model: GaussianPredictorModel,
    traj: Trajectory,
    theta0: ParameterVector,
    opts: GradientOptions = GradientOptions(),
) -> FitResult:
    """Projected gradient ascent with backtracking line search.

    Steps restart from ``opts.initial_step`` and halve until the Armijo
    condition holds, so the objective is nondecreasing across accepted
    iterations.  Stops when the projected-gradient norm drops below
    ``opts.tol`` or the iteration budget runs out.  ARX structures use the
    analytic gradient; everything else central finite differences.
    """
    v = theta0.values.copy()
    lo, hi = theta0.lo, theta0.hi
    fv = avg_loglik(model, v, traj)
    if not np.isfinite(fv):
        raise ValueError(f"objective is not finite at theta0 (value {fv!r})")
    analytic = isinstance(model, GaussianPredictorModel) and isinstance(
        model.structure, ArxStructure
    )

    def gradient(vec):
        if analytic:
            return arx_gradient(model, vec, traj)
        return finite_difference_gradient(model, vec, traj, opts.fd_step)

    converged = False
    iterations = 0
    pg_norm = float("nan")
    for iterations in range(opts.max_iterations + 1):
        g = gradient(v)
        pg_norm = float(np.linalg.norm(np.clip(v + g, lo, hi) - v))
        if pg_norm < opts.tol:
            converged = True
            break
        if iterations == opts.max_iterations:
            break
        alpha = opts.initial_step
        stepped = False
        while alpha >= opts.min_step:
            cand = np.clip(v + alpha * g, lo, hi)
            fc = avg_loglik(model, cand, traj)
            if fc >= fv + opts.armijo * float(g @ (cand - v)):
                v, fv = cand, fc
                stepped = True
                break
            alpha *= opts.shrink
        if not stepped:
            # No improving step exists at machine resolution.
            break

    theta_hat = ParameterVector(v, theta0.box)
    return FitResult(
        theta_hat=theta_hat,
        objective_value=fv,
        method="projected_gradient",
        iterations=iterations,
        converged=converged,
        diagnostics={"projected_gradient_norm": pg_norm},
    )


def grid_maximize(
    model,
    traj: Trajectory,
    grid: Sequence[ParameterVector],
    tie_tol: float = 0.0,
) -> FitResult:
    """Brute-force argmax of the average log-likelihood over a finite grid.

    Ties break to the lowest grid index.  ``diagnostics['tie_indices']``
    lists every grid point within ``tie_tol`` of the maximum (the argmax is
    a set when the objective has flat directions), and
    ``diagnostics['values']`` keeps the full objective profile.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    values = np.array([avg_loglik(model, g, traj) for g in grid])
    best = int(np.argmax(values))
    tie = tuple(int(i) for i in np.nonzero(values >= values[best] - tie_tol)[0])
    return FitResult(
        theta_hat=grid[best],
        objective_value=float(values[best]),
        method="grid",
        iterations=len(grid),
        converged=True,
        diagnostics={"values": values, "tie_indices": tie, "tie_tol": float(tie_tol)},
    )
