"""Experiment execution: simulate -> estimate -> diagnose -> write artifacts.

Randomness discipline (what makes re-runs byte-identical): the simulation for
seed ``s`` uses stream ``(s, 0)``; the ``i``-th diagnostic uses stream
``(seeds[0], 1000 + i)`` and derives replication substreams internally.
Estimation at several horizons reuses prefixes of one long trajectory per
seed, matching the single-growing-record reading of consistency.  Every float
written to CSV uses shortest round-trip formatting.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_hash, load_config
from .core import ParameterVector, Trajectory, make_rng, trajectory_to_csv
from .diagnostics import (
    DecayScenario,
    estimate_forgetting_decay,
    exact_kl_bias,
    persistent_excitation_check,
    stationarity_drift_check,
)
from .estimation import (
    FitResult,
    fit_arx_least_squares,
    fit_projected_gradient,
    fit_result_csv_header,
    fit_result_csv_row,
    fit_tabular,
    grid_maximize,
)
from .linsys import simulate_linear_closed_loop, burn_in_length
from .markov import simulate_cmc, stationary_distribution, support_check
from .models import TabularMarkovModel, loglik_series
from .svg import line_plot

__all__ = ["RunManifest", "run_experiment", "render_report", "Verdict"]

_DIAG_STREAM_BASE = 1000


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True, eq=False)
class RunManifest:
    """What a run produced: artifact list, verdicts, provenance, timing."""

    scenario: str
    config_hash: str
    tool_version: str
    seeds: List[int]
    T_values: List[int]
    out_dir: str
    artifacts: List[str]
    verdicts: List[Verdict]
    wall_clock_s: Dict[str, float]

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "seeds": self.seeds,
            "T_values": self.T_values,
            "out_dir": self.out_dir,
            "artifacts": self.artifacts,
            "verdicts": [
                {"name": v.name, "passed": v.passed, "detail": v.detail} for v in self.verdicts
            ],
            "wall_clock_s": self.wall_clock_s,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _prefix(traj: Trajectory, T: int) -> Trajectory:
    if T >= len(traj):
        return traj
    return Trajectory(u=np.asarray(traj.u)[:T], y=np.asarray(traj.y)[:T], t0=traj.t0)


def _simulate_for_seed(cfg: ExperimentConfig, seed: int, T: int) -> Trajectory:
    rng = make_rng(seed, 0)
    if cfg.system_kind == "linear":
        burn = cfg.burn_in if cfg.burn_in is not None else burn_in_length(cfg.system)
        return simulate_linear_closed_loop(cfg.system, T, rng, burn)
    return simulate_cmc(cfg.system, T, rng, init=cfg.init)


def _fit(cfg: ExperimentConfig, traj: Trajectory) -> FitResult:
    if cfg.estimator_method == "least_squares":
        st = cfg.model.structure
        return fit_arx_least_squares(traj, st.n_a, st.n_b, cfg.model.sigma, cfg.box)
    if cfg.estimator_method == "projected_gradient":
        return fit_projected_gradient(cfg.model, traj, cfg.theta0)
    return fit_tabular(traj, cfg.n_states, cfg.n_actions, cfg.floor)


def run_experiment(
    config_path,
    out_dir: Optional[str] = None,
    seeds: Optional[Sequence[int]] = None,
) -> RunManifest:
    """Execute a config end to end and write CSVs, SVGs, and the manifest.

    Returns the manifest; the CLI maps ``all_passed`` onto the exit code.
    """
    cfg = load_config(config_path)
    if seeds is not None:
        seeds = [int(s) for s in seeds]
        if not seeds:
            raise ValueError("seeds override must be nonempty")
        cfg = _replace_seeds(cfg, seeds)
    out = _resolve_out_dir(cfg, out_dir)
    os.makedirs(out, exist_ok=True)
    artifacts: List[str] = []
    verdicts: List[Verdict] = []
    timing: Dict[str, float] = {}
    t_total = time.perf_counter()

    # --- simulate + estimate -------------------------------------------------
    t0 = time.perf_counter()
    T_max = max(cfg.T_values)
    trajs: Dict[int, Trajectory] = {}
    fits: Dict[tuple, FitResult] = {}
    for seed in cfg.seeds:
        traj = _simulate_for_seed(cfg, seed, T_max)
        trajs[seed] = traj
        if cfg.write_trajectories:
            name = f"trajectory_seed{seed}.csv"
            trajectory_to_csv(traj, os.path.join(out, name))
            artifacts.append(name)
        for T in cfg.T_values:
            fits[(seed, T)] = _fit(cfg, _prefix(traj, T))
    timing["simulate_estimate"] = time.perf_counter() - t0

    n_params = len(next(iter(fits.values())).theta_hat.values)
    fits_name = "fits.csv"
    with open(os.path.join(out, fits_name), "w") as fh:
        fh.write("seed,T," + fit_result_csv_header(n_params) + "\n")
        for seed in cfg.seeds:
            for T in cfg.T_values:
                fh.write(f"{seed},{T}," + fit_result_csv_row(fits[(seed, T)]) + "\n")
    artifacts.append(fits_name)

    # --- diagnostics ----------------------------------------------------------
    for i, spec in enumerate(cfg.diagnostics):
        kind = spec["kind"]
        t0 = time.perf_counter()
        rng = make_rng(cfg.seeds[0], _DIAG_STREAM_BASE + i)
        handler = _DIAGNOSTIC_HANDLERS[kind]
        verdict, new_files = handler(cfg, spec, i, trajs, fits, out, rng)
        verdicts.append(verdict)
        artifacts.extend(new_files)
        timing[f"diagnostic_{i}_{kind}"] = time.perf_counter() - t0

    timing["total"] = time.perf_counter() - t_total
    manifest = RunManifest(
        scenario=cfg.name,
        config_hash=config_hash(cfg.raw),
        tool_version=__version__,
        seeds=list(cfg.seeds),
        T_values=list(cfg.T_values),
        out_dir=os.path.abspath(out),
        artifacts=artifacts,
        verdicts=verdicts,
        wall_clock_s={k: round(v, 4) for k, v in timing.items()},
    )
    for name in artifacts:
        if not os.path.exists(os.path.join(out, name)):
            raise RuntimeError(f"artifact {name} listed but not written")
    manifest.write(os.path.join(out, "manifest.json"))
    return manifest


def _replace_seeds(cfg: ExperimentConfig, seeds: List[int]) -> ExperimentConfig:
    import dataclasses

    raw = dict(cfg.raw)
    raw["seeds"] = list(seeds)
    return dataclasses.replace(cfg, seeds=list(seeds), raw=raw)


def _resolve_out_dir(cfg: ExperimentConfig, out_dir: Optional[str]) -> str:
    if out_dir:
        return out_dir
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get("IDLAB_OUT", "idlab-runs")
    return os.path.join(root, cfg.name)


# ---------------------------------------------------------------------------
# Diagnostic handlers: (cfg, spec, index, trajs, fits, out, rng) -> (Verdict, files)
# ---------------------------------------------------------------------------


def _handle_estimation_error(cfg, spec, index, trajs, fits, out, rng):
    true_theta = np.asarray(spec["true_theta"], dtype=np.float64)
    T = int(spec.get("at_T", max(cfg.T_values)))
    errors = {
        seed: float(np.max(np.abs(fits[(seed, T)].theta_hat.values - true_theta)))
        for seed in cfg.seeds
    }
    median = float(np.median(list(errors.values())))
    name = f"estimation_error_{index}.csv"
    with open(os.path.join(out, name), "w") as fh:
        fh.write("seed,T,inf_error\n")
        for seed in cfg.seeds:
            fh.write(f"{seed},{T},{_fmt(errors[seed])}\n")
    bound = float(spec["max_inf_error"])
    passed = median < bound
    return (
        Verdict(f"estimation_error[{index}]", passed,
                f"median inf-error {median:.3e} vs bound {bound:g} at T={T}"),
        [name],
    )


def _handle_bias_match(cfg, spec, index, trajs, fits, out, rng):
    true_theta = np.asarray(spec["true_theta"], dtype=np.float64)
    T = max(cfg.T_values)
    step = float(spec["grid_step"])
    oracle_T = int(spec["oracle_T"])
    match_steps = int(spec["match_steps"])
    min_dist = float(spec["min_inf_distance"])

    burn = cfg.burn_in if cfg.burn_in is not None else burn_in_length(cfg.system)
    oracle_traj = simulate_linear_closed_loop(cfg.system, oracle_T, rng, burn)
    axes = [np.round(np.arange(lo, hi + 1e-9, step), 12) for lo, hi in cfg.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.reshape(-1) for m in mesh])
    grid = [ParameterVector(p, cfg.box) for p in points]
    oracle = grid_maximize(cfg.model, oracle_traj, grid)
    values = oracle.diagnostics["values"]
    # Statistical ties: the argmax is a set up to the oracle's own MC noise.
    series = loglik_series(cfg.model, oracle.theta_hat, oracle_traj).values
    stderr = float(series.std(ddof=1) / math.sqrt(len(series)))
    tie_tol = 4.0 * stderr
    tie_mask = values >= values.max() - tie_tol
    tie_points = points[tie_mask]

    name = f"bias_grid_{index}.csv"
    with open(os.path.join(out, name), "w") as fh:
        fh.write(",".join(f"theta{i}" for i in range(points.shape[1])) + ",objective,tied\n")
        for p, v, m in zip(points, values, tie_mask):
            fh.write(",".join(_fmt(c) for c in p) + f",{_fmt(v)},{str(bool(m)).lower()}\n")

    svg_name = f"bias_grid_{index}.svg"
    order = np.arange(len(values))
    line_plot(
        os.path.join(out, svg_name),
        [(order, values, "objective")],
        title=f"{cfg.name}: objective over parameter grid",
        xlabel="grid index",
        ylabel="average log-likelihood",
        markers=False,
    )

    bias_dists = []
    match_dists = []
    for seed in cfg.seeds:
        theta = fits[(seed, T)].theta_hat.values
        bias_dists.append(float(np.max(np.abs(theta - true_theta))))
        match_dists.append(float(np.min(np.max(np.abs(tie_points - theta), axis=1))))
    med_bias = float(np.median(bias_dists))
    med_match = float(np.median(match_dists))
    passed = (med_bias > min_dist) and (med_match <= match_steps * step)
    detail = (
        f"median distance from nominal {med_bias:.3f} (must exceed {min_dist:g}); "
        f"median distance to grid argmax set {med_match:.4f} "
        f"(allowed {match_steps * step:g}; ties {int(tie_mask.sum())}/{len(values)})"
    )
    return Verdict(f"bias_match[{index}]", passed, detail), [name, svg_name]


def _handle_tabular_tv(cfg, spec, index, trajs, fits, out, rng):
    P = cfg.system.P
    T = max(cfg.T_values)
    max_tv = float(spec["max_tv"])
    name = f"tabular_tv_{index}.csv"
    worst_per_seed = []
    with open(os.path.join(out, name), "w") as fh:
        fh.write("seed,state,action,tv,visited\n")
        for seed in cfg.seeds:
            fit = fits[(seed, T)]
            Q = fit.fitted_model.Q
            unvisited = set(fit.diagnostics["unvisited_phi"])
            worst = 0.0
            for s in range(cfg.n_states):
                for a in range(cfg.n_actions):
                    tv = 0.5 * float(np.abs(Q[s, a] - P[s, a]).sum())
                    visited = (s, a) not in unvisited
                    fh.write(f"{seed},{s},{a},{_fmt(tv)},{str(visited).lower()}\n")
                    if visited:
                        worst = max(worst, tv)
            worst_per_seed.append(worst)
    median = float(np.median(worst_per_seed))
    passed = median < max_tv
    return (
        Verdict(f"tabular_tv[{index}]", passed,
                f"median max TV over visited rows {median:.4f} vs bound {max_tv:g} at T={T}"),
        [name],
    )


def _handle_kl_bias(cfg, spec, index, trajs, fits, out, rng):
    max_bias = float(spec["max_bias"])
    name = f"kl_bias_{index}.csv"
    by_T = {T: [] for T in cfg.T_values}
    with open(os.path.join(out, name), "w") as fh:
        fh.write("seed,T,kl_bias\n")
        for seed in cfg.seeds:
            for T in cfg.T_values:
                bias = exact_kl_bias(cfg.system, fits[(seed, T)].fitted_model)
                by_T[T].append(bias)
                fh.write(f"{seed},{T},{_fmt(bias)}\n")
    T_max = max(cfg.T_values)
    median_final = float(np.median(by_T[T_max]))
    passed = median_final < max_bias
    detail = f"median bias {median_final:.3e} vs bound {max_bias:g} at T={T_max}"
    if spec.get("decreasing", False) and len(cfg.T_values) > 1:
        T_min = min(cfg.T_values)
        median_first = float(np.median(by_T[T_min]))
        passed = passed and median_final < median_first
        detail += f"; bias at T={T_min} was {median_first:.3e}"
    files = [name]
    if len(cfg.T_values) > 1:
        svg_name = f"kl_bias_{index}.svg"
        medians = [float(np.median(by_T[T])) for T in cfg.T_values]
        line_plot(
            os.path.join(out, svg_name),
            [(cfg.T_values, medians, "median KL bias")],
            title=f"{cfg.name}: KL bias vs T",
            xlabel="T",
            ylabel="KL bias",
            logy=all(m > 0 for m in medians),
        )
        files.append(svg_name)
    return Verdict(f"kl_bias[{index}]", passed, detail), files


def _handle_support(cfg, spec, index, trajs, fits, out, rng):
    expected = {tuple(int(v) for v in pair) for pair in spec["expected_zero_set"]}
    threshold = float(spec.get("threshold", 0.0))
    dist = stationary_distribution(cfg.system)
    result = support_check(dist, threshold)
    name = f"stationary_distribution_{index}.csv"
    mat = dist.as_matrix()
    with open(os.path.join(out, name), "w") as fh:
        fh.write("phi_state,phi_action,prob\n")
        for s in range(dist.n_states):
            for a in range(dist.n_actions):
                fh.write(f"{s},{a},{_fmt(mat[s, a])}\n")
    zero = set(result.zero_set)
    T_max = max(cfg.T_values)
    flagged_ok = all(
        set(fits[(seed, T_max)].diagnostics["unvisited_phi"]) == expected for seed in cfg.seeds
    )
    passed = (zero == expected) and flagged_ok
    detail = (
        f"zero set {sorted(zero)} (expected {sorted(expected)}); "
        f"fit flags match: {flagged_ok}; full support: {result.full_support}"
    )
    return Verdict(f"support[{index}]", passed, detail), [name]


def _handle_forgetting_decay(cfg, spec, index, trajs, fits, out, rng):
    s_values = [int(s) for s in spec["s_values"]]
    t_eval = int(spec["t_eval"])
    replications = int(spec["replications"])
    expect_exact = bool(spec.get("expect_exact_finite_memory", False))
    if cfg.model_kind == "tabular":
        model = TabularMarkovModel.from_row_weights(cfg.system.P, cfg.floor)
        thetas = [None]
    else:
        model = cfg.model
        thetas = [ParameterVector(np.asarray(v, dtype=np.float64), cfg.box) for v in spec["thetas"]]
    scenario = DecayScenario(
        system=cfg.system, model=model, thetas=thetas, burn_in=cfg.burn_in, init=cfg.init
    )
    report = estimate_forgetting_decay(scenario, s_values, t_eval, replications, rng)

    name = f"decay_{index}.csv"
    with open(os.path.join(out, name), "w") as fh:
        fh.write("theta_index,s,mean_sq_gap,stderr\n")
        for i in range(len(thetas)):
            for j, s in enumerate(report.s_values):
                fh.write(
                    f"{i},{int(s)},{_fmt(report.mean_sq_gaps[i, j])},{_fmt(report.stderrs[i, j])}\n"
                )
    files = [name]

    if expect_exact:
        passed = report.exact_finite_memory
        detail = f"exact finite memory: {report.exact_finite_memory}"
        return Verdict(f"forgetting_decay[{index}]", passed, detail), files

    svg_name = f"decay_{index}.svg"
    series = [
        (report.s_values, report.mean_sq_gaps[i], f"theta {i}")
        for i in range(len(thetas))
        if np.all(report.mean_sq_gaps[i] > 0)
    ]
    if series:
        line_plot(
            os.path.join(out, svg_name),
            series,
            title=f"{cfg.name}: forgetting decay",
            xlabel="window s",
            ylabel="mean squared gap",
            logy=True,
        )
        files.append(svg_name)
    lam_lo, lam_hi = (float(v) for v in spec["lambda_range"])
    min_r2 = float(spec["min_r_squared"])
    worst = report.worst
    passed = (
        worst is not None
        and lam_lo <= worst.lambda_hat <= lam_hi
        and worst.r_squared > min_r2
    )
    detail = (
        f"worst lambda {worst.lambda_hat:.4f} in [{lam_lo}, {lam_hi}], "
        f"r^2 {worst.r_squared:.4f} > {min_r2}"
        if worst is not None
        else "all gaps zero (unexpected exact finite memory)"
    )
    return Verdict(f"forgetting_decay[{index}]", passed, detail), files


def _handle_persistent_excitation(cfg, spec, index, trajs, fits, out, rng):
    result = persistent_excitation_check(
        cfg.system,
        u_lags=int(spec["u_lags"]),
        y_lags=int(spec["y_lags"]),
        T=int(spec["T"]),
        rng=rng,
        burn_in=cfg.burn_in,
    )
    name = f"pe_moment_{index}.csv"
    M = result.moment.matrix
    with open(os.path.join(out, name), "w") as fh:
        fh.write(",".join(f"phi{i}" for i in range(M.shape[0])) + "\n")
        for row in M:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    expected = bool(spec["expect_excited"])
    passed = result.verdict == expected
    if "min_eig_target" in spec:
        target = float(spec["min_eig_target"])
        tol = float(spec.get("min_eig_tol", 0.05))
        passed = passed and abs(result.moment.min_eigenvalue - target) <= tol
    detail = (
        f"verdict {result.verdict} (expected {expected}); "
        f"min eigenvalue {result.moment.min_eigenvalue:.4g}, threshold {result.threshold:.3g}"
    )
    return Verdict(f"persistent_excitation[{index}]", passed, detail), [name]


def _handle_drift(cfg, spec, index, trajs, fits, out, rng):
    T = int(spec["T"])
    n_windows = int(spec.get("n_windows", 2))
    report = stationarity_drift_check(
        cfg.system, n_windows=n_windows, T=T, rng=rng, burn_in=cfg.burn_in, init=cfg.init
    )
    name = f"drift_{index}.csv"
    with open(os.path.join(out, name), "w") as fh:
        fh.write("signal,window,mean,variance\n")
        for signal in ("u", "y"):
            for k in range(n_windows):
                fh.write(
                    f"{signal},{k},{_fmt(report.window_means[signal][k])},"
                    f"{_fmt(report.window_vars[signal][k])}\n"
                )
    passed = report.ok
    detail = "no drift flags" if report.ok else f"flags: {report.flags}"
    return Verdict(f"drift[{index}]", passed, detail), [name]


_DIAGNOSTIC_HANDLERS = {
    "estimation_error": _handle_estimation_error,
    "bias_match": _handle_bias_match,
    "tabular_tv": _handle_tabular_tv,
    "kl_bias": _handle_kl_bias,
    "support": _handle_support,
    "forgetting_decay": _handle_forgetting_decay,
    "persistent_excitation": _handle_persistent_excitation,
    "drift": _handle_drift,
}


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def render_report(manifest_path) -> str:
    """Summarize a finished run as plain text, citing its artifacts.

    Raises ``FileNotFoundError`` naming the first missing artifact.
    """
    with open(manifest_path) as fh:
        data = json.load(fh)
    out_dir = os.path.dirname(os.path.abspath(manifest_path))
    for name in data["artifacts"]:
        if not os.path.exists(os.path.join(out_dir, name)):
            raise FileNotFoundError(f"artifact missing: {name}")

    lines = []
    lines.append(f"scenario: {data['scenario']}")
    lines.append(f"config hash: {data['config_hash']}")
    lines.append(f"tool version: {data['tool_version']}")
    lines.append(f"seeds: {data['seeds']}   T values: {data['T_values']}")
    lines.append("")
    lines.append("verdicts:")
    for v in data["verdicts"]:
        status = "PASS" if v["passed"] else "FAIL"
        lines.append(f"  [{status}] {v['name']}: {v['detail']}")
    if not data["verdicts"]:
        lines.append("  (no diagnostics configured)")
    lines.append("")

    fits_path = os.path.join(out_dir, "fits.csv")
    if os.path.exists(fits_path):
        lines.append("estimates (fits.csv):")
        with open(fits_path) as fh:
            header = fh.readline().strip()
            lines.append("  " + header)
            for row in fh:
                lines.append("  " + row.strip())
        lines.append("")

    svgs = [a for a in data["artifacts"] if a.endswith(".svg")]
    if svgs:
        lines.append("figures: " + ", ".join(svgs))
    lines.append(f"total wall clock: {data['wall_clock_s'].get('total', 0.0)} s")
    return "\n".join(lines) + "\n"
