"""Experiment configuration: TOML schema, validation, and canonical hashing.

A config declaratively composes a data-generating system, a model family,
an estimator, and a list of diagnostics with verdict thresholds.  Everything
is validated up front with field-path error messages; nothing simulates until
the whole config is coherent.  The config hash is taken over the parsed
structure (canonical JSON, sorted keys), so semantically equal files hash
equally regardless of key order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Union

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .core import ParameterVector
from .linsys import LinearClosedLoopSystem, RationalFilter, closed_loop_stability_radius
from .markov import ControlledMarkovChain
from .models import ArmaxStructure, ArxStructure, GaussianPredictorModel

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_hash"]

_ESTIMATOR_METHODS = ("least_squares", "projected_gradient", "tabular_counts")
_DIAGNOSTIC_KINDS = (
    "estimation_error",
    "bias_match",
    "tabular_tv",
    "kl_bias",
    "support",
    "forgetting_decay",
    "persistent_excitation",
    "drift",
)


class ConfigError(ValueError):
    """A config failed validation; the message names the offending field."""


def _req(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}: missing required field")
    return table[key]


def _coeffs(value, path: str) -> list:
    if not isinstance(value, list) or not value or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    return [float(v) for v in value]


def _check_prob_rows(rows: np.ndarray, path: str) -> None:
    sums = rows.sum(axis=-1)
    flat = np.argwhere(np.abs(sums - 1.0) > 1e-12)
    if flat.size:
        idx = tuple(int(i) for i in flat[0])
        label = path + "".join(f"[{i}]" for i in idx)
        raise ConfigError(f"{label}: row sums to {float(sums[tuple(flat[0])])!r}, expected 1")
    if np.any(rows < 0.0) or np.any(rows > 1.0):
        raise ConfigError(f"{path}: probabilities must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated experiment description plus the raw parsed structure."""

    name: str
    seeds: List[int]
    output_dir: Optional[str]
    write_trajectories: bool
    system_kind: str
    system: Union[LinearClosedLoopSystem, ControlledMarkovChain]
    burn_in: Optional[int]            # linear systems
    init: Union[int, str]             # markov systems
    model_kind: str
    model: Optional[GaussianPredictorModel]
    box: Optional[np.ndarray]
    theta0: Optional[ParameterVector]
    n_states: Optional[int]
    n_actions: Optional[int]
    floor: float
    estimator_method: str
    T_values: List[int]
    diagnostics: List[dict]
    raw: dict


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form (stable under key reordering)."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_linear_system(table: dict):
    G = RationalFilter.from_coeffs(
        _coeffs(_req(table, "g_num", "system"), "system.g_num"),
        _coeffs(_req(table, "g_den", "system"), "system.g_den"),
    )
    H = RationalFilter.from_coeffs(
        _coeffs(_req(table, "h_num", "system"), "system.h_num"),
        _coeffs(_req(table, "h_den", "system"), "system.h_den"),
    )
    K = RationalFilter.from_coeffs(
        _coeffs(table.get("k_num", [0.0]), "system.k_num"),
        _coeffs(table.get("k_den", [1.0]), "system.k_den"),
    )
    try:
        sys = LinearClosedLoopSystem(
            G=G,
            H=H,
            K=K,
            sigma_e=float(_req(table, "sigma_e", "system")),
            sigma_r=float(table.get("sigma_r", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc
    radius = closed_loop_stability_radius(sys)
    if radius >= 1.0:
        raise ConfigError(f"system: closed loop is unstable (stability radius {radius:.6g})")
    burn_in = table.get("burn_in", "auto")
    if burn_in == "auto":
        burn_in = None
    elif not isinstance(burn_in, int) or burn_in < 0:
        raise ConfigError("system.burn_in: expected 'auto' or a nonnegative integer")
    return sys, burn_in


def _parse_markov_system(table: dict):
    P = np.asarray(_req(table, "transitions", "system"), dtype=np.float64)
    pi = np.asarray(_req(table, "policy", "system"), dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise ConfigError("system.transitions: expected shape [states][actions][states]")
    if pi.shape != P.shape[:2]:
        raise ConfigError("system.policy: expected shape [states][actions]")
    _check_prob_rows(P, "system.transitions")
    _check_prob_rows(pi, "system.policy")
    chain = ControlledMarkovChain(P=P, pi=pi)
    init = table.get("init", 0)
    if init != "stationary" and not isinstance(init, int):
        raise ConfigError("system.init: expected a state index or 'stationary'")
    if isinstance(init, int) and not (0 <= init < chain.n_states):
        raise ConfigError(f"system.init: state {init} outside [0, {chain.n_states})")
    return chain, init


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML structure into an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a table at top level")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("name: missing or empty scenario name")
    seeds = raw.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds: expected a nonempty list of integers")
    output_dir = raw.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("output_dir: expected a string path")
    write_trajectories = bool(raw.get("write_trajectories", False))

    system_table = raw.get("system")
    if not isinstance(system_table, dict):
        raise ConfigError("system: missing [system] table")
    system_kind = system_table.get("kind")
    if system_kind == "linear":
        system, burn_in = _parse_linear_system(system_table)
        init = 0
    elif system_kind == "markov":
        system, init = _parse_markov_system(system_table)
        burn_in = None
    else:
        raise ConfigError("system.kind: expected 'linear' or 'markov'")

    model_table = raw.get("model")
    if not isinstance(model_table, dict):
        raise ConfigError("model: missing [model] table")
    model_kind = model_table.get("kind")
    model = None
    box = None
    theta0 = None
    n_states = n_actions = None
    floor = float(model_table.get("floor", 1e-6))
    if model_kind in ("arx", "armax"):
        if system_kind != "linear":
            raise ConfigError("model.kind: continuous models need a linear system")
        sigma = float(_req(model_table, "sigma", "model"))
        if model_kind == "arx":
            structure = ArxStructure(
                int(_req(model_table, "n_a", "model")), int(_req(model_table, "n_b", "model"))
            )
        else:
            structure = ArmaxStructure(
                int(_req(model_table, "n_a", "model")),
                int(_req(model_table, "n_b", "model")),
                int(_req(model_table, "n_c", "model")),
            )
        try:
            model = GaussianPredictorModel(structure, sigma)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc
        box_raw = _req(model_table, "box", "model")
        box = np.asarray(box_raw, dtype=np.float64)
        if box.ndim != 2 or box.shape != (structure.n_params, 2):
            raise ConfigError(
                f"model.box: expected {structure.n_params} [lo, hi] pairs, got shape {box.shape}"
            )
        if np.any(box[:, 0] > box[:, 1]):
            raise ConfigError("model.box: lo must not exceed hi")
        theta0_raw = model_table.get("theta0")
        if theta0_raw is None:
            theta0_vals = box.mean(axis=1)
        else:
            theta0_vals = np.asarray(theta0_raw, dtype=np.float64)
            if theta0_vals.shape != (structure.n_params,):
                raise ConfigError("model.theta0: wrong number of entries")
        try:
            theta0 = ParameterVector(theta0_vals, box)
        except ValueError as exc:
            raise ConfigError(f"model.theta0: {exc}") from exc
    elif model_kind == "tabular":
        if system_kind != "markov":
            raise ConfigError("model.kind: tabular models need a markov system")
        n_states, n_actions = system.n_states, system.n_actions
        if floor <= 0.0 or floor * n_states > 1.0:
            raise ConfigError("model.floor: must satisfy 0 < floor <= 1/n_states")
    else:
        raise ConfigError("model.kind: expected 'arx', 'armax', or 'tabular'")

    est_table = raw.get("estimator")
    if not isinstance(est_table, dict):
        raise ConfigError("estimator: missing [estimator] table")
    method = est_table.get("method")
    if method not in _ESTIMATOR_METHODS:
        raise ConfigError(f"estimator.method: expected one of {_ESTIMATOR_METHODS}")
    if method == "tabular_counts" and model_kind != "tabular":
        raise ConfigError("estimator.method: tabular_counts requires a tabular model")
    if method in ("least_squares",) and model_kind != "arx":
        raise ConfigError("estimator.method: least_squares requires an arx model")
    if method == "projected_gradient" and model_kind == "tabular":
        raise ConfigError("estimator.method: projected_gradient requires a continuous model")
    T_raw = _req(est_table, "T", "estimator")
    T_values = T_raw if isinstance(T_raw, list) else [T_raw]
    if not T_values or not all(isinstance(T, int) and T > 0 for T in T_values):
        raise ConfigError("estimator.T: expected a positive integer or list of them")
    T_values = sorted(set(T_values))

    diag_raw = raw.get("diagnostics", [])
    if not isinstance(diag_raw, list):
        raise ConfigError("diagnostics: expected an array of tables")
    diagnostics = []
    for i, entry in enumerate(diag_raw):
        path = f"diagnostics[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: expected a table")
        kind = entry.get("kind")
        if kind not in _DIAGNOSTIC_KINDS:
            raise ConfigError(f"{path}.kind: expected one of {_DIAGNOSTIC_KINDS}")
        _validate_diagnostic(kind, entry, path, model_kind, system_kind)
        diagnostics.append(dict(entry))

    return ExperimentConfig(
        name=name,
        seeds=list(seeds),
        output_dir=output_dir,
        write_trajectories=write_trajectories,
        system_kind=system_kind,
        system=system,
        burn_in=burn_in,
        init=init,
        model_kind=model_kind,
        model=model,
        box=box,
        theta0=theta0,
        n_states=n_states,
        n_actions=n_actions,
        floor=floor,
        estimator_method=method,
        T_values=T_values,
        diagnostics=diagnostics,
        raw=raw,
    )


def _validate_diagnostic(kind: str, entry: dict, path: str, model_kind: str, system_kind: str) -> None:
    def need(key, types=(int, float), allow_list=False):
        if key not in entry:
            raise ConfigError(f"{path}.{key}: missing required field")
        value = entry[key]
        if allow_list:
            if not isinstance(value, list):
                raise ConfigError(f"{path}.{key}: expected a list")
        elif not isinstance(value, types) or isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: unexpected type {type(value).__name__}")

    if kind == "estimation_error":
        need("true_theta", allow_list=True)
        need("max_inf_error")
    elif kind == "bias_match":
        if model_kind != "arx":
            raise ConfigError(f"{path}: bias_match needs an arx model")
        need("true_theta", allow_list=True)
        need("min_inf_distance")
        need("grid_step")
        need("oracle_T", types=(int,))
        need("match_steps", types=(int,))
    elif kind in ("tabular_tv", "kl_bias"):
        if model_kind != "tabular":
            raise ConfigError(f"{path}: {kind} needs a tabular model")
        need("max_tv" if kind == "tabular_tv" else "max_bias")
    elif kind == "support":
        if system_kind != "markov":
            raise ConfigError(f"{path}: support needs a markov system")
        need("expected_zero_set", allow_list=True)
    elif kind == "forgetting_decay":
        need("s_values", allow_list=True)
        need("t_eval", types=(int,))
        need("replications", types=(int,))
        if not entry.get("expect_exact_finite_memory", False):
            need("lambda_range", allow_list=True)
            need("min_r_squared")
            if model_kind == "tabular":
                raise ConfigError(f"{path}: tabular models have exact finite memory")
            need("thetas", allow_list=True)
    elif kind == "persistent_excitation":
        if system_kind != "linear":
            raise ConfigError(f"{path}: persistent_excitation needs a linear system")
        need("u_lags", types=(int,))
        need("y_lags", types=(int,))
        need("T", types=(int,))
        if "expect_excited" not in entry or not isinstance(entry["expect_excited"], bool):
            raise ConfigError(f"{path}.expect_excited: missing required boolean")
    elif kind == "drift":
        need("T", types=(int,))


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config file."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    return parse_config(raw)
