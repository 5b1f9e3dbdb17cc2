"""Shared domain types: observation spaces, trajectories, parameter boxes, RNG streams.

Every simulator and Monte-Carlo diagnostic in this package draws its randomness
through :class:`RngStream`, a counter-based (Philox) generator keyed by a
``(seed, stream_id)`` pair.  Distinct keys give statistically independent
streams, identical keys reproduce the same draw sequence bit-for-bit, and
substreams carve disjoint counter blocks out of the parent stream so that
replications can run in any order (or in parallel) without affecting results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "ObsSpace",
    "Trajectory",
    "RngStream",
    "make_rng",
    "ParameterVector",
    "ValidationIssue",
    "ValidationReport",
    "validate_trajectory",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

_TWO64 = 1 << 64


@dataclass(frozen=True)
class ObsSpace:
    """Observation space of a single signal.

    Either continuous (``R^dim``, 64-bit floats) or a finite alphabet
    ``{0, ..., alphabet_size - 1}`` (unsigned integer symbols).
    """

    kind: str
    dim: int = 1
    alphabet_size: int = 0

    def __post_init__(self):
        if self.kind not in ("continuous", "finite"):
            raise ValueError(f"unknown observation space kind {self.kind!r}")
        if self.kind == "continuous" and self.dim < 1:
            raise ValueError("continuous space needs dim >= 1")
        if self.kind == "finite" and self.alphabet_size < 2:
            raise ValueError("finite alphabet needs alphabet_size >= 2")

    @classmethod
    def continuous(cls, dim: int = 1) -> "ObsSpace":
        return cls(kind="continuous", dim=dim)

    @classmethod
    def finite(cls, alphabet_size: int) -> "ObsSpace":
        return cls(kind="finite", alphabet_size=alphabet_size)

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"


def _as_signal_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(np.float64)
    if arr.ndim not in (1, 2):
        raise ValueError(f"{name} must be a 1-D or 2-D array, got ndim={arr.ndim}")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Paired input/output sequences ``(u_{1:T}, y_{1:T})``.

    ``t0`` is the absolute time index of the first stored sample, so windowed
    evaluations can report absolute times after burn-in trimming.  Construction
    is permissive; :func:`validate_trajectory` performs the full invariant
    check and reports violations instead of raising.
    """

    u: np.ndarray
    y: np.ndarray
    t0: int = 1

    def __post_init__(self):
        object.__setattr__(self, "u", _as_signal_array(self.u, "u"))
        object.__setattr__(self, "y", _as_signal_array(self.y, "y"))
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def length(self) -> int:
        return len(self.y)


class RngStream:
    """Deterministic Philox-keyed random stream.

    The Philox key is exactly ``(seed mod 2**64, stream_id mod 2**64)``:
    identical pairs reproduce the same draws on every run and platform
    (for a fixed numpy version), distinct pairs are independent streams.

    ``substream(k)`` returns a stream over a disjoint block of the parent's
    counter space, so Monte-Carlo replications indexed by ``k`` are mutually
    independent and insensitive to evaluation order.  Two levels of
    substreams are supported (replication -> role), which is all this
    package uses.

    A stream is stateful and must be confined to one thread; all other types
    in this module are immutable values.
    """

    def __init__(self, seed: int, stream_id: int, _path: Tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        if len(self._path) > 2:
            raise ValueError("substream nesting deeper than 2 is not supported")
        key = np.array([self.seed % _TWO64, self.stream_id % _TWO64], dtype=np.uint64)
        hi = (self._path[0] + 1) % _TWO64 if len(self._path) >= 1 else 0
        lo = (self._path[1] + 1) % _TWO64 if len(self._path) >= 2 else 0
        counter = np.array([0, 0, lo, hi], dtype=np.uint64)
        self._generator = np.random.Generator(np.random.Philox(key=key, counter=counter))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def substream(self, k: int) -> "RngStream":
        """Independent child stream ``k``; insensitive to draws already made."""
        if k < 0:
            raise ValueError("substream index must be >= 0")
        return RngStream(self.seed, self.stream_id, self._path + (k,))

    def standard_normal(self, size=None) -> np.ndarray:
        return self._generator.standard_normal(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: Optional[int] = None, size=None) -> np.ndarray:
        return self._generator.integers(low, high, size)


def make_rng(seed: int, stream_id: int = 0) -> RngStream:
    """Create the deterministic random stream keyed by ``(seed, stream_id)``."""
    return RngStream(seed, stream_id)


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """A parameter value together with its compact box of admissible values.

    ``box`` is a ``(d, 2)`` array of per-coordinate ``[lo, hi]`` bounds; the
    bounds must be finite (compactness) and contain ``values`` coordinate-wise.
    """

    values: np.ndarray
    box: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        box = np.asarray(self.box, dtype=np.float64).reshape(-1, 2)
        if box.shape[0] != values.shape[0]:
            raise ValueError(
                f"box has {box.shape[0]} coordinate ranges for {values.shape[0]} values"
            )
        if not np.all(np.isfinite(box)):
            raise ValueError("box bounds must be finite")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("box must satisfy lo <= hi coordinate-wise")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must be finite")
        if np.any(values < box[:, 0]) or np.any(values > box[:, 1]):
            raise ValueError("parameter values must lie inside the box")
        values.setflags(write=False)
        box.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "box", box)

    @classmethod
    def clamped(cls, values, box) -> "ParameterVector":
        """Project ``values`` onto the box and wrap the result."""
        box_arr = np.asarray(box, dtype=np.float64).reshape(-1, 2)
        v = np.clip(np.asarray(values, dtype=np.float64).reshape(-1), box_arr[:, 0], box_arr[:, 1])
        return cls(v, box_arr)

    @property
    def lo(self) -> np.ndarray:
        return self.box[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.box[:, 1]

    @property
    def dim(self) -> int:
        return len(self.values)

    def project(self, values) -> np.ndarray:
        """Clamp an arbitrary vector onto this box (idempotent)."""
        return np.clip(np.asarray(values, dtype=np.float64).reshape(-1), self.lo, self.hi)

    def replace(self, values) -> "ParameterVector":
        return ParameterVector(values, self.box)


@dataclass(frozen=True)
class ValidationIssue:
    signal: str
    index: Optional[int]
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    issues: Tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues

    def __iter__(self):
        return iter(self.issues)

    def __len__(self):
        return len(self.issues)


def _validate_signal(arr: np.ndarray, space: ObsSpace, signal: str, issues: list) -> None:
    if space.is_continuous:
        width = arr.shape[1] if arr.ndim == 2 else 1
        if width != space.dim:
            issues.append(ValidationIssue(signal, None, "wrong-dimension",
                                          f"expected dim {space.dim}, got {width}"))
            return
        if arr.dtype.kind not in "f":
            issues.append(ValidationIssue(signal, None, "non-real",
                                          f"expected float values, got dtype {arr.dtype}"))
            return
        flat_bad = ~np.isfinite(arr if arr.ndim == 2 else arr[:, None])
        for idx in np.unique(np.nonzero(flat_bad)[0]):
            issues.append(ValidationIssue(signal, int(idx), "non-finite"))
    else:
        if arr.ndim != 1:
            issues.append(ValidationIssue(signal, None, "wrong-dimension",
                                          "finite-alphabet signals are scalar"))
            return
        if arr.dtype.kind not in "iu":
            issues.append(ValidationIssue(signal, None, "non-integer",
                                          f"expected integer symbols, got dtype {arr.dtype}"))
            return
        bad = (arr < 0) | (arr >= space.alphabet_size)
        for idx in np.nonzero(bad)[0]:
            issues.append(ValidationIssue(signal, int(idx), "out-of-alphabet",
                                          f"symbol {int(arr[idx])} outside [0, {space.alphabet_size})"))


def validate_trajectory(traj: Trajectory, in_space: ObsSpace, out_space: ObsSpace) -> ValidationReport:
    """Check a trajectory against its declared spaces.

    Violations (length mismatch, out-of-alphabet symbols, non-finite reals,
    dimension mismatches) become report entries; nothing raises.
    """
    issues: list = []
    if len(traj.u) != len(traj.y):
        issues.append(ValidationIssue("trajectory", None, "length-mismatch",
                                      f"len(u)={len(traj.u)}, len(y)={len(traj.y)}"))
    _validate_signal(traj.u, in_space, "u", issues)
    _validate_signal(traj.y, out_space, "y", issues)
    return ValidationReport(tuple(issues))


def _signal_columns(name: str, arr: np.ndarray) -> list:
    if arr.ndim == 1:
        return [name]
    return [f"{name}{j}" for j in range(arr.shape[1])]


def _format_value(x) -> str:
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    return repr(float(x))


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write ``t,u...,y...`` rows, one column per signal coordinate.

    Continuous values are written as shortest round-trip decimal floats,
    finite symbols as integers, so re-running a seeded experiment produces
    byte-identical files.
    """
    cols = ["t"] + _signal_columns("u", traj.u) + _signal_columns("y", traj.y)
    u2 = traj.u if traj.u.ndim == 2 else traj.u[:, None]
    y2 = traj.y if traj.y.ndim == 2 else traj.y[:, None]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(traj.y)):
            row = [str(traj.t0 + i)]
            row += [_format_value(v) for v in u2[i]]
            row += [_format_value(v) for v in y2[i]]
            fh.write(",".join(row) + "\n")


def trajectory_from_csv(path, in_space: ObsSpace, out_space: ObsSpace) -> Trajectory:
    """Read a trajectory written by :func:`trajectory_to_csv`."""
    with open(path, "r") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    n_u = sum(1 for c in header if c == "u" or (c.startswith("u") and c[1:].isdigit()))
    n_y = sum(1 for c in header if c == "y" or (c.startswith("y") and c[1:].isdigit()))
    if header[0] != "t" or n_u == 0 or n_y == 0:
        raise ValueError(f"unrecognized trajectory header {header!r}")
    t0 = int(rows[0][0]) if rows else 1
    u_dtype = np.float64 if in_space.is_continuous else np.int64
    y_dtype = np.float64 if out_space.is_continuous else np.int64
    u = np.array([[u_dtype(v) for v in r[1:1 + n_u]] for r in rows], dtype=u_dtype)
    y = np.array([[y_dtype(v) for v in r[1 + n_u:1 + n_u + n_y]] for r in rows], dtype=y_dtype)
    if n_u == 1:
        u = u[:, 0]
    if n_y == 1:
        y = y[:, 0]
    return Trajectory(u=u, y=y, t0=t0)
