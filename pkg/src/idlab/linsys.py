"""Shift-operator polynomial algebra and simulation of linear closed loops.

The data-generating system is

    y_t = G(q) u_t + H(q) e_t
    u_t = r_t - K(q) y_t

with ``G``, ``H``, ``K`` rational in the backward shift ``q^-1``, ``e_t`` and
``r_t`` white Gaussian.  ``G`` strictly proper breaks the algebraic loop:
each step computes ``y_t`` from past inputs/outputs and the current ``e_t``,
then ``u_t`` from ``r_t`` and ``K`` applied to outputs up to and including
``y_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import RngStream, Trajectory

__all__ = [
    "ShiftPolynomial",
    "RationalFilter",
    "LinearClosedLoopSystem",
    "UnstableSystemError",
    "stability_radius",
    "closed_loop_stability_radius",
    "simulate_linear_closed_loop",
    "respond_to_noise",
    "burn_in_length",
]


class UnstableSystemError(ValueError):
    """Raised when an operation requires a stable (closed-loop) system."""


@dataclass(frozen=True, eq=False)
class ShiftPolynomial:
    """Polynomial ``c_0 + c_1 q^-1 + ... + c_n q^-n`` in the backward shift.

    Trailing zero coefficients are stripped on construction so the stored
    degree is the true degree (a lone zero constant is kept as ``[0.0]``).
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=np.float64))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        c = np.ascontiguousarray(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def c0(self) -> float:
        return float(self.coeffs[0])

    def __mul__(self, other: "ShiftPolynomial") -> "ShiftPolynomial":
        return ShiftPolynomial(np.convolve(self.coeffs, other.coeffs))

    def __add__(self, other: "ShiftPolynomial") -> "ShiftPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        out = np.zeros(n)
        out[: len(self.coeffs)] += self.coeffs
        out[: len(other.coeffs)] += other.coeffs
        return ShiftPolynomial(out)

    @classmethod
    def one(cls) -> "ShiftPolynomial":
        return cls(np.array([1.0]))


def _poly(p) -> ShiftPolynomial:
    return p if isinstance(p, ShiftPolynomial) else ShiftPolynomial(np.asarray(p, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class RationalFilter:
    """Proper rational fraction ``num(q) / den(q)`` of shift polynomials."""

    num: ShiftPolynomial
    den: ShiftPolynomial

    def __post_init__(self):
        object.__setattr__(self, "num", _poly(self.num))
        object.__setattr__(self, "den", _poly(self.den))
        if self.den.c0 == 0.0:
            raise ValueError("denominator constant term must be nonzero (properness)")

    @classmethod
    def from_coeffs(cls, num, den=(1.0,)) -> "RationalFilter":
        return cls(_poly(num), _poly(den))

    @classmethod
    def constant(cls, value: float) -> "RationalFilter":
        return cls(_poly([float(value)]), ShiftPolynomial.one())

    @classmethod
    def zero(cls) -> "RationalFilter":
        return cls.constant(0.0)

    @property
    def strictly_proper(self) -> bool:
        return self.num.c0 == 0.0

    @property
    def is_monic(self) -> bool:
        return self.num.c0 == 1.0 and self.den.c0 == 1.0


def stability_radius(p) -> float:
    """Largest root modulus of ``c_0 z^n + c_1 z^(n-1) + ... + c_n``.

    Equivalently the spectral radius of the poles of ``1/p`` in ``q^-1``.
    Roots come from the balanced companion matrix (``numpy.roots``); degree-0
    polynomials have no roots and return 0.
    """
    p = _poly(p)
    if p.c0 == 0.0:
        raise ValueError("leading (constant) coefficient must be nonzero")
    if p.degree == 0:
        return 0.0
    roots = np.roots(p.coeffs)
    return float(np.max(np.abs(roots)))


@dataclass(frozen=True, eq=False)
class LinearClosedLoopSystem:
    """Closed loop ``y = G u + H e``, ``u = r - K y`` with white Gaussian e, r.

    ``G`` must be strictly proper (no algebraic loop), ``H`` monic and
    minimum-phase so its inverse is a stable filter; ``K`` may act on ``y_t``
    instantaneously.  Closed-loop stability is not enforced here: query it
    with :func:`closed_loop_stability_radius` (simulation refuses unstable
    loops).
    """

    G: RationalFilter
    H: RationalFilter
    K: RationalFilter
    sigma_e: float
    sigma_r: float = 0.0

    def __post_init__(self):
        if not self.G.strictly_proper:
            raise ValueError("G must be strictly proper (num.c0 == 0)")
        if not self.H.is_monic:
            raise ValueError("H must be monic (num.c0 == den.c0 == 1)")
        if stability_radius(self.H.num) >= 1.0:
            raise ValueError("H must be minimum-phase (numerator roots inside the unit circle)")
        if self.sigma_e <= 0.0:
            raise ValueError("sigma_e must be positive")
        if self.sigma_r < 0.0:
            raise ValueError("sigma_r must be nonnegative")


def closed_loop_stability_radius(sys: LinearClosedLoopSystem) -> float:
    """Spectral radius of the closed-loop characteristic polynomial.

    The loop transfer functions share the denominator
    ``(Ag*Ak + Bg*Bk) * Ah`` where ``G = Bg/Ag``, ``H = Bh/Ah``, ``K = Bk/Ak``.
    No factors are cancelled, so pole-zero pairs on the unit circle show up
    as radius >= 1 instead of silently disappearing.
    """
    char = (sys.G.den * sys.K.den + sys.G.num * sys.K.num) * sys.H.den
    return stability_radius(char)


def burn_in_length(sys: LinearClosedLoopSystem, tol: float = 1e-8) -> int:
    """Steps until the zero-state transient decays below ``tol``.

    ``ceil(log(tol)/log(rho))`` with ``rho`` the closed-loop stability
    radius, floored at 100 steps.
    """
    if tol <= 0.0 or tol >= 1.0:
        raise ValueError("tol must lie in (0, 1)")
    rho = closed_loop_stability_radius(sys)
    if rho >= 1.0:
        raise UnstableSystemError(f"closed loop is not stable (radius {rho:.6g})")
    if rho == 0.0:
        return 100
    return max(100, math.ceil(math.log(tol) / math.log(rho)))


def respond_to_noise(sys: LinearClosedLoopSystem, e: np.ndarray, r: np.ndarray):
    """Drive the closed-loop recursion with explicit noise sequences.

    Returns ``(u, y)`` for the zero-initial-condition response.  This is the
    deterministic seam used by coupled-noise diagnostics; stability is the
    caller's responsibility.
    """
    e = np.asarray(e, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if e.shape != r.shape or e.ndim != 1:
        raise ValueError("e and r must be 1-D arrays of equal length")
    T = len(e)

    bg = sys.G.num.coeffs.tolist()
    ag = sys.G.den.coeffs.tolist()
    bh = sys.H.num.coeffs.tolist()
    ah = sys.H.den.coeffs.tolist()
    bk = sys.K.num.coeffs.tolist()
    ak = sys.K.den.coeffs.tolist()
    nbg, nag, nbh, nah, nbk, nak = len(bg), len(ag), len(bh), len(ah), len(bk), len(ak)
    ag0, ah0, ak0 = ag[0], ah[0], ak[0]

    # Zero-padded histories avoid per-step boundary branches.
    P = max(nbg, nag, nbh, nah, nbk, nak)
    el = [0.0] * P + e.tolist()
    rl = r.tolist()
    u = [0.0] * (T + P)
    y = [0.0] * (T + P)
    gs = [0.0] * (T + P)
    hs = [0.0] * (T + P)
    ks = [0.0] * (T + P)

    for t in range(P, T + P):
        acc = 0.0
        for i in range(1, nbg):
            acc += bg[i] * u[t - i]
        for i in range(1, nag):
            acc -= ag[i] * gs[t - i]
        gt = acc / ag0
        acc = bh[0] * el[t]
        for i in range(1, nbh):
            acc += bh[i] * el[t - i]
        for i in range(1, nah):
            acc -= ah[i] * hs[t - i]
        ht = acc / ah0
        yt = gt + ht
        gs[t] = gt
        hs[t] = ht
        y[t] = yt
        acc = bk[0] * yt
        for i in range(1, nbk):
            acc += bk[i] * y[t - i]
        for i in range(1, nak):
            acc -= ak[i] * ks[t - i]
        kt = acc / ak0
        ks[t] = kt
        u[t] = rl[t - P] - kt

    return np.array(u[P:]), np.array(y[P:])


def simulate_linear_closed_loop(
    sys: LinearClosedLoopSystem,
    T: int,
    rng: RngStream,
    burn_in: int = 0,
    e_rng: Optional[RngStream] = None,
    r_rng: Optional[RngStream] = None,
) -> Trajectory:
    """Sample ``(u_{1:T}, y_{1:T})`` after discarding ``burn_in`` steps.

    ``e_t`` and ``r_t`` are drawn i.i.d. Gaussian from two independent
    substreams of ``rng`` (override with ``e_rng``/``r_rng`` to share one
    noise source across runs).  The returned trajectory carries
    ``t0 = burn_in + 1``.
    """
    if T < 1:
        raise ValueError("T must be positive")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    rho = closed_loop_stability_radius(sys)
    if rho >= 1.0:
        raise UnstableSystemError(f"closed loop is not stable (radius {rho:.6g})")
    total = T + burn_in
    if total > 2**40:
        raise ValueError("T + burn_in too large")
    e_rng = e_rng if e_rng is not None else rng.substream(0)
    r_rng = r_rng if r_rng is not None else rng.substream(1)
    e = sys.sigma_e * e_rng.standard_normal(total)
    r = sys.sigma_r * r_rng.standard_normal(total)
    u, y = respond_to_noise(sys, e, r)
    return Trajectory(u=u[burn_in:], y=y[burn_in:], t0=burn_in + 1)
