"""Points and dynamics on the projective space RP^{d-1}.

A point is stored as a unit vector with sign-quotient semantics: v and -v
denote the same point, and the canonical representative has its first
nonzero coordinate positive. On RP^1 the chart is the angle theta in
[0, pi) via (cos theta, sin theta).

The time-t flow of a linear mode is computed exactly as the projection of
e^{tA} v (renormalised), which solves the projected ODE
s' = (A - <s, As> I) s. Long bangs are split so each exponential stays in
its accuracy envelope, with the radial log-norm accumulated per piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrices
from .matrices import ModeSet, as_matrix
from .signals import DwellSignal, validate

# Below this magnitude a leading coordinate is treated as zero when picking
# the canonical sign.
_CANON_TOL = 1e-14

# A single exponential is trusted for ||tA|| up to this; longer bangs are
# split into equal sub-steps with renormalisation in between.
_BANG_NORM_LIMIT = 50.0


def _canonicalize(v: np.ndarray) -> np.ndarray:
    for x in v:
        if abs(x) > _CANON_TOL:
            return -v if x < 0 else v
    return v


@dataclass(frozen=True)
class ProjPoint:
    """Point of RP^{d-1} as a canonical unit vector."""

    v: np.ndarray

    def __init__(self, v):
        w = np.asarray(v, dtype=float).reshape(-1)
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise ValueError("need a finite nonzero vector")
        n = np.linalg.norm(w)
        if n == 0.0:
            raise ValueError("zero vector does not project to RP^{d-1}")
        w = _canonicalize(w / n)
        w.setflags(write=False)
        object.__setattr__(self, "v", w)

    @property
    def dim(self) -> int:
        return self.v.size

    @classmethod
    def from_angle(cls, theta: float) -> "ProjPoint":
        """RP^1 point at angle theta (taken mod pi)."""
        t = float(theta) % math.pi
        return cls(np.array([math.cos(t), math.sin(t)]))

    def angle(self) -> float:
        """Angle in [0, pi); only defined on RP^1."""
        if self.dim != 2:
            raise ValueError("angle chart is only defined for d=2")
        return float(math.atan2(self.v[1], self.v[0]) % math.pi)

    def __repr__(self) -> str:
        return f"ProjPoint({np.array2string(self.v, precision=6)})"


def proj_distance(s1: ProjPoint, s2: ProjPoint) -> float:
    """Metric on RP^{d-1}: the acute angle between the two lines, in
    [0, pi/2]. Computed as atan2(|rejection|, |<v1,v2>|), which is accurate
    where arccos of the inner product loses half the significant digits."""
    c = float(np.dot(s1.v, s2.v))
    rej = s2.v - c * s1.v
    return float(math.atan2(np.linalg.norm(rej), abs(c)))


def angular_velocity(a, s: ProjPoint) -> np.ndarray:
    """Tangent vector of the projected field at s: Av - <v, Av> v."""
    m = as_matrix(a)
    v = s.v
    av = m @ v
    return av - float(np.dot(v, av)) * v


def angular_speed(a, s: ProjPoint) -> float:
    """Signed angle derivative (v_perp . A v) in the RP^1 chart (d=2 only)."""
    if s.dim != 2:
        raise ValueError("angular speed is the d=2 chart coordinate of the field")
    m = as_matrix(a)
    v = s.v
    perp = np.array([-v[1], v[0]])
    return float(np.dot(perp, m @ v))


def _split_count(a: np.ndarray, t: float) -> int:
    norm = np.linalg.norm(t * a, 1)
    return max(1, int(np.ceil(norm / _BANG_NORM_LIMIT)))


def _flow_with_growth(a: np.ndarray, t: float, v: np.ndarray) -> tuple[float, np.ndarray]:
    """Propagate a unit vector through e^{tA}, returning (log-growth, unit image)."""
    k = _split_count(a, t)
    step = matrices.expm(a, t / k)
    log_norm = 0.0
    w = v
    for _ in range(k):
        w = step @ w
        n = np.linalg.norm(w)
        log_norm += math.log(n)
        w = w / n
    return log_norm, w


def proj_flow(a, t: float, s: ProjPoint) -> ProjPoint:
    """Exact time-t flow of the projected system for one constant mode."""
    m = as_matrix(a)
    if m.shape[0] != s.dim:
        raise ValueError("matrix and point dimension mismatch")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    _, w = _flow_with_growth(m, float(t), s.v)
    return ProjPoint(w)


def radial_log_growth(sig: DwellSignal, modes: ModeSet, x0: ProjPoint) -> tuple[float, ProjPoint]:
    """log ||Phi(T) x0|| and the endpoint direction, accumulated bang by bang.

    Per-bang renormalisation keeps intermediate norms far from overflow,
    so arbitrarily long signals are safe.
    """
    ok, offenders = validate(sig)
    if not ok:
        raise ValueError(f"signal violates its dwell time at merged bangs {offenders}")
    if modes.dim != x0.dim:
        raise ValueError("modes and start point dimension mismatch")
    total = 0.0
    w = x0.v
    for mode, duration in sig.bangs:
        if not 0 <= mode < len(modes):
            raise IndexError(f"mode index {mode} out of range")
        g, w = _flow_with_growth(modes[mode], duration, w)
        total += g
    return total, ProjPoint(w)
