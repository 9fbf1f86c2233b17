"""Piecewise-deterministic random switching on the projective space.

The chain Z_n = (Q_n, L_n) flows the point Q_n along mode L_n for a random
dwell U_{n+1} (a tau-shifted exponential), then draws the next label from
a transition matrix with zero diagonal. Two estimators of the exponential
growth rate chi along the process cross-validate each other:

* the time average of the accumulated radial log-growth, and
* a Monte-Carlo evaluation of the energy integral <theta, A theta> against
  the dwell-tilted occupation measure built from the empirical invariant
  histogram.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrices
from .matrices import ModeSet
from .projective import ProjPoint, _flow_with_growth
from .reach import GridSet, ReachConfig, transition_relation

_PI = math.pi


@dataclass(frozen=True)
class PdmpConfig:
    """Random switching process: modes, label transition matrix, dwell law.

    Dwell times are tau + Exp(rate). The transition matrix must be
    row-stochastic with zero diagonal and positive off-diagonal entries
    (a switch always changes the label).
    """

    modes: ModeSet
    transition: np.ndarray
    rate: float
    tau: float
    seed: int

    def __init__(self, modes: ModeSet, transition, rate: float, tau: float, seed: int):
        q = np.asarray(transition, dtype=float)
        m = len(modes)
        if m < 2:
            raise ValueError("need at least two modes")
        if q.shape != (m, m):
            raise ValueError(f"transition matrix must be {m}x{m}")
        if not np.all(np.isfinite(q)):
            raise ValueError("transition matrix has non-finite entries")
        if np.any(np.abs(np.diag(q)) > 0):
            raise ValueError("transition matrix must have zero diagonal")
        off = q[~np.eye(m, dtype=bool)]
        if np.any(off <= 0):
            raise ValueError("off-diagonal transition probabilities must be positive")
        if np.any(np.abs(q.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix rows must sum to 1")
        if not (rate > 0 and math.isfinite(rate)):
            raise ValueError("rate must be positive and finite")
        if not (tau > 0 and math.isfinite(tau)):
            raise ValueError("tau must be positive and finite")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "transition", q)
        object.__setattr__(self, "rate", float(rate))
        object.__setattr__(self, "tau", float(tau))
        object.__setattr__(self, "seed", int(seed))


@dataclass(frozen=True)
class PdmpTrace:
    """Sampled path: jump times, labels, points, cumulative log-growth."""

    jump_times: np.ndarray      # (n+1,), T_0 = 0
    labels: np.ndarray          # (n+1,) int
    points: np.ndarray          # (n+1, d) unit rows
    log_growth: np.ndarray      # (n+1,), log ||Psi_{T_k} x0||, starts at 0
    horizon: float

    @property
    def n_steps(self) -> int:
        return self.jump_times.size - 1

    def dwells(self) -> np.ndarray:
        return np.diff(self.jump_times)

    def growth_increments(self) -> np.ndarray:
        return np.diff(self.log_growth)

    def angles(self) -> np.ndarray:
        """RP^1 chart of the points (d=2 only)."""
        if self.points.shape[1] != 2:
            raise ValueError("angles are defined for d=2 only")
        return np.mod(np.arctan2(self.points[:, 1], self.points[:, 0]), _PI)


def sample_dwell(rate: float, tau: float, rng: np.random.Generator) -> float:
    """One dwell duration: tau plus an exponential of the given rate,
    drawn by inverse CDF. Mean is tau + 1/rate."""
    if not (rate > 0 and math.isfinite(rate)):
        raise ValueError("rate must be positive and finite")
    if not (tau >= 0 and math.isfinite(tau)):
        raise ValueError("tau must be >= 0 and finite")
    u = rng.random()
    return tau - math.log1p(-u) / rate


def simulate(cfg: PdmpConfig, n_steps: int, q0: ProjPoint | None = None,
             l0: int = 0) -> PdmpTrace:
    """Run the jump chain for n_steps jumps; deterministic given the seed."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    d = cfg.modes.dim
    if q0 is None:
        q0 = ProjPoint(np.ones(d))
    if q0.dim != d:
        raise ValueError("start point dimension mismatch")
    if not 0 <= l0 < len(cfg.modes):
        raise ValueError("start label out of range")

    rng = np.random.default_rng(cfg.seed)
    m = len(cfg.modes)
    times = np.zeros(n_steps + 1)
    labels = np.zeros(n_steps + 1, dtype=np.int64)
    points = np.zeros((n_steps + 1, d))
    growth = np.zeros(n_steps + 1)

    labels[0] = l0
    points[0] = q0.v
    w = q0.v
    for n in range(n_steps):
        u = sample_dwell(cfg.rate, cfg.tau, rng)
        g, w = _flow_with_growth(cfg.modes[labels[n]], u, w)
        times[n + 1] = times[n] + u
        growth[n + 1] = growth[n] + g
        points[n + 1] = w
        labels[n + 1] = rng.choice(m, p=cfg.transition[labels[n]])
    return PdmpTrace(jump_times=times, labels=labels, points=points,
                     log_growth=growth, horizon=float(times[-1]))


@dataclass(frozen=True)
class ChiEstimate:
    """Growth-rate estimate with a standard error."""

    value: float
    stderr: float
    n: int

    def agrees_with(self, other: "ChiEstimate", n_sigma: float = 3.0) -> bool:
        combined = math.hypot(self.stderr, other.stderr)
        return abs(self.value - other.value) <= n_sigma * combined


def chi_time_average(trace: PdmpTrace, n_batches: int = 30) -> ChiEstimate:
    """Accumulated radial log-growth per unit time, with a batch-means
    standard error over contiguous jump batches."""
    if trace.horizon <= 0:
        raise ValueError("trace has zero horizon")
    value = float(trace.log_growth[-1] / trace.horizon)
    inc = trace.growth_increments()
    dt = trace.dwells()
    k = min(n_batches, inc.size)
    batches_g = np.array_split(inc, k)
    batches_t = np.array_split(dt, k)
    rates = np.array([bg.sum() / bt.sum() for bg, bt in zip(batches_g, batches_t)])
    stderr = float(rates.std(ddof=1) / math.sqrt(k)) if k > 1 else math.inf
    return ChiEstimate(value=value, stderr=stderr, n=inc.size)


def chi_per_jump(trace: PdmpTrace) -> ChiEstimate:
    """Mean log-growth per jump (the discrete-chain growth rate)."""
    inc = trace.growth_increments()
    value = float(inc.mean())
    stderr = float(inc.std(ddof=1) / math.sqrt(inc.size)) if inc.size > 1 else math.inf
    return ChiEstimate(value=value, stderr=stderr, n=inc.size)


# ---------------------------------------------------------------------------
# Invariant measure histogram


@dataclass(frozen=True)
class MeasureHistogram:
    """Counts of (position bin, label) over the post-burn-in chain.

    For d=2 the bins are uniform angle cells over [0, pi); for d=3 they are
    nearest-neighbour cells of a fixed Fibonacci point cloud on RP^2 whose
    representative directions are stored in cloud."""

    n_bins: int
    counts: np.ndarray          # (n_bins, m)
    total: int
    dim: int
    cloud: np.ndarray | None = None

    def probabilities(self) -> np.ndarray:
        return self.counts / max(1, self.total)

    def angle_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=1) / max(1, self.total)

    def bin_width(self) -> float:
        if self.dim != 2:
            raise ValueError("angle bins are defined for d=2 only")
        return _PI / self.n_bins


def _fibonacci_cloud(n_bins: int) -> np.ndarray:
    """Point cloud on the upper hemisphere representing RP^2 bins."""
    i = np.arange(n_bins)
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    z = (i + 0.5) / n_bins  # upper hemisphere only: z in (0, 1)
    r = np.sqrt(1.0 - z * z)
    ang = 2.0 * _PI * i / phi
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), z])


def _bin_of_points(points: np.ndarray, n_bins: int, dim: int,
                   cloud: np.ndarray | None) -> np.ndarray:
    if dim == 2:
        ang = np.mod(np.arctan2(points[:, 1], points[:, 0]), _PI)
        return np.minimum((ang / (_PI / n_bins)).astype(np.int64), n_bins - 1)
    return np.argmax(np.abs(points @ cloud.T), axis=1)


def invariant_histogram(trace: PdmpTrace, burn_in: int, n_bins: int) -> MeasureHistogram:
    """Histogram of (Q_n, L_n) for n > burn_in."""
    if burn_in >= trace.n_steps:
        raise ValueError("burn_in must be below the number of steps")
    if n_bins < 1:
        raise ValueError("need at least one bin")
    d = trace.points.shape[1]
    if d not in (2, 3):
        raise ValueError("histograms are supported for d=2 and d=3")
    cloud = _fibonacci_cloud(n_bins) if d == 3 else None
    pts = trace.points[burn_in + 1:]
    labs = trace.labels[burn_in + 1:]
    m = int(trace.labels.max()) + 1
    bins = _bin_of_points(pts, n_bins, d, cloud)
    counts = np.zeros((n_bins, m), dtype=np.int64)
    np.add.at(counts, (bins, labs), 1)
    return MeasureHistogram(n_bins=n_bins, counts=counts, total=int(counts.sum()),
                            dim=d, cloud=cloud)


# ---------------------------------------------------------------------------
# Energy-integral estimator of chi


def _expm_2x2_apply(a: np.ndarray, t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """e^{tA} v for a single 2x2 A, vectorised over times t and start
    vectors v (rows), up to the radial factor e^{mu t}. Callers only use
    directions and energy ratios, and dropping the factor avoids overflow.

    With Delta = A - mu I traceless, Delta^2 = om^2 I, so
    e^{t Delta} = cosh(om t) I + t sinhc(om t) Delta, om possibly imaginary.
    """
    mu = 0.5 * (a[0, 0] + a[1, 1])
    delta = a - mu * np.eye(2)
    om = np.sqrt(complex(delta[0, 0] ** 2 + delta[0, 1] * delta[1, 0]))
    ot = om * np.asarray(t)
    c = np.cosh(ot)
    small = np.abs(ot) < 1e-6
    safe = np.where(small, 1.0, ot)
    sinhc = np.where(small, 1.0 + ot * ot / 6.0, np.sinh(safe) / safe)
    dv = v @ delta.T
    res = c[:, None] * v + (sinhc * np.asarray(t))[:, None] * dv
    return np.real(res)


def _energy(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """<y, A y> / <y, y> row-wise."""
    ay = y @ a.T
    num = np.einsum("ij,ij->i", y, ay)
    den = np.einsum("ij,ij->i", y, y)
    return num / den


def _eig_apply(a: np.ndarray, t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """e^{tA} v for d >= 3, vectorised over times, radial scale dropped.

    Eigendecomposition when the eigenbasis is well conditioned; defective
    or near-defective modes fall back to one exponential per node."""
    lam, vec = np.linalg.eig(a)
    if np.linalg.cond(vec) < 1e10:
        lam = lam - np.max(lam.real)  # drop common radial growth
        coeff = np.linalg.solve(vec, v.T)  # (d, n)
        scaled = np.exp(np.outer(lam, t)) * coeff
        return np.real((vec @ scaled).T)
    shift = float(np.max(lam.real))
    out = np.empty_like(v)
    for j, (tj, vj) in enumerate(zip(t, v)):
        w = matrices.expm(a - shift * np.eye(a.shape[0]), float(tj)) @ vj
        out[j] = w
    return out


def _flow_directions(a: np.ndarray, t: np.ndarray, v: np.ndarray) -> np.ndarray:
    if a.shape[0] == 2:
        return _expm_2x2_apply(a, t, v)
    return _eig_apply(a, t, v)


def draw_from_histogram(mu: MeasureHistogram, n: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample (theta, label) pairs from the empirical measure; angles are
    uniform within their bin for d=2."""
    if mu.total == 0:
        raise ValueError("empty histogram")
    p = mu.probabilities().reshape(-1)
    flat = rng.choice(p.size, size=n, p=p)
    bins = flat // mu.counts.shape[1]
    labels = flat % mu.counts.shape[1]
    if mu.dim == 2:
        h = mu.bin_width()
        ang = (bins + rng.random(n)) * h
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        pts = mu.cloud[bins]
    return pts, labels


def chi_integral(cfg: PdmpConfig, mu: MeasureHistogram, n_mc: int,
                 rng: np.random.Generator | int | None = None,
                 integrand: str = "energy", tol: float = 1e-8) -> ChiEstimate:
    """Monte-Carlo energy-integral estimate of the growth rate.

    Each sample draws (theta, i) from mu and a dwell s, integrates
    <theta(t), A_i theta(t)> over [0, s] along theta(t) = e^{t A_i} theta
    (adaptive Simpson refinement to the given absolute tolerance), and the
    mean is scaled by rate/(tau*rate + 1). With integrand="one" the
    integrand is replaced by 1, which must return 1.0 up to Monte-Carlo
    error: the occupation measure is a probability measure.
    """
    if integrand not in ("energy", "one"):
        raise ValueError("integrand must be 'energy' or 'one'")
    if n_mc < 2:
        raise ValueError("need at least two samples")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(cfg.seed + 1 if rng is None else rng)

    pts, labels = draw_from_histogram(mu, n_mc, rng)
    s = cfg.tau - np.log1p(-rng.random(n_mc)) / cfg.rate

    integrals = np.empty(n_mc)
    if integrand == "one":
        integrals[:] = s
    else:
        for i in range(len(cfg.modes)):
            sel = np.nonzero(labels == i)[0]
            if sel.size == 0:
                continue
            integrals[sel] = _simpson_adaptive(cfg.modes[i], pts[sel], s[sel], tol)

    scale = cfg.rate / (cfg.tau * cfg.rate + 1.0)
    vals = scale * integrals
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_mc))
    return ChiEstimate(value=value, stderr=stderr, n=n_mc)


def _simpson_panel(a: np.ndarray, pts: np.ndarray, s: np.ndarray,
                   panels: int) -> np.ndarray:
    """Composite Simpson of the energy along the flow, one value per sample."""
    k = 2 * panels  # even number of intervals
    out = np.zeros(s.size)
    # nodes at fractions j/k of each sample's own interval [0, s]
    weights = np.ones(k + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    for j in range(k + 1):
        t = s * (j / k)
        y = _flow_directions(a, t, pts)
        out += weights[j] * _energy(a, y)
    return out * (s / k) / 3.0


def _simpson_adaptive(a: np.ndarray, pts: np.ndarray, s: np.ndarray,
                      tol: float, max_panels: int = 256) -> np.ndarray:
    vals = _simpson_panel(a, pts, s, 4)
    panels = 8
    result = vals.copy()
    active = np.arange(s.size)
    while active.size and panels <= max_panels:
        refined = _simpson_panel(a, pts[active], s[active], panels)
        err = np.abs(refined - vals[active])
        result[active] = refined
        keep = err > tol
        vals[active] = refined
        active = active[keep]
        panels *= 2
    return result


# ---------------------------------------------------------------------------
# Occupation-measure support check


@dataclass(frozen=True)
class NuSupportReport:
    outside_fraction: float
    n_samples: int
    thickened: GridSet


def thicken_by_flow(d_set: GridSet, modes: ModeSet, tau: float) -> GridSet:
    """Cells reached from the set by flowing any single mode for t in [0, tau]."""
    cfg = ReachConfig(tau=0.0, t_max=max(tau, 1e-9), n_durations=8, n=d_set.n)
    t = transition_relation(modes, cfg)
    return GridSet(d_set.n, d_set.mask | t[d_set.mask].any(axis=0))


def nu_support_check(cfg: PdmpConfig, trace: PdmpTrace, d_set: GridSet,
                     n_samples: int = 20000, burn_in: int | None = None,
                     rng: np.random.Generator | int | None = None) -> NuSupportReport:
    """Fraction of occupation-measure samples outside the dwell-thickened
    control set.

    Samples are drawn exactly as in chi_integral, with the position
    recorded at a uniform time inside each sample's integration window;
    the thickened set flows every cell of d_set under every mode for
    t in [0, tau].
    """
    if cfg.modes.dim != 2:
        raise ValueError("support check runs on RP^1 grids (d=2)")
    if burn_in is None:
        burn_in = trace.n_steps // 10
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(cfg.seed + 2 if rng is None else rng)

    mu = invariant_histogram(trace, burn_in=burn_in, n_bins=d_set.n)
    pts, labels = draw_from_histogram(mu, n_samples, rng)
    s = cfg.tau - np.log1p(-rng.random(n_samples)) / cfg.rate
    t = s * rng.random(n_samples)

    thick = thicken_by_flow(d_set, cfg.modes, cfg.tau)
    outside = 0
    for i in range(len(cfg.modes)):
        sel = np.nonzero(labels == i)[0]
        if sel.size == 0:
            continue
        y = _flow_directions(cfg.modes[i], t[sel], pts[sel])
        ang = np.mod(np.arctan2(y[:, 1], y[:, 0]), _PI)
        cells = np.minimum((ang / (_PI / d_set.n)).astype(np.int64), d_set.n - 1)
        outside += int(np.sum(~thick.mask[cells]))
    return NuSupportReport(outside_fraction=outside / n_samples,
                           n_samples=n_samples, thickened=thick)
