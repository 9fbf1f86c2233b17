"""Attainable sets and invariant dwell-time control sets on RP^1.

Subsets of RP^1 are boolean masks over a uniform angular grid of [0, pi).
The one-bang relation "cell i can reach cell j with a single bang of some
admissible duration" is computed exactly up to cell rounding: for a fixed
2x2 mode the time-t flow is a monotone circle map and every point moves
monotonically in t (it cannot cross an equilibrium), so the image of a
cell over a whole duration interval is the arc bracketed by the endpoint
trajectories at the interval ends. Trajectory winding is tracked by
refining the duration grid so no step rotates more than pi/3.

Iterating the relation gives attainable sets; intersecting attainable
sets over all start cells (equivalently: the unique sink component of the
relation when it is reachable from everywhere) gives the invariant
dwell-time control set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .matrices import ModeSet, expm
from .projective import ProjPoint

# Arc endpoints are nudged inward by this angle before cells are marked, so
# an arc that only grazes a cell boundary (e.g. an equilibrium sitting
# exactly on a grid line) does not leak into the neighbouring cell.
_MARK_EPS = 1e-9

# Maximum rotation per internal sweep step; must stay below pi/2 for the
# unwrap of wrapped angles to be unambiguous.
_MAX_STEP_ANGLE = math.pi / 3

_PI = math.pi


@dataclass(frozen=True)
class GridSet:
    """Closed subset of RP^1 as a boolean mask over n uniform angle cells."""

    n: int
    mask: np.ndarray

    def __init__(self, n: int, mask):
        n = int(n)
        if n < 16:
            raise ValueError("grid resolution must be at least 16 cells")
        m = np.asarray(mask, dtype=bool).reshape(-1)
        if m.size != n:
            raise ValueError(f"mask length {m.size} != n {n}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "mask", m)

    @property
    def cell_width(self) -> float:
        return _PI / self.n

    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def cell_of(self, theta: float) -> int:
        i = int(math.floor((float(theta) % _PI) / self.cell_width))
        return min(i, self.n - 1)

    def contains_angle(self, theta: float) -> bool:
        return bool(self.mask[self.cell_of(theta)])

    def centers(self) -> np.ndarray:
        """Angles of the centers of the marked cells."""
        return (np.nonzero(self.mask)[0] + 0.5) * self.cell_width

    def components(self) -> list[np.ndarray]:
        """Connected runs of marked cells, circular at the pi ~ 0 seam."""
        idx = np.nonzero(self.mask)[0]
        if idx.size == 0:
            return []
        if idx.size == self.n:
            return [idx]
        runs: list[list[int]] = [[int(idx[0])]]
        for i in idx[1:]:
            if i == runs[-1][-1] + 1:
                runs[-1].append(int(i))
            else:
                runs.append([int(i)])
        if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == self.n - 1:
            runs[0] = runs.pop() + runs[0]
        return [np.array(r) for r in runs]

    def arcs(self) -> list[tuple[float, float]]:
        """Marked set as angle intervals (lo, hi), hi unwrapped past pi if
        the run crosses the seam."""
        h = self.cell_width
        out = []
        for run in self.components():
            lo = run[0] * h
            # runs from components() are listed in circular order
            length = len(run) * h
            out.append((lo, lo + length))
        return out

    def dilate(self, cells: int) -> "GridSet":
        """Grow the set by the given number of cells on each side."""
        m = self.mask.copy()
        for _ in range(cells):
            m = m | np.roll(m, 1) | np.roll(m, -1)
        return GridSet(self.n, m)

    def __or__(self, other: "GridSet") -> "GridSet":
        if self.n != other.n:
            raise ValueError("grid resolutions differ")
        return GridSet(self.n, self.mask | other.mask)

    def __and__(self, other: "GridSet") -> "GridSet":
        if self.n != other.n:
            raise ValueError("grid resolutions differ")
        return GridSet(self.n, self.mask & other.mask)

    def issubset(self, other: "GridSet") -> bool:
        return bool(np.all(~self.mask | other.mask))


@dataclass(frozen=True)
class ReachConfig:
    """Parameters of the grid reachability computation.

    t_max defaults to 10*(tau+1): projectivised linear flows approach their
    equilibria exponentially, so longer single bangs add nothing at grid
    resolution. max_depth defaults to 10*n.
    """

    tau: float
    t_max: float | None = None
    n_durations: int = 16
    max_depth: int | None = None
    n: int = 256

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise ValueError("tau must be finite and >= 0")
        if self.n < 16:
            raise ValueError("grid resolution must be at least 16")
        if self.n_durations < 2:
            raise ValueError("need at least 2 duration samples")
        if self.t_max is not None and not (self.t_max > self.tau):
            raise ValueError("t_max must exceed tau")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive")

    @property
    def effective_t_max(self) -> float:
        return self.t_max if self.t_max is not None else 10.0 * (self.tau + 1.0)

    @property
    def effective_max_depth(self) -> int:
        return self.max_depth if self.max_depth is not None else 10 * self.n


def duration_samples(cfg: ReachConfig) -> np.ndarray:
    """Geometric-plus-endpoint duration grid on [tau, t_max].

    Short bangs matter most near tau while long bangs saturate towards the
    mode equilibria, so the samples are geometric; tau and t_max are
    included exactly. For tau = 0 the grid starts at t_max * 1e-4 with 0
    prepended.
    """
    t_max = cfg.effective_t_max
    k = cfg.n_durations
    if cfg.tau > 0.0:
        r = (t_max / cfg.tau) ** (1.0 / (k - 1))
        grid = cfg.tau * r ** np.arange(k)
    else:
        lo = t_max * 1e-4
        r = (t_max / lo) ** (1.0 / max(1, k - 2)) if k > 2 else t_max / lo
        grid = np.concatenate([[0.0], lo * r ** np.arange(k - 1)])
    grid[0] = cfg.tau
    grid[-1] = t_max
    return grid


def _sweep_time_grid(cfg: ReachConfig, omega: float) -> np.ndarray:
    """Times 0..t_max visiting every duration sample exactly, refined so
    that no step can rotate by more than the unwrap limit."""
    checkpoints = np.unique(np.concatenate([[0.0], duration_samples(cfg)]))
    times = [0.0]
    for a, b in zip(checkpoints[:-1], checkpoints[1:]):
        pieces = max(1, int(math.ceil((b - a) * omega / _MAX_STEP_ANGLE)))
        times.extend(a + (b - a) * (j + 1) / pieces for j in range(pieces - 1))
        times.append(b)
    return np.array(times)


def _mode_sweep(a: np.ndarray, cfg: ReachConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per grid boundary j: (min, max) of the unwrapped image angle of
    boundary j over all bang durations in [tau, t_max]."""
    n = cfg.n
    h = _PI / n
    thetas = np.arange(n) * h
    w = np.vstack([np.cos(thetas), np.sin(thetas)])
    omega = float(np.linalg.norm(a, 2)) + 1e-12
    times = _sweep_time_grid(cfg, omega)

    # Boundaries sitting on an equilibrium of the projected field are held
    # fixed: the rounding of (cos, sin) puts them ~1e-16 off the true
    # equilibrium, and near a repelling one that offset is amplified
    # exponentially into a spurious drift across the grid line. A frozen
    # endpoint still brackets the swept arc from the repelled side.
    speed = -w[1] * (a[0, 0] * w[0] + a[0, 1] * w[1]) \
        + w[0] * (a[1, 0] * w[0] + a[1, 1] * w[1])
    frozen = np.abs(speed) <= 1e-12 * max(1.0, omega)

    unwrapped = thetas.copy()
    prev = thetas.copy()
    lo = hi = None
    if cfg.tau <= 0.0:  # duration 0 is admissible: include the identity image
        lo = unwrapped.copy()
        hi = unwrapped.copy()
    for i in range(1, times.size):
        step = expm(a, times[i] - times[i - 1])
        w = step @ w
        w = w / np.linalg.norm(w, axis=0)
        psi = np.mod(np.arctan2(w[1], w[0]), _PI)
        delta = np.mod(psi - prev + _PI / 2, _PI) - _PI / 2
        unwrapped = unwrapped + delta
        unwrapped[frozen] = thetas[frozen]
        prev = psi
        if times[i] >= cfg.tau:
            if lo is None:
                lo = unwrapped.copy()
                hi = unwrapped.copy()
            else:
                np.minimum(lo, unwrapped, out=lo)
                np.maximum(hi, unwrapped, out=hi)
    if lo is None:  # unreachable: the grid always visits tau and t_max > tau
        lo = unwrapped.copy()
        hi = unwrapped.copy()
    return lo, hi


def _mark_intervals(lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Boolean (n, n) rows: cells covered by the arc [lo_i, hi_i] (unwrapped,
    hi >= lo), with endpoints nudged inward by _MARK_EPS."""
    h = _PI / n
    width = hi - lo
    out = np.zeros((n, n), dtype=bool)

    full = width >= _PI - 1e-15
    out[full] = True

    tiny = (~full) & (width <= 2 * _MARK_EPS)
    if tiny.any():
        mid = np.mod((lo[tiny] + hi[tiny]) / 2.0, _PI)
        out[np.nonzero(tiny)[0], np.minimum((mid / h).astype(int), n - 1)] = True

    normal = ~(full | tiny)
    if normal.any():
        rows = np.nonzero(normal)[0]
        a = np.mod(lo[normal] + _MARK_EPS, _PI)
        b = np.mod(hi[normal] - _MARK_EPS, _PI)
        ia = np.minimum((a / h).astype(int), n - 1)
        ib = np.minimum((b / h).astype(int), n - 1)
        diff = np.zeros((rows.size, n + 1), dtype=np.int16)
        nowrap = ia <= ib
        r = np.arange(rows.size)
        diff[r[nowrap], ia[nowrap]] += 1
        diff[r[nowrap], ib[nowrap] + 1] -= 1
        wrap = ~nowrap
        diff[r[wrap], ia[wrap]] += 1
        diff[r[wrap], n] -= 1
        diff[r[wrap], 0] += 1
        diff[r[wrap], ib[wrap] + 1] -= 1
        out[rows] = np.cumsum(diff[:, :n], axis=1) > 0
    return out


_transition_cache: dict[tuple, np.ndarray] = {}


def transition_relation(modes: ModeSet, cfg: ReachConfig) -> np.ndarray:
    """One-bang cell relation: T[i, j] iff some mode and some admissible
    duration send part of cell i into cell j."""
    if modes.dim != 2:
        raise ValueError("grid reachability is implemented on RP^1 (2x2 modes) only")
    key = (modes.cache_key(), cfg)
    cached = _transition_cache.get(key)
    if cached is not None:
        return cached
    n = cfg.n
    t = np.zeros((n, n), dtype=bool)
    for a in modes:
        lo, hi = _mode_sweep(a, cfg)
        # cell i spans boundaries i..i+1; boundary n is boundary 0 lifted by pi
        cell_lo = lo
        cell_hi = np.concatenate([hi[1:], [hi[0] + _PI]])
        t |= _mark_intervals(cell_lo, cell_hi, n)
    t.setflags(write=False)
    if len(_transition_cache) > 32:
        _transition_cache.clear()
    _transition_cache[key] = t
    return t


def step_reach(g: GridSet, modes: ModeSet, cfg: ReachConfig) -> GridSet:
    """Grid over-approximation of the one-bang image of the marked set."""
    if g.is_empty():
        raise ValueError("cannot expand an empty grid set")
    if g.n != cfg.n:
        raise ValueError("grid set resolution does not match the config")
    t = transition_relation(modes, cfg)
    return GridSet(g.n, t[g.mask].any(axis=0))


def attainable(q0: ProjPoint, modes: ModeSet, cfg: ReachConfig) -> GridSet:
    """Fixed point of one-bang expansion from the cell of q0 (cell included)."""
    t = transition_relation(modes, cfg)
    mask = np.zeros(cfg.n, dtype=bool)
    mask[GridSet(cfg.n, mask).cell_of(q0.angle())] = True
    for _ in range(cfg.effective_max_depth):
        grown = mask | t[mask].any(axis=0)
        if np.array_equal(grown, mask):
            break
        mask = grown
    return GridSet(cfg.n, mask)


def _reflexive_closure(t: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure of a boolean relation by repeated
    squaring (float32 matmul does the boolean or-and product)."""
    n = t.shape[0]
    m = (t | np.eye(n, dtype=bool)).astype(np.float32)
    for _ in range(int(math.ceil(math.log2(n))) + 1):
        grown = ((m @ m) > 0.5).astype(np.float32)
        if np.array_equal(grown, m):
            break
        m = grown
    return m > 0.5


def ics_compute(modes: ModeSet, cfg: ReachConfig) -> list[GridSet]:
    """Invariant dwell-time control set candidates on RP^1.

    First intersects the attainable sets of all grid cells; a nonempty
    intersection is the unique invariant control set and is returned
    alone. Otherwise falls back to minimal invariant components: the
    strongly-connected components of the one-bang relation with no
    outgoing edges, each a candidate, ordered by first cell.

    Cell-level reachability composes through whole cells, so a cell
    straddling a one-sided mode equilibrium lets the iteration cross that
    equilibrium even though no single trajectory does. Aligning
    distinguished angles with grid lines (as the closed-form example does
    with its equilibria) avoids the blur; otherwise expect the result to
    be enlarged near such cells.
    """
    t = transition_relation(modes, cfg)
    closure = _reflexive_closure(t)
    intersection = closure.all(axis=0)
    if intersection.any():
        return [GridSet(cfg.n, intersection)]

    n_comp, labels = connected_components(csr_matrix(t), connection="strong")
    has_exit = np.zeros(n_comp, dtype=bool)
    src, dst = np.nonzero(t)
    cross = labels[src] != labels[dst]
    has_exit[labels[src[cross]]] = True
    sinks = [c for c in range(n_comp) if not has_exit[c]]
    out = [GridSet(cfg.n, labels == c) for c in sinks]
    out.sort(key=lambda g: int(np.nonzero(g.mask)[0][0]))
    return out


def interior_nonempty_check(q0: ProjPoint, modes: ModeSet, cfg: ReachConfig,
                            horizon: float) -> bool:
    """Proxy check that the time-bounded attainable set has interior.

    Uses at most floor(horizon/tau) bangs, the k-th bang capped at the time
    left after spending the dwell minimum on the others (an outer bound on
    the true time-bounded set), and reports True when the accumulated set
    contains a cell together with both its neighbours.
    """
    d = modes.dim
    if not horizon > d * cfg.tau:
        raise ValueError(f"need horizon > {d} * tau = {d * cfg.tau}")
    if cfg.tau > 0:
        max_bangs = min(int(math.floor(horizon / cfg.tau)), 64)
    else:
        max_bangs = 4
    acc = np.zeros(cfg.n, dtype=bool)
    acc[GridSet(cfg.n, acc).cell_of(q0.angle())] = True
    layer = acc.copy()
    for k in range(1, max_bangs + 1):
        cap = min(cfg.effective_t_max, horizon - (k - 1) * cfg.tau)
        if cap <= cfg.tau:
            break
        level_cfg = replace(cfg, t_max=cap)
        t = transition_relation(modes, level_cfg)
        layer = t[layer].any(axis=0)
        if not layer.any():
            break
        acc |= layer
        if bool((acc & np.roll(acc, 1) & np.roll(acc, -1)).any()):
            return True
    return bool((acc & np.roll(acc, 1) & np.roll(acc, -1)).any())


# ---------------------------------------------------------------------------
# Two-field example on the projective circle with a closed-form control set.


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


_NILPOTENT = np.array([[0.0, 1.0], [0.0, 0.0]])


def example31_modes(a: float, b: float) -> ModeSet:
    """Two projectivised double-integrator modes with equilibria at a and b.

    The first mode drives angles towards a (cot(psi - a) grows linearly in
    time), the second towards b from the other side (cot(psi - b) falls
    linearly). Their invariant control set has the closed form computed by
    example31_oracle.
    """
    if abs((a - b) % _PI) < 1e-12 or abs((a - b) % _PI - _PI) < 1e-12:
        raise ValueError("equilibria must be distinct on RP^1")
    f1 = _rotation(a) @ _NILPOTENT @ _rotation(a).T
    f2 = _rotation(b) @ (-_NILPOTENT) @ _rotation(b).T
    return ModeSet([f1, f2], labels=("to_a", "to_b"))


@dataclass(frozen=True)
class Example31Result:
    """Closed-form control-set data for the two-equilibria circle example."""

    a: float
    a_prime: float
    b_prime: float
    b: float
    tau: float
    tau_critical: float
    connected: bool
    arcs: tuple[tuple[float, float], ...]

    def mask(self, n: int) -> GridSet:
        """Cells intersecting the closed-form control set."""
        h = _PI / n
        m = np.zeros(n, dtype=bool)
        for lo, hi in self.arcs:
            if hi - lo >= _PI - 1e-15:
                m[:] = True
                continue
            a0 = (lo + _MARK_EPS) % _PI
            b0 = (hi - _MARK_EPS) % _PI
            ia, ib = min(int(a0 / h), n - 1), min(int(b0 / h), n - 1)
            if ia <= ib:
                m[ia:ib + 1] = True
            else:
                m[ia:] = True
                m[:ib + 1] = True
        return GridSet(n, m)


def _arccot(x: float) -> float:
    return math.atan2(1.0, x)


def example31_oracle(tau: float, a: float, b: float) -> Example31Result:
    """Closed-form invariant control set of the two-field circle example.

    The set is the union of the arc from a to a' = (flow of the first mode
    for time tau started at b) and the arc from b' (the symmetric point) to
    b. The two arcs merge into the single arc from a to b exactly below the
    critical dwell time, which is located by bisection to 1e-10.
    """
    if tau < 0 or not math.isfinite(tau):
        raise ValueError("tau must be finite and >= 0")
    a = float(a) % _PI
    b = float(b) % _PI
    chi = (b - a) % _PI
    if chi < 1e-12 or _PI - chi < 1e-12:
        raise ValueError("equilibria must be distinct on RP^1")

    def travel(t: float) -> float:
        # angular distance still separating a' from a after a bang of length t
        return _arccot(1.0 / math.tan(chi) + t) if chi != _PI / 2 else _arccot(t)

    w = travel(tau)
    a_prime = (a + w) % _PI
    b_prime = (b - w) % _PI

    # critical dwell time: the two moving endpoints meet at w = chi/2
    lo_t, hi_t = 0.0, 1.0
    while travel(hi_t) > chi / 2:
        hi_t *= 2.0
        if hi_t > 1e12:
            raise ArithmeticError("critical dwell time bisection failed to bracket")
    while hi_t - lo_t > 1e-10:
        mid = 0.5 * (lo_t + hi_t)
        if travel(mid) > chi / 2:
            lo_t = mid
        else:
            hi_t = mid
    tau_critical = 0.5 * (lo_t + hi_t)

    connected = w >= chi / 2
    if connected:
        arcs: tuple[tuple[float, float], ...] = ((a, a + chi),)
    else:
        arcs = ((a, a + w), (a + chi - w, a + chi))
    arcs = tuple((lo % _PI, (lo % _PI) + (hi - lo)) for lo, hi in arcs)
    return Example31Result(a=a, a_prime=a_prime, b_prime=b_prime, b=b, tau=tau,
                           tau_critical=tau_critical, connected=connected, arcs=arcs)
