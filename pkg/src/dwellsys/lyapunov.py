"""Estimators of the maximal growth rate of a dwell-time switched system.

Two independent routes:

* lambda_periodic searches periodic switching blocks and scores each block
  by log(spectral radius of its monodromy) / period. A real leading
  eigenvalue of the monodromy gives a direction whose projective
  trajectory is periodic with the block, so these scores are growth rates
  realised by admissible signals.
* lambda_random samples random dwell-admissible signals over a long
  horizon and measures the radial log-growth per unit time from the best
  canonical starting direction, then hill-climbs the best signal's
  durations.

The reduction helpers detect a common invariant subspace (the generated
matrix algebra has dimension d*d exactly when none exists) and split modes
into triangular blocks in a supplied invariant flag basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .matrices import ModeSet, expm, monodromy
from .signals import DwellSignal, PeriodicSignal, sample_random

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LyapEstimate:
    """Exponent estimate with the witness signal that realised it."""

    value: float
    method: str  # "random" | "periodic" | "single_mode_oracle"
    witness: DwellSignal | PeriodicSignal
    stderr: float | None = None
    budget: dict | None = None
    note: str | None = None
    history: tuple[tuple[float, float], ...] | None = None  # (budget, best) pairs

    def to_jsonable(self) -> dict:
        if isinstance(self.witness, PeriodicSignal):
            witness = {
                "period_block": {"tau": self.witness.period_block.tau,
                                 "bangs": [[m, d] for m, d in self.witness.period_block.bangs]},
                "x0": None if self.witness.x0 is None else list(map(float, self.witness.x0)),
            }
        else:
            witness = {"tau": self.witness.tau,
                       "bangs": [[m, d] for m, d in self.witness.bangs]}
        out = {"value": self.value, "method": self.method, "witness": witness,
               "stderr": self.stderr, "budget": self.budget}
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class IrreducibilityReport:
    algebra_dim: int
    is_irreducible: bool
    invariant_subspace_basis: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Periodization


def _necklaces(n_modes: int, length: int) -> list[tuple[int, ...]]:
    """Mode sequences up to cyclic rotation, no equal cyclic neighbours."""
    if length == 1:
        return [(i,) for i in range(n_modes)]
    out = []
    for seq in itertools.product(range(n_modes), repeat=length):
        if any(seq[i] == seq[(i + 1) % length] for i in range(length)):
            continue
        if min(seq[i:] + seq[:i] for i in range(length)) == seq:
            out.append(seq)
    return out


def _block_objective(mats: list[np.ndarray], seq: tuple[int, ...], durations) -> float:
    d = mats[0].shape[0]
    phi = np.eye(d)
    total = 0.0
    for mode, t in zip(seq, durations):
        phi = expm(mats[mode], t) @ phi
        total += t
    if total <= 0.0:
        return -math.inf
    rho = float(np.max(np.abs(np.linalg.eigvals(phi))))
    if rho <= 0.0:
        return -math.inf
    return math.log(rho) / total


def _golden_max(f, lo: float, hi: float, tol: float = 1e-6) -> tuple[float, float]:
    """Golden-section maximisation of a scalar function on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    x = 0.5 * (a + b)
    return x, f(x)


def lambda_periodic(modes: ModeSet, tau: float, max_bangs: int = 4,
                    duration_samples: int = 8, refine_iters: int = 3,
                    seed: int = 0, t_max: float | None = None,
                    warm_starts: list[tuple[tuple[int, ...], list[float]]] | None = None,
                    track_history: bool = False) -> LyapEstimate:
    """Best periodic-block growth rate log(rho(monodromy)) / period.

    Sequences up to max_bangs are enumerated exhaustively (quotiented by
    cyclic rotation, no repeated cyclic neighbours); durations start on a
    geometric grid over [tau, t_max] and the three best grid points per
    sequence are refined by per-coordinate golden-section ascent. Extra
    (sequence, durations) pairs in warm_starts join the refinement pool,
    which makes searches with nested duration ranges comparable.
    """
    if len(modes) == 0:
        raise ValueError("empty mode set")
    if tau < 0 or not math.isfinite(tau):
        raise ValueError("tau must be finite and >= 0")
    if t_max is None:
        t_max = 10.0 * (tau + 1.0)
    if t_max <= tau:
        raise ValueError("t_max must exceed tau")
    t_lo = tau if tau > 0 else 1e-9 * t_max
    mats = list(modes)

    # geometric duration grid, endpoints exact
    def dur_grid(k: int) -> np.ndarray:
        r = (t_max / t_lo) ** (1.0 / (k - 1))
        g = t_lo * r ** np.arange(k)
        g[0], g[-1] = t_lo, t_max
        return g

    evals = 0

    def obj(seq, durs) -> float:
        nonlocal evals
        evals += 1
        return _block_objective(mats, seq, durs)

    history: list[tuple[float, float]] = []
    candidates: list[tuple[float, tuple[int, ...], list[float]]] = []
    best_overall = -math.inf
    for length in range(1, max_bangs + 1):
        seqs = _necklaces(len(modes), length)
        if not seqs:
            continue
        # keep the initial scan around 20k evaluations per length
        per_coord = duration_samples if length == 1 else max(
            2, min(duration_samples, int(round((20000 / len(seqs)) ** (1.0 / length)))))
        grid = dur_grid(max(2, per_coord))
        for seq in seqs:
            scored = []
            for durs in itertools.product(grid, repeat=length):
                scored.append((obj(seq, durs), list(durs)))
            scored.sort(key=lambda p: -p[0])
            for val, durs in scored[:3]:
                candidates.append((val, seq, durs))
            if scored and scored[0][0] > best_overall:
                best_overall = scored[0][0]
            history.append((evals, best_overall))

    if warm_starts:
        for seq, durs in warm_starts:
            durs = [min(max(float(t), t_lo), t_max) for t in durs]
            candidates.append((obj(tuple(seq), durs), tuple(seq), durs))

    candidates.sort(key=lambda c: -c[0])
    best_val, best_seq, best_durs = candidates[0]
    for val, seq, durs in candidates[:max(3, len(modes))]:
        durs = list(durs)
        for _ in range(refine_iters):
            for i in range(len(durs)):
                def coord(x, i=i, durs=durs, seq=seq):
                    trial = durs.copy()
                    trial[i] = x
                    return obj(seq, trial)
                x, fx = _golden_max(coord, t_lo, t_max)
                if fx > obj(seq, durs):
                    durs[i] = x
        val = obj(seq, durs)
        if val > best_val:
            best_val, best_seq, best_durs = val, seq, durs
        history.append((evals, max(best_val, best_overall)))

    block = DwellSignal(list(zip(best_seq, best_durs)), tau)
    phi = monodromy(block, modes)
    eigvals, eigvecs = np.linalg.eig(phi)
    lead = int(np.argmax(np.abs(eigvals)))
    note = None
    x0 = None
    if abs(eigvals[lead].imag) <= 1e-9 * max(1.0, abs(eigvals[lead].real)):
        x0 = np.real(eigvecs[:, lead])
        x0 = x0 / np.linalg.norm(x0)
    else:
        # complex leading pair: the projective trajectory is only
        # approximately periodic; report the exponent, flag the witness
        note = "projective periodicity approximate (complex leading eigenvalue pair)"
    witness = PeriodicSignal(period_block=block, x0=x0)
    method = "single_mode_oracle" if len(best_seq) == 1 else "periodic"
    return LyapEstimate(
        value=best_val, method=method, witness=witness, stderr=None,
        budget={"max_bangs": max_bangs, "duration_samples": duration_samples,
                "refine_iters": refine_iters, "evaluations": evals, "t_max": t_max},
        note=note, history=tuple(history) if track_history else None)


# ---------------------------------------------------------------------------
# Random signal search


class _SignalScorer:
    """Growth per unit time of a signal, with per-bang flow matrices cached
    so a single-duration change only recomputes one exponential.

    The denominator is never below the sampling horizon: dividing raw
    growth by a short span would score transients instead of asymptotics,
    and hill-climbing would exploit that.
    """

    def __init__(self, modes: ModeSet, tau: float, horizon: float):
        self.modes = modes
        self.tau = tau
        self.horizon = horizon
        self.starts = np.eye(modes.dim)

    def _bang_matrix(self, mode: int, duration: float) -> tuple[np.ndarray, int]:
        a = self.modes[mode]
        k = max(1, int(np.ceil(np.linalg.norm(duration * a, 1) / 50.0)))
        return expm(a, duration / k), k

    def score(self, bangs: list[tuple[int, float]],
              cache: dict[int, tuple[np.ndarray, int]] | None = None) -> float:
        total = sum(d for _, d in bangs)
        if total <= 0:
            return -math.inf
        w = self.starts.copy()
        growth = np.zeros(w.shape[1])
        for i, (mode, duration) in enumerate(bangs):
            if cache is not None and i in cache:
                step, k = cache[i]
            else:
                step, k = self._bang_matrix(mode, duration)
                if cache is not None:
                    cache[i] = (step, k)
            for _ in range(k):
                w = step @ w
                norms = np.linalg.norm(w, axis=0)
                growth += np.log(norms)
                w = w / norms
        return float(np.max(growth)) / max(total, self.horizon)


def lambda_random(modes: ModeSet, tau: float, n_signals: int = 200,
                  horizon: float = 100.0, seed: int = 0,
                  max_extra: float | None = None, hill_climb_sweeps: int = 20,
                  workers: int = 1, track_history: bool = False) -> LyapEstimate:
    """Best growth rate over random dwell-admissible signals.

    Each signal is scored by the max over the canonical starting
    directions of radial log-growth per horizon time; the best signal's
    durations are then hill-climbed for a fixed number of sweeps
    (multiplicative trials per bang, each duration kept in [tau, horizon],
    total span kept at or above the horizon).
    """
    if horizon < 10.0 * (tau + 1.0):
        raise ValueError("horizon must be at least 10 * (tau + 1)")
    if n_signals < 1:
        raise ValueError("need at least one signal")
    if max_extra is None:
        max_extra = tau + 1.0
    scorer = _SignalScorer(modes, tau, horizon)

    if len(modes) == 1:
        n_signals = 1  # every sample is the same single-bang signal

    history: list[tuple[float, float]] = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(np.arange(n_signals), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_worker,
                                    [(modes, tau, horizon, seed, max_extra, c.tolist())
                                     for c in chunks]))
        best_val, best_sig = max(results, key=lambda p: p[0])
    else:
        running = -math.inf
        best_val, best_sig = -math.inf, None
        for i in range(n_signals):
            sig = sample_random(tau, len(modes), horizon, rng_seed=seed + i,
                                max_extra=max_extra)
            val = scorer.score(list(sig.bangs))
            if val > best_val:
                best_val, best_sig = val, sig
            if track_history and (i + 1) % max(1, n_signals // 50) == 0:
                running = max(running, best_val)
                history.append((float(i + 1), running))

    # Hill-climb durations. The total span must never drop below the
    # horizon: growth over a short span measures transients, not the
    # asymptotic rate, and shortening decaying signals would inflate the
    # score.
    bangs = list(best_sig.bangs)
    cache: dict[int, tuple[np.ndarray, int]] = {}
    best_val = scorer.score(bangs, cache)
    total = sum(d for _, d in bangs)
    factors = (0.5, 0.8, 1.25, 2.0)
    for sweep in range(hill_climb_sweeps):
        improved = False
        for i in range(len(bangs)):
            mode, duration = bangs[i]
            for f in factors:
                trial = min(max(duration * f, tau if tau > 0 else 1e-9), horizon)
                if trial == duration or total - duration + trial < horizon:
                    continue
                saved = cache.pop(i, None)
                bangs[i] = (mode, trial)
                val = scorer.score(bangs, cache)
                if val > best_val:
                    best_val = val
                    total += trial - duration
                    duration = trial
                    improved = True
                else:
                    bangs[i] = (mode, duration)
                    cache.pop(i, None)
                    if saved is not None:
                        cache[i] = saved
            bangs[i] = (mode, duration)
        if track_history:
            history.append((float(n_signals + sweep + 1), best_val))
        if not improved:
            break

    witness = DwellSignal(bangs, tau)
    return LyapEstimate(
        value=best_val, method="random", witness=witness, stderr=None,
        budget={"n_signals": n_signals, "horizon": horizon, "seed": seed,
                "max_extra": max_extra, "hill_climb_sweeps": hill_climb_sweeps},
        history=tuple(history) if track_history else None)


def _scan_worker(args):
    modes, tau, horizon, seed, max_extra, indices = args
    scorer = _SignalScorer(modes, tau, horizon)
    best = (-math.inf, None)
    for i in indices:
        sig = sample_random(tau, len(modes), horizon, rng_seed=seed + i,
                            max_extra=max_extra)
        val = scorer.score(list(sig.bangs))
        if val > best[0]:
            best = (val, sig)
    return best


# ---------------------------------------------------------------------------
# Irreducibility and block reduction


def is_irreducible(modes: ModeSet, tol: float = 1e-10,
                   extraction_attempts: int = 20, seed: int = 0) -> IrreducibilityReport:
    """Dimension of the generated matrix algebra and a common invariant
    subspace when one can be extracted.

    The span of all words in the modes (plus the identity) is grown with
    rank tracking by Gram-Schmidt; full dimension d*d means no common
    invariant subspace exists. When the algebra is a proper subalgebra,
    eigenspaces of random algebra elements are tested for joint invariance;
    extraction can fail (e.g. a lone rotation generator has no real
    invariant subspace even though its algebra is 2-dimensional), in which
    case no basis is returned.
    """
    d = modes.dim
    full = d * d

    basis: list[np.ndarray] = []  # orthonormal, flattened
    words: list[np.ndarray] = []

    def try_add(m: np.ndarray) -> bool:
        v = m.reshape(-1).astype(float)
        nv = np.linalg.norm(v)
        if nv <= tol:
            return False
        v = v / nv
        for b in basis:
            v = v - np.dot(b, v) * b
        nv = np.linalg.norm(v)
        if nv <= tol:
            return False
        basis.append(v / nv)
        words.append(m)
        return True

    try_add(np.eye(d))
    frontier = [np.eye(d)]
    for _ in range(full):
        new_frontier = []
        for w in frontier:
            for a in modes:
                m = w @ a
                if try_add(m):
                    new_frontier.append(m)
        if not new_frontier or len(basis) == full:
            break
        frontier = new_frontier

    dim = len(basis)
    if dim == full:
        return IrreducibilityReport(algebra_dim=dim, is_irreducible=True)

    subspace = _extract_invariant_subspace(modes, words, extraction_attempts, seed)
    return IrreducibilityReport(algebra_dim=dim, is_irreducible=False,
                                invariant_subspace_basis=subspace)


def _jointly_invariant(modes: ModeSet, basis: np.ndarray, tol: float = 1e-8) -> bool:
    q, _ = np.linalg.qr(basis)
    for a in modes:
        img = a @ q
        residual = img - q @ (q.T @ img)
        if np.linalg.norm(residual) > tol * max(1.0, np.linalg.norm(img)):
            return False
    return True


def _extract_invariant_subspace(modes: ModeSet, words: list[np.ndarray],
                                attempts: int, seed: int) -> np.ndarray | None:
    d = modes.dim
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        coeffs = rng.standard_normal(len(words))
        m = sum(c * w for c, w in zip(coeffs, words))
        eigvals, eigvecs = np.linalg.eig(m)
        for i, lam in enumerate(eigvals):
            if abs(lam.imag) <= 1e-10 * max(1.0, abs(lam)):
                cand = np.real(eigvecs[:, i:i + 1])
            else:
                cand = np.column_stack([np.real(eigvecs[:, i]), np.imag(eigvecs[:, i])])
            if 0 < cand.shape[1] < d and np.linalg.matrix_rank(cand, tol=1e-10) == cand.shape[1]:
                if _jointly_invariant(modes, cand):
                    q, _ = np.linalg.qr(cand)
                    return q
        # eigenspaces of repeated real eigenvalues (kernels of m - lam I)
        for lam in np.unique(np.round(eigvals[np.abs(eigvals.imag) < 1e-10].real, 8)):
            shifted = m - lam * np.eye(d)
            _, s, vt = np.linalg.svd(shifted)
            null_dim = int(np.sum(s < 1e-8 * max(1.0, s[0])))
            if 0 < null_dim < d:
                cand = vt[d - null_dim:].T
                if _jointly_invariant(modes, cand):
                    return cand
    return None


@dataclass(frozen=True)
class ReducedEstimate:
    """Growth-rate estimate routed through invariant-subspace reduction."""

    value: float
    estimate: LyapEstimate              # block estimate realising the max
    block_estimates: tuple[LyapEstimate, ...]
    irreducibility: IrreducibilityReport
    direct: LyapEstimate | None = None  # whole-system cross-check
    note: str | None = None

    def consistent(self, tol: float = 1e-6) -> bool:
        """Block maximum should reproduce the direct estimate (the modes
        are block-triangular in the reduction basis)."""
        if self.direct is None:
            return True
        return abs(self.value - self.direct.value) <= tol


def lambda_reduced(modes: ModeSet, tau: float, cross_check: bool = True,
                   **search) -> ReducedEstimate:
    """Periodic-block estimation after splitting off a common invariant
    subspace when one is found.

    Reducible mode sets are block-triangularised over the extracted
    subspace and estimated block by block; the growth rate of the full
    system is the maximum over blocks, which is cross-checked against (not
    replaced by) direct estimation on the full system. If no invariant
    subspace can be extracted the direct estimate is returned with a note.
    """
    report = is_irreducible(modes)
    if report.is_irreducible or report.invariant_subspace_basis is None:
        note = None
        if not report.is_irreducible:
            note = ("modes are reducible (algebra dimension "
                    f"{report.algebra_dim} < {modes.dim ** 2}) but no real "
                    "invariant subspace was extracted; estimating directly")
        est = lambda_periodic(modes, tau, **search)
        return ReducedEstimate(value=est.value, estimate=est, block_estimates=(est,),
                               irreducibility=report, note=note)

    sub = report.invariant_subspace_basis
    d = modes.dim
    d1 = sub.shape[1]
    # complete the flag basis with an orthonormal complement
    q, _ = np.linalg.qr(np.column_stack([sub, np.eye(d)]))
    basis = q[:, :d]
    top, _, bottom = block_reduce(modes, basis, d1, d - d1)
    block_sets = [b for b in (top, bottom) if b is not None]
    block_estimates = tuple(lambda_periodic(b, tau, **search) for b in block_sets)
    best = max(block_estimates, key=lambda e: e.value)
    direct = lambda_periodic(modes, tau, **search) if cross_check else None
    return ReducedEstimate(value=best.value, estimate=best,
                           block_estimates=block_estimates,
                           irreducibility=report, direct=direct)


def block_reduce(modes: ModeSet, basis, d1: int, d2: int,
                 tol: float = 1e-8) -> tuple[ModeSet | None, list[np.ndarray], ModeSet]:
    """Triangular blocks of every mode in an invariant flag basis.

    The first d1 basis columns must span an invariant subspace E1 and the
    first d1+d2 an invariant E2. Returns (modes restricted to E1, coupling
    blocks, modes induced on E2/E1); raises if the lower-left block of any
    mode exceeds the tolerance, i.e. the basis is not actually invariant.
    """
    b = np.asarray(basis, dtype=float)
    k = d1 + d2
    if b.ndim != 2 or b.shape[1] < k or d2 < 1 or d1 < 0:
        raise ValueError("basis must supply d1 + d2 columns with d2 >= 1")
    b = b[:, :k]
    if np.linalg.matrix_rank(b, tol=1e-12) < k:
        raise ValueError("basis columns are not linearly independent")

    s11, s12, s22 = [], [], []
    pinv = np.linalg.pinv(b)
    for idx, a in enumerate(modes):
        m = pinv @ a @ b
        residual = a @ b - b @ m
        if np.linalg.norm(residual) > tol * max(1.0, np.linalg.norm(a @ b)):
            raise ValueError(f"mode {idx}: E2 is not invariant (residual too large)")
        if d1 > 0 and np.linalg.norm(m[d1:, :d1]) > tol * max(1.0, np.linalg.norm(m)):
            raise ValueError(f"mode {idx}: E1 is not invariant (lower-left block nonzero)")
        s11.append(m[:d1, :d1])
        s12.append(m[:d1, d1:])
        s22.append(m[d1:, d1:])
    top = ModeSet(s11) if d1 > 0 else None
    return top, s12, ModeSet(s22)
