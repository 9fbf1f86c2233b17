"""Dwell-time switching signals.

A signal is a finite sequence of bangs (mode index, duration). It certifies
a dwell time ``tau``: after merging adjacent equal-mode bangs (equal
neighbours create no discontinuity of the signal) every bang must last at
least ``tau``. Durations are stored exactly as given and compared against
``tau`` with >= and no tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

Bang = tuple[int, float]


@dataclass(frozen=True)
class DwellSignal:
    """Finite piecewise-constant switching signal with a certified dwell time."""

    bangs: tuple[Bang, ...]
    tau: float

    def __init__(self, bangs, tau: float):
        tau = float(tau)
        if not (math.isfinite(tau) and tau >= 0.0):
            raise ValueError("tau must be finite and >= 0")
        clean = []
        for i, (mode, duration) in enumerate(bangs):
            mode = int(mode)
            duration = float(duration)
            if mode < 0:
                raise ValueError(f"bang {i}: mode index must be >= 0")
            if not (math.isfinite(duration) and duration > 0.0):
                raise ValueError(f"bang {i}: duration must be finite and > 0")
            clean.append((mode, duration))
        object.__setattr__(self, "bangs", tuple(clean))
        object.__setattr__(self, "tau", tau)

    @property
    def total_duration(self) -> float:
        return float(sum(d for _, d in self.bangs))

    def __len__(self) -> int:
        return len(self.bangs)

    def merged(self) -> "DwellSignal":
        """Same signal with adjacent equal-mode bangs merged."""
        out: list[Bang] = []
        for mode, duration in self.bangs:
            if out and out[-1][0] == mode:
                out[-1] = (mode, out[-1][1] + duration)
            else:
                out.append((mode, duration))
        return DwellSignal(out, self.tau)

    def switch_times(self) -> list[float]:
        """Discontinuity times of the merged signal (interior bang ends)."""
        merged = self.merged()
        times, t = [], 0.0
        for _, duration in merged.bangs[:-1]:
            t += duration
            times.append(t)
        return times

    def to_json(self) -> str:
        return json.dumps({"tau": self.tau, "bangs": [[m, d] for m, d in self.bangs]})

    @classmethod
    def from_json(cls, text: str) -> "DwellSignal":
        obj = json.loads(text)
        return cls(bangs=[(int(m), float(d)) for m, d in obj["bangs"]], tau=float(obj["tau"]))


def validate(sig: DwellSignal) -> tuple[bool, list[int]]:
    """Check the dwell-time condition; offenders are merged-bang indices."""
    merged = sig.merged()
    offenders = [i for i, (_, d) in enumerate(merged.bangs) if d < sig.tau]
    return (not offenders, offenders)


def concat(u1: DwellSignal, u2: DwellSignal) -> DwellSignal:
    """Concatenation: bangs of u1 then u2, with the seam merged if modes match."""
    if u1.tau != u2.tau:
        raise ValueError(f"tau mismatch: {u1.tau} vs {u2.tau}")
    return DwellSignal(u1.bangs + u2.bangs, u1.tau).merged()


@dataclass(frozen=True)
class PeriodicSignal:
    """Infinite periodic extension of a dwell-admissible block.

    ``x0`` optionally records a direction whose projective trajectory is
    periodic with the same period.
    """

    period_block: DwellSignal
    x0: np.ndarray | None = None

    def __post_init__(self):
        if len(self.period_block) == 0:
            raise ValueError("period block must contain at least one bang")
        if self.x0 is not None:
            v = np.asarray(self.x0, dtype=float).reshape(-1)
            if not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0.0:
                raise ValueError("x0 must be a finite nonzero vector")
            object.__setattr__(self, "x0", v)

    @property
    def period(self) -> float:
        return self.period_block.total_duration


def periodic_seam_valid(p: PeriodicSignal) -> bool:
    """Whether the infinite repetition of the block is dwell-admissible.

    For a validated block this is always the case: if the first and last
    modes agree the seam merges them into one bang of length >= 2*tau,
    and if they differ both bangs already last >= tau. Kept as an explicit
    checkpoint documenting the seam rule.
    """
    ok, _ = validate(p.period_block)
    return ok


def sample_random(tau: float, modes: int, horizon: float, rng_seed: int,
                  max_extra: float = 1.0) -> DwellSignal:
    """Random dwell-admissible signal filling (up to) the given horizon.

    Durations are i.i.d. ``tau + Exp(mean=max_extra)`` draws, truncated so
    the total stays <= horizon; modes are uniform with no immediate
    repetition. Deterministic for a fixed seed.
    """
    tau = float(tau)
    horizon = float(horizon)
    if horizon < tau:
        raise ValueError(f"horizon {horizon} is below the dwell time {tau}")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if max_extra <= 0:
        raise ValueError("max_extra must be > 0")
    if modes < 1:
        raise ValueError("need at least one mode")
    if modes == 1:
        return DwellSignal([(0, horizon)], tau)

    rng = np.random.default_rng(rng_seed)
    bangs: list[Bang] = []
    total = 0.0
    prev = -1
    while total + tau <= horizon:
        duration = min(tau + rng.exponential(max_extra), horizon - total)
        if duration <= 0.0:
            break
        choices = [m for m in range(modes) if m != prev]
        mode = int(choices[rng.integers(len(choices))])
        bangs.append((mode, duration))
        prev = mode
        total += duration
    if not bangs:
        bangs = [(0, horizon)]
    return DwellSignal(bangs, tau)
