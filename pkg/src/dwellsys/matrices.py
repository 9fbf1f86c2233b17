"""Dense real matrix arithmetic for switched-system flows.

Matrices are plain ``numpy.ndarray`` values (d x d, float64). The helpers
here validate inputs, compute matrix exponentials by scaling and squaring,
build monodromy (fundamental) matrices of piecewise-constant signals, and
expose the spectral quantities used by the Lyapunov estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import DwellSignal

# Truncated Taylor kernel: at ||B||_1 <= 0.5 the order-16 remainder is
# ~1e-20, far below float64 roundoff.
_SQUARING_THRESHOLD = 0.5
_TAYLOR_ORDER = 16


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a square float64 matrix with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"{name} must be a square d x d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class ModeSet:
    """Finite ordered set of same-dimension modes of a switched system."""

    modes: tuple[np.ndarray, ...]
    labels: tuple[str, ...] | None = None

    def __init__(self, modes, labels=None):
        mats = tuple(as_matrix(m, f"mode {i}") for i, m in enumerate(modes))
        if not mats:
            raise ValueError("ModeSet needs at least one mode")
        d = mats[0].shape[0]
        if any(m.shape[0] != d for m in mats):
            raise ValueError("all modes must share the same dimension")
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != len(mats):
                raise ValueError("labels length must match number of modes")
        for m in mats:
            m.setflags(write=False)
        object.__setattr__(self, "modes", mats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.modes[0].shape[0]

    def __len__(self) -> int:
        return len(self.modes)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.modes[i]

    def __iter__(self):
        return iter(self.modes)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def cache_key(self) -> bytes:
        return b"".join(m.tobytes() for m in self.modes) + bytes([self.dim])


def expm(a, t: float = 1.0) -> np.ndarray:
    """e^{tA} by scaling and squaring with a fixed-order Taylor kernel.

    The argument is scaled so its 1-norm is at most 0.5, the kernel is the
    order-16 Taylor polynomial evaluated by Horner's rule, and the result
    is squared back up. Relative accuracy is ~1e-12 or better in operator
    norm for ||tA|| up to 50.
    """
    m = as_matrix(a)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    b = t * m
    d = b.shape[0]
    norm = np.linalg.norm(b, 1)
    n_squarings = 0
    if norm > _SQUARING_THRESHOLD:
        n_squarings = int(np.ceil(np.log2(norm / _SQUARING_THRESHOLD)))
        b = b / (2.0 ** n_squarings)
    eye = np.eye(d)
    out = eye + b / _TAYLOR_ORDER
    for k in range(_TAYLOR_ORDER - 1, 0, -1):
        out = eye + (b @ out) / k
    for _ in range(n_squarings):
        out = out @ out
    return out


def monodromy(sig: DwellSignal, modes: ModeSet) -> np.ndarray:
    """Fundamental matrix of a piecewise-constant signal over its span.

    Later bangs multiply on the left: e^{t_m A_{i_m}} ... e^{t_1 A_{i_1}}.
    The empty signal gives the identity.
    """
    d = modes.dim
    phi = np.eye(d)
    for mode, duration in sig.bangs:
        if not 0 <= mode < len(modes):
            raise IndexError(f"mode index {mode} out of range for {len(modes)} modes")
        phi = expm(modes[mode], duration) @ phi
    return phi


def spectral_radius(a) -> float:
    """Largest eigenvalue modulus."""
    m = as_matrix(a)
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def spectral_abscissa(a) -> float:
    """Largest eigenvalue real part (growth rate of the constant signal)."""
    m = as_matrix(a)
    return float(np.max(np.real(np.linalg.eigvals(m))))
