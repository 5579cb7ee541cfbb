"""Quasi-static Rayleigh downlink channels and their cross-correlations."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ChannelMatrix",
    "generate_rayleigh",
    "cross_correlation",
    "dump_csv",
    "load_csv",
    "user_streams",
]


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """K x M complex downlink channel; row ``j`` is user ``j``'s channel."""

    entries: np.ndarray
    gamma0: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        h = np.array(self.entries, dtype=complex, copy=True)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel must be a non-empty K x M matrix, "
                             f"got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def M(self) -> int:
        return self.entries.shape[1]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.entries, axis=1)


def user_streams(seed: int, *key: int, n: int) -> list[np.random.Generator]:
    """Independent generators for ``n`` users under the spawn key ``key``.

    Each user's stream depends only on ``(seed, *key, user)``, so draws never
    depend on how work is scheduled.
    """
    return [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*key, j)))
            for j in range(n)]


def generate_rayleigh(K: int, M: int, gamma0: float, seed: int,
                      trial: int = 0) -> ChannelMatrix:
    """Draw ``h_j = sqrt(gamma0) h'_j`` with ``h'_j ~ CN(0, I_M)``.

    ``trial`` selects the Monte Carlo realization; row ``j`` comes from the
    ``(seed, trial, j)`` substream so it is the same for any ``gamma0``.
    """
    if K < 1 or M < 1:
        raise ValueError(f"K and M must be >= 1, got K={K}, M={M}")
    if not gamma0 > 0:
        raise ValueError(f"gamma0 must be positive, got {gamma0}")
    rows = [g.standard_normal((2, M)) for g in user_streams(seed, 0, trial, n=K)]
    unit = np.array([(r[0] + 1j * r[1]) / np.sqrt(2.0) for r in rows])
    return ChannelMatrix(np.sqrt(gamma0) * unit, gamma0=gamma0, seed=seed)


def cross_correlation(H: ChannelMatrix | np.ndarray) -> np.ndarray:
    """rho[j, k] = h_j h_k^H / (|h_j| |h_k|)."""
    h = H.entries if isinstance(H, ChannelMatrix) else np.asarray(H, complex)
    norms = np.linalg.norm(h, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"channel row {int(zero[0])} has zero norm")
    rho = (h @ h.conj().T) / np.outer(norms, norms)
    np.fill_diagonal(rho, 1.0)
    return rho


def dump_csv(H: ChannelMatrix, path) -> None:
    """Write one row per user with interleaved re/im values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in H.entries:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def load_csv(path, gamma0: float = 1.0) -> ChannelMatrix:
    rows = []
    with open(Path(path), newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            vals = [float(v) for v in rec]
            if len(vals) % 2:
                raise ValueError(f"{path}:{lineno}: odd number of values")
            rows.append(np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2]))
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    return ChannelMatrix(np.array(rows), gamma0=gamma0)
