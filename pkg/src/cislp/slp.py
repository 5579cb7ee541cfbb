"""Symbol-level constructive-interference precoding for M-QAM.

For one symbol slot the transmit vector ``x`` minimizes ``||x||^2`` subject
to one constraint per user and axis on the noiseless received sample
``h_j x``:

* interior coordinate: ``Re(h_j x) == sigma sqrt(zeta_j) Re(d_j)`` (exact point);
* extreme coordinate: ``s Re(h_j x) >= s sigma sqrt(zeta_j) Re(d_j)`` with ``s``
  the coordinate sign (the sample may move further out), likewise for the
  imaginary axis.

``d_j`` is the unit-average-power constellation point. Complex vectors are
real-ified as ``v = [Re(x); Im(x)]``, under which ``Re(h x) = [Re h, -Im h] v``
and ``Im(h x) = [Im h, Re h] v``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .chanmodel import ChannelMatrix
from .mqam import Axis, ConstellationSpec, classify, detect_many
from .solver.qp import (
    TOL_DUAL,
    LeastNormProblem,
    QPResult,
    Status,
    least_norm_on_rows,
    solve_active_set,
)

__all__ = [
    "SymbolSlot",
    "SnrTargets",
    "Sense",
    "ConstraintRow",
    "ConstraintSet",
    "PrecodeSolution",
    "RankDeficientChannel",
    "RowspaceFit",
    "realify_rows",
    "build_constraints",
    "precode_min_power",
    "precode_zf_symbol",
    "solve_all_active",
    "rowspace_coefficients",
    "sinr_conventional",
    "sinr_constructive",
    "received_indices",
]


class RankDeficientChannel(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SymbolSlot:
    """One data symbol per user, given as constellation point indices."""

    indices: tuple[int, ...]
    spec: ConstellationSpec

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        bad = [i for i in idx if not 0 <= i < self.spec.order]
        if bad:
            raise ValueError(f"invalid point indices {bad} for {self.spec.order}-QAM")
        object.__setattr__(self, "indices", idx)

    @property
    def symbols(self) -> np.ndarray:
        return self.spec.points[list(self.indices)]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class SnrTargets:
    zeta: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if np.any(z <= 0) or not self.sigma > 0:
            raise ValueError("SNR targets and sigma must be positive")
        object.__setattr__(self, "zeta", z)

    @classmethod
    def shared(cls, zeta: float, K: int, sigma: float = 1.0) -> "SnrTargets":
        return cls(np.full(K, float(zeta)), sigma)

    @property
    def amplitude(self) -> np.ndarray:
        """Per-user receive amplitude scale ``sigma sqrt(zeta_j)``."""
        return self.sigma * np.sqrt(self.zeta)

    def scaled(self, c: float) -> "SnrTargets":
        return SnrTargets(self.zeta * c, self.sigma)


class Sense(str, enum.Enum):
    EQ = "Eq"
    GEQ = "Geq"


@dataclass(frozen=True, eq=False)
class ConstraintRow:
    coeffs: np.ndarray
    sense: Sense
    rhs: float
    user: int
    axis: Axis


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Real linear constraints over ``[Re(x); Im(x)]``, rows ordered
    (user 0 real, user 0 imag, user 1 real, ...)."""

    rows: tuple[ConstraintRow, ...]
    dim: int

    def to_problem(self) -> LeastNormProblem:
        return LeastNormProblem(
            A=np.array([r.coeffs for r in self.rows]).reshape(len(self.rows), self.dim),
            b=np.array([r.rhs for r in self.rows]),
            is_eq=np.array([r.sense is Sense.EQ for r in self.rows]),
        )


@dataclass
class PrecodeSolution:
    x: np.ndarray
    power: float
    duals: np.ndarray
    active: tuple[int, ...]
    status: Status
    message: str = ""
    constraints: ConstraintSet | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class RowspaceFit(NamedTuple):
    nu: np.ndarray
    residual: float


def _entries(H) -> np.ndarray:
    return H.entries if isinstance(H, ChannelMatrix) else np.atleast_2d(np.asarray(H, complex))


def realify_rows(H) -> np.ndarray:
    """(2K, 2M) rows mapping ``[Re x; Im x]`` to ``Re(h_j x), Im(h_j x)``."""
    h = _entries(H)
    K, M = h.shape
    out = np.empty((2 * K, 2 * M))
    out[0::2, :M], out[0::2, M:] = h.real, -h.imag
    out[1::2, :M], out[1::2, M:] = h.imag, h.real
    return out


def _complexify(v: np.ndarray, M: int) -> np.ndarray:
    return v[:M] + 1j * v[M:]


def _check_dims(h: np.ndarray, slot: SymbolSlot, targets: SnrTargets) -> None:
    K = h.shape[0]
    if len(slot) != K:
        raise ValueError(f"slot has {len(slot)} symbols but the channel has {K} users")
    if targets.zeta.size == 1 and K > 1:
        return
    if targets.zeta.size != K:
        raise ValueError(f"got {targets.zeta.size} SNR targets for {K} users")


def _zeta(targets: SnrTargets, K: int) -> np.ndarray:
    return np.broadcast_to(targets.zeta, (K,))


def build_constraints(H, slot: SymbolSlot, targets: SnrTargets) -> ConstraintSet:
    h = _entries(H)
    _check_dims(h, slot, targets)
    K, M = h.shape
    amp = targets.sigma * np.sqrt(_zeta(targets, K))
    real_rows = realify_rows(h)
    rows = []
    for j, idx in enumerate(slot.indices):
        d = slot.spec.points[idx]
        for a, (cc, coord) in enumerate(zip(classify(slot.spec, idx), (d.real, d.imag))):
            coeffs = real_rows[2 * j + a]
            rhs = amp[j] * coord
            if cc.is_extreme:
                rows.append(ConstraintRow(cc.sign * coeffs, Sense.GEQ, cc.sign * rhs, j, cc.axis))
            else:
                rows.append(ConstraintRow(coeffs.copy(), Sense.EQ, rhs, j, cc.axis))
    return ConstraintSet(rows=tuple(rows), dim=2 * M)


def _to_solution(res: QPResult, M: int, cs: ConstraintSet) -> PrecodeSolution:
    x = _complexify(res.v, M)
    return PrecodeSolution(x=x, power=float(np.vdot(x, x).real), duals=res.duals,
                           active=res.active, status=res.status, message=res.message,
                           constraints=cs)


def precode_min_power(H, slot: SymbolSlot, targets: SnrTargets) -> PrecodeSolution:
    """Minimum-power constructive-interference precoder for one slot."""
    cs = build_constraints(H, slot, targets)
    res = solve_active_set(cs.to_problem())
    return _to_solution(res, cs.dim // 2, cs)


def precode_zf_symbol(H, slot: SymbolSlot, targets: SnrTargets) -> PrecodeSolution:
    """Zero-forcing transmit vector ``H^H (H H^H)^-1 b`` with
    ``b_j = sigma sqrt(zeta_j) d_j``; every receiver sees its exact point."""
    h = _entries(H)
    _check_dims(h, slot, targets)
    K, M = h.shape
    if K > M or np.linalg.matrix_rank(h) < K:
        raise RankDeficientChannel(
            f"zero-forcing needs a full-row-rank channel with K <= M (K={K}, M={M})")
    b = targets.sigma * np.sqrt(_zeta(targets, K)) * slot.symbols
    rhs = np.empty(2 * K)
    rhs[0::2], rhs[1::2] = b.real, b.imag
    v, duals = least_norm_on_rows(realify_rows(h), rhs)
    x = _complexify(v, M)
    return PrecodeSolution(x=x, power=float(np.vdot(x, x).real), duals=duals,
                           active=tuple(range(2 * K)), status=Status.OPTIMAL)


def solve_all_active(H, slot: SymbolSlot, targets: SnrTargets) -> PrecodeSolution:
    """Closed-form solve with every one of the 2K constraints active.

    This is the optimum whenever all resulting inequality duals are
    nonnegative; otherwise the status is ``NotApplicable`` and the true
    active set is smaller.
    """
    cs = build_constraints(H, slot, targets)
    p = cs.to_problem()
    gram = p.A @ p.A.T
    M = cs.dim // 2
    if np.linalg.cond(gram) > 1e13:
        return PrecodeSolution(x=np.zeros(M, complex), power=np.nan,
                               duals=np.full(p.n_rows, np.nan), active=(),
                               status=Status.NUMERICAL_FAILURE,
                               message="singular KKT system with all constraints active",
                               constraints=cs)
    v, duals = least_norm_on_rows(p.A, p.b)
    x = _complexify(v, M)
    scale = max(1.0, float(np.max(np.abs(duals))))
    ok = bool(np.all(duals[~p.is_eq] >= -TOL_DUAL * scale))
    return PrecodeSolution(x=x, power=float(np.vdot(x, x).real), duals=duals,
                           active=tuple(range(p.n_rows)),
                           status=Status.OPTIMAL if ok else Status.NOT_APPLICABLE,
                           constraints=cs)


def rowspace_coefficients(solution: PrecodeSolution, H) -> RowspaceFit:
    """Least-squares ``nu`` with ``x ~ sum_j nu_j h_j^H``.

    The residual is returned, not raised on; an optimal ``x`` has a residual
    at rounding level since stationarity puts it in the span of the
    channel rows.
    """
    h = _entries(H)
    nu = np.linalg.lstsq(h.conj().T, solution.x, rcond=None)[0]
    return RowspaceFit(nu, float(np.linalg.norm(solution.x - h.conj().T @ nu)))


def sinr_conventional(H, precoders, powers, sigma: float = 1.0) -> np.ndarray:
    """Per-user SINR for user-level precoding.

    ``precoders`` is M x K (column ``i`` is ``w_i``) and ``powers`` has length K.
    """
    h = _entries(H)
    gains = np.abs(h @ np.asarray(precoders, complex)) ** 2 * np.asarray(powers, float)
    signal = np.diag(gains)
    return signal / (gains.sum(axis=1) - signal + sigma ** 2)


def sinr_constructive(H, x, sigma: float = 1.0) -> np.ndarray:
    """``|h_j x|^2 / sigma^2``: all streams counted as useful signal."""
    return np.abs(_entries(H) @ np.asarray(x, complex)) ** 2 / sigma ** 2


def received_indices(H, x, targets: SnrTargets, spec: ConstellationSpec,
                     noise: np.ndarray | None = None) -> np.ndarray:
    """Detected point index per user after scaling by ``1 / (sigma sqrt(zeta_j))``."""
    h = _entries(H)
    y = h @ np.asarray(x, complex)
    if noise is not None:
        y = y + noise
    return detect_many(spec, y / (targets.sigma * np.sqrt(_zeta(targets, h.shape[0]))))
