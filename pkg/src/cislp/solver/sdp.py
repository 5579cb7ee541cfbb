"""Small dense SDP for the physical-layer multicast power bound.

Solves::

    min tr(Q)  s.t.  tr(A_j Q) >= c_j,  Q Hermitian PSD

with ``A_j = h_j^H h_j`` by a primal log-barrier method. ``Q`` is
parametrized by its coordinates in an orthonormal real basis of Hermitian
matrices, so each Newton step is an ``M^2``-dimensional real linear solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .qp import Status

__all__ = ["SdpProblem", "SdpResult", "solve_multicast_sdp", "hermitian_basis"]

GAP_TOL = 1e-7
BARRIER_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class SdpProblem:
    n: int
    constraint_mats: np.ndarray  # (K, n, n) Hermitian
    rhs: np.ndarray              # (K,)

    def __post_init__(self):
        A = np.asarray(self.constraint_mats, dtype=complex)
        c = np.asarray(self.rhs, dtype=float).reshape(-1)
        if A.ndim != 3 or A.shape[1:] != (self.n, self.n) or A.shape[0] != c.size:
            raise ValueError("constraint_mats must be (K, n, n) with K = len(rhs)")
        if not np.allclose(A, A.conj().transpose(0, 2, 1), atol=1e-12, rtol=0):
            raise ValueError("constraint matrices must be Hermitian")
        if np.any(c <= 0):
            raise ValueError("all rhs values must be positive")
        object.__setattr__(self, "constraint_mats", A)
        object.__setattr__(self, "rhs", c)

    @classmethod
    def from_channel(cls, h: np.ndarray, zeta, sigma2: float = 1.0) -> "SdpProblem":
        """Multicast problem ``h_j Q h_j^H >= zeta_j sigma^2`` for rows of ``h``."""
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        mats = np.einsum("ki,kj->kij", h.conj(), h)
        rhs = np.broadcast_to(np.asarray(zeta, float), (h.shape[0],)) * sigma2
        return cls(n=h.shape[1], constraint_mats=mats, rhs=rhs)


@dataclass
class SdpResult:
    """``dual_value`` is a certified lower bound on the optimum and
    ``gap = trace_value - dual_value``."""

    trace_value: float
    Q: np.ndarray
    status: Status
    gap: float = np.nan
    dual_value: float = np.nan
    newton_steps: int = 0
    trace_history: list = field(default_factory=list)


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis of n x n Hermitian matrices under Re tr(A B)."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), complex)
        e[i, i] = 1.0
        basis.append(e)
    s = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = s
            basis.append(e)
            f = np.zeros((n, n), complex)
            f[i, j] = -1j * s
            f[j, i] = 1j * s
            basis.append(f)
    return np.array(basis)


def _chol_ok(Q: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(Q)
        return True
    except np.linalg.LinAlgError:
        return False


def solve_multicast_sdp(p: SdpProblem, max_newton: int = 3000) -> SdpResult:
    """Minimize tr(Q) over the multicast constraints by a log-barrier method.

    Outer iterations multiply the barrier weight by 10 and stop once the
    duality-gap bound ``(n + K) / t`` is at most ``1e-7 (1 + trace)``.
    """
    n, K = p.n, p.rhs.size
    B = hermitian_basis(n)
    # linear maps of the coordinates: trace and constraint values
    tr_vec = np.real(np.einsum("kii->k", B))
    G = np.real(np.einsum("jab,kba->jk", p.constraint_mats, B))
    c = p.rhs
    diag_gain = np.real(np.einsum("jii->j", p.constraint_mats))
    if np.any(diag_gain <= 0):
        raise ValueError("every constraint matrix must be nonzero "
                         "(a zero channel cannot meet a positive target)")

    nb = len(B)
    BT = B.transpose(0, 2, 1).reshape(nb, -1).T  # tr(X B_k) = X.ravel() @ BT[:, k]
    scale0 = 2.0 * float(np.max(c / diag_gain))
    q = scale0 * tr_vec  # Q = scale0 * I
    nu = n + K           # barrier parameter

    Bflat = B.reshape(nb, -1)

    def herm(qv):
        return (qv @ Bflat).reshape(n, n)

    def barrier(qv, t):
        s = G @ qv - c
        if np.any(s <= 0):
            return np.inf
        try:
            L = np.linalg.cholesky(herm(qv))
        except np.linalg.LinAlgError:
            return np.inf
        logdet = 2.0 * np.sum(np.log(np.real(np.diag(L))))
        return t * (tr_vec @ qv) - logdet - np.sum(np.log(s))

    def max_step(qv, dq):
        """Largest step keeping slacks and Q strictly feasible."""
        s, ds = G @ qv - c, G @ dq
        neg = ds < 0
        amax = float(np.min(-s[neg] / ds[neg], initial=np.inf))
        Linv = np.linalg.inv(np.linalg.cholesky(herm(qv)))
        lam_min = np.linalg.eigvalsh(Linv @ herm(dq) @ Linv.conj().T)[0]
        if lam_min < 0:
            amax = min(amax, -1.0 / lam_min)
        return amax

    t = nu / max(tr_vec @ q, 1e-12)
    steps = 0
    history = [float(tr_vec @ q)]
    while True:
        # centering by damped Newton
        for _ in range(100):
            Q = herm(q)
            P = np.linalg.inv(Q)
            P = 0.5 * (P + P.conj().T)
            s = G @ q - c
            grad = t * tr_vec - np.real(BT.T @ P.ravel()) - G.T @ (1.0 / s)
            W = (P @ B @ P).reshape(nb, -1)
            hess = np.real(W @ BT) + (G.T / s**2) @ G
            try:
                dq = -cho_solve(cho_factor(hess), grad)
            except LinAlgError:
                return SdpResult(float(tr_vec @ q), herm(q), Status.NUMERICAL_FAILURE,
                                 newton_steps=steps, trace_history=history)
            dec = float(-grad @ dq)
            if dec / 2.0 <= 1e-9:
                break
            f0 = barrier(q, t)
            step = min(1.0, 0.99 * max_step(q, dq))
            while barrier(q + step * dq, t) > f0 - 0.25 * step * dec:
                step *= 0.5
                if step < 1e-14:
                    break
            q = q + step * dq
            steps += 1
            history.append(float(tr_vec @ q))
            if steps > max_newton:
                return SdpResult(float(tr_vec @ q), herm(q), Status.NUMERICAL_FAILURE,
                                 newton_steps=steps, trace_history=history)
        trace = float(tr_vec @ q)
        gap_bound = nu / t
        if gap_bound <= GAP_TOL * (1.0 + trace):
            break
        t *= BARRIER_FACTOR

    s = G @ q - c
    lam = 1.0 / (t * s)
    # scale the barrier multipliers onto the dual feasible set
    # {lam >= 0 : I - sum_j lam_j A_j PSD}; their value is then a certified lower bound
    top = np.linalg.eigvalsh(np.einsum("j,jab->ab", lam, p.constraint_mats))[-1]
    if top > 1.0:
        lam = lam / top
    dual = float(lam @ c)
    Q = herm(q)
    return SdpResult(trace_value=trace, Q=0.5 * (Q + Q.conj().T), status=Status.OPTIMAL,
                     gap=trace - dual, dual_value=dual,
                     newton_steps=steps, trace_history=history)
