"""Least-norm programs with mixed linear equality / inequality constraints.

Problem form::

    min ||v||^2   s.t.   a_i . v  = b_i   (equality rows)
                         a_i . v >= b_i   (inequality rows)

With the Lagrangian ``||v||^2 - sum_i u_i (a_i . v - b_i)`` the KKT
conditions are ``2 v = A^T u``, primal feasibility, ``u_i >= 0`` on
inequality rows and ``u_i (a_i . v - b_i) = 0``. Duals are reported in this
convention throughout the package.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

__all__ = [
    "Status",
    "LeastNormProblem",
    "QPResult",
    "solve_active_set",
    "solve_enumerate",
    "least_norm_on_rows",
    "kkt_residuals",
]

TOL_FEAS = 1e-9
TOL_DUAL = 1e-9
TOL_KKT = 1e-8
TOL_CS = 1e-8
ENUM_MAX_INEQ = 12
_REG = 1e-12
# |projection of a row onto the working-set null space| / |row| below this
# means the row is linearly dependent on the working set
_DEP_TOL = 1e-9


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True, eq=False)
class LeastNormProblem:
    """Rows ``A``, right-hand sides ``b`` and a mask of equality rows."""

    A: np.ndarray
    b: np.ndarray
    is_eq: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        is_eq = np.asarray(self.is_eq, dtype=bool).reshape(-1)
        if A.size == 0:
            A = A.reshape(0, A.shape[-1] if A.ndim == 2 else 0)
        if not (A.shape[0] == b.shape[0] == is_eq.shape[0]):
            raise ValueError("A, b and is_eq must have matching row counts")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("problem data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "is_eq", is_eq)

    @classmethod
    def from_blocks(cls, dim, eq_rows=None, eq_rhs=None, ineq_rows=None,
                    ineq_rhs=None) -> "LeastNormProblem":
        E = np.zeros((0, dim)) if eq_rows is None else np.reshape(eq_rows, (-1, dim))
        G = np.zeros((0, dim)) if ineq_rows is None else np.reshape(ineq_rows, (-1, dim))
        e = np.zeros(0) if eq_rhs is None else np.reshape(eq_rhs, -1)
        g = np.zeros(0) if ineq_rhs is None else np.reshape(ineq_rhs, -1)
        return cls(np.vstack([E, G]), np.concatenate([e, g]),
                   np.r_[np.ones(len(e), bool), np.zeros(len(g), bool)])

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return int(np.count_nonzero(~self.is_eq))

    def rhs_scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.b), initial=0.0)))


@dataclass
class QPResult:
    v: np.ndarray
    duals: np.ndarray
    active: tuple[int, ...]
    status: Status
    iterations: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(self.v @ self.v)


def _gram_solve(N: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(N N^T) y = rhs`` by Cholesky, regularizing if near-singular."""
    gram = N @ N.T
    try:
        return cho_solve(cho_factor(gram, check_finite=False), rhs, check_finite=False)
    except LinAlgError:
        reg = _REG * max(1.0, float(np.max(np.diag(gram))))
        return cho_solve(cho_factor(gram + reg * np.eye(len(gram)), check_finite=False),
                         rhs, check_finite=False)


def _qr_rows(N: np.ndarray):
    """Thin QR of ``N^T``, or None when ``N`` is numerically rank deficient."""
    if N.shape[0] > N.shape[1]:
        return None
    Q, R = np.linalg.qr(N.T)
    d = np.abs(np.diag(R))
    if d.size and d.min() <= 1e-14 * max(d.max(), 1e-300):
        return None
    return Q, R


def _project(N: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``a = N^T r + w`` with ``w`` orthogonal to the rows of ``N``.

    Orthogonal factorization keeps ``w`` accurate when rows are nearly
    parallel; the normal equations would square the conditioning.
    """
    qr = _qr_rows(N)
    if qr is None:
        r = _gram_solve(N, N @ a)
        return r, a - N.T @ r
    Q, R = qr
    c = Q.T @ a
    return solve_triangular(R, c, check_finite=False), a - Q @ c


def _polish(N: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-norm point on ``N v = rhs`` with one step of refinement.

    Returns ``(v, y)`` with ``v = N^T y``; the KKT duals are ``2 y``. With
    ``N^T = Q R``, ``v = Q w`` is formed from the orthonormal factor so that
    large multipliers do not cancel into a small ``v``.
    """
    qr = _qr_rows(N)
    if qr is None:
        y = _gram_solve(N, rhs)
        y = y + _gram_solve(N, rhs - N @ (N.T @ y))
        return N.T @ y, y
    Q, R = qr
    w = solve_triangular(R, rhs, trans="T", check_finite=False)
    w = w + solve_triangular(R, rhs - N @ (Q @ w), trans="T", check_finite=False)
    return Q @ w, solve_triangular(R, w, check_finite=False)


def least_norm_on_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-norm solution of ``A v = b`` for linearly independent rows.

    Returns ``(v, duals)`` with ``2 v = A^T duals``.
    """
    A = np.atleast_2d(np.asarray(A, float))
    if A.shape[0] == 0:
        return np.zeros(A.shape[1]), np.zeros(0)
    v, y = _polish(A, np.asarray(b, float))
    return v, 2.0 * y


def kkt_residuals(p: LeastNormProblem, v: np.ndarray, duals: np.ndarray) -> dict:
    """KKT certificate measures for a candidate primal/dual pair.

    ``feasibility`` is the worst constraint violation divided by the problem's
    rhs scale; the other entries are absolute.
    """
    v = np.asarray(v, float)
    duals = np.asarray(duals, float)
    if p.n_rows == 0:
        return {"stationarity": float(np.linalg.norm(2 * v)), "feasibility": 0.0,
                "min_dual": 0.0, "comp_slack": 0.0}
    slack = p.A @ v - p.b
    viol = np.where(p.is_eq, np.abs(slack), np.maximum(-slack, 0.0))
    ineq = ~p.is_eq
    return {
        "stationarity": float(np.linalg.norm(2 * v - p.A.T @ duals)),
        "feasibility": float(np.max(viol)) / p.rhs_scale(),
        "min_dual": float(np.min(duals[ineq], initial=0.0)),
        "comp_slack": float(np.max(np.abs(duals[ineq] * slack[ineq]), initial=0.0)),
    }


def _certify(p: LeastNormProblem, res: QPResult) -> QPResult:
    """Mark the result NumericalFailure unless its KKT certificate holds.

    Tolerances are applied to scale-free measures: residuals are divided by
    ``max(rhs scale, |A| |v|)`` and duals by ``max(1, max |dual|)``.
    """
    r = kkt_residuals(p, res.v, res.duals)
    res.extra["kkt"] = r
    vnorm = float(np.linalg.norm(res.v))
    resid_scale = max(p.rhs_scale(), float(np.max(np.linalg.norm(p.A, axis=1),
                                                  initial=0.0)) * vnorm)
    dual_scale = max(1.0, float(np.max(np.abs(res.duals), initial=0.0)))
    if (r["feasibility"] * p.rhs_scale() > TOL_FEAS * resid_scale
            or r["min_dual"] < -TOL_DUAL * dual_scale
            or r["stationarity"] > TOL_KKT * max(1.0, vnorm)
            or r["comp_slack"] > TOL_CS * dual_scale * resid_scale):
        res.status = Status.NUMERICAL_FAILURE
        res.message = f"KKT certificate failed: {r}"
    return res


def solve_active_set(p: LeastNormProblem, max_iter: int | None = None) -> QPResult:
    """Exact dual active-set solve of a least-norm program.

    Starts from the unconstrained minimizer ``v = 0``, brings in the equality
    rows, then repeatedly adds the most violated inequality. While moving
    toward a new row, any working-set inequality whose dual would turn
    negative is dropped (partial step) before the row is added. Ties pick
    the lowest row index. The strictly convex objective makes the result
    unique; it is returned with a KKT certificate.
    """
    m, n = p.n_rows, p.dim
    budget = max_iter if max_iter is not None else 100 * max(m, 1)
    v = np.zeros(n)
    work: list[int] = []      # row indices in the working set
    sgn: list[float] = []     # orientation used for each working row
    u: list[float] = []       # duals in the oriented convention
    scale = p.rhs_scale()
    tol = TOL_FEAS * scale * 1e-2
    it = 0
    redundant: list[int] = []

    def fail(status, msg):
        return QPResult(v=v.copy(), duals=np.zeros(m), active=tuple(sorted(work)),
                        status=status, iterations=it, message=msg)

    def add(i: int):
        """Bring row ``i`` into the working set. Returns an error string or None."""
        nonlocal v, it
        orient = 1.0
        if p.is_eq[i] and p.b[i] - p.A[i] @ v < 0:
            orient = -1.0
        a = orient * p.A[i]
        bi = orient * p.b[i]
        up = 0.0
        anorm = float(np.sqrt(a @ a))
        while True:
            it += 1
            if it > budget:
                return "iteration budget exhausted"
            if work:
                N = np.array(sgn)[:, None] * p.A[work]
                r, w = _project(N, a)
                z = 0.5 * w
            else:
                r = np.zeros(0)
                z = 0.5 * a
            slack = bi - a @ v
            # blocking working inequality: positive r and smallest u/r
            t2, jblock = np.inf, -1
            for k, row in enumerate(work):
                if not p.is_eq[row] and r[k] > 1e-14:
                    ratio = u[k] / r[k]
                    if ratio < t2 or (ratio == t2 and row < work[jblock]):
                        t2, jblock = ratio, k
            dependent = 2.0 * np.sqrt(z @ z) <= _DEP_TOL * max(anorm, 1e-300)
            if dependent:
                if p.is_eq[i] and abs(slack) <= tol:
                    redundant.append(i)
                    return None
                if jblock < 0:
                    return f"row {i} cannot be satisfied together with rows {sorted(work)}"
                t = t2
            else:
                t1 = slack / (z @ a)
                if t1 <= t2:
                    v = v + t1 * z
                    for k in range(len(u)):
                        u[k] -= t1 * r[k]
                    work.append(i)
                    sgn.append(orient)
                    u.append(up + t1)
                    return None
                t = t2
                v = v + t * z
            for k in range(len(u)):
                u[k] -= t * r[k]
            up += t
            del work[jblock], sgn[jblock], u[jblock]

    for i in np.flatnonzero(p.is_eq):
        err = add(int(i))
        if err:
            return fail(Status.INFEASIBLE if "cannot" in err else Status.NUMERICAL_FAILURE, err)

    ineq = np.flatnonzero(~p.is_eq)
    while True:
        if ineq.size == 0:
            break
        viol = p.b[ineq] - p.A[ineq] @ v
        for k, row in enumerate(ineq):
            if row in work:
                viol[k] = -np.inf
        k = int(np.argmax(viol))  # argmax returns the lowest index on ties
        if viol[k] <= tol:
            break
        err = add(int(ineq[k]))
        if err:
            return fail(Status.INFEASIBLE if "cannot" in err else Status.NUMERICAL_FAILURE, err)

    duals = np.zeros(m)
    if work:
        order = np.argsort(work)
        rows = np.asarray(work)[order]
        v, y = _polish(p.A[rows], p.b[rows])
        duals[rows] = 2.0 * y
    else:
        v = np.zeros(n)
    res = QPResult(v=v, duals=duals, active=tuple(int(x) for x in sorted(work)),
                   status=Status.OPTIMAL, iterations=it,
                   extra={"redundant": tuple(redundant)})
    return _certify(p, res)


def _lstsq_least_norm(A: np.ndarray, b: np.ndarray):
    """SVD-based minimum-norm solution; tolerates dependent rows."""
    if A.shape[0] == 0:
        return np.zeros(A.shape[1]), np.zeros(0), 0.0
    v = np.linalg.lstsq(A, b, rcond=None)[0]
    resid = float(np.max(np.abs(A @ v - b)))
    duals = np.linalg.lstsq(A.T, 2.0 * v, rcond=None)[0]
    return v, duals, resid


def solve_enumerate(p: LeastNormProblem) -> QPResult:
    """Exhaustive active-set enumeration oracle.

    Solves the equality system for every subset of inequality rows (equality
    rows always included) and keeps the feasible candidate of least norm. The
    optimum is the least-norm point of the face it lies on, so it is always
    among the candidates. Near-ties prefer a candidate whose duals are
    nonnegative.
    """
    n_in = p.n_ineq
    if n_in > ENUM_MAX_INEQ:
        raise ValueError(f"enumeration oracle supports at most {ENUM_MAX_INEQ} "
                         f"inequality rows, got {n_in}")
    eq = np.flatnonzero(p.is_eq)
    ineq = np.flatnonzero(~p.is_eq)
    scale = p.rhs_scale()
    best = None
    for size in range(n_in + 1):
        for subset in itertools.combinations(ineq, size):
            rows = np.sort(np.r_[eq, np.asarray(subset, int)]).astype(int)
            v, y, resid = _lstsq_least_norm(p.A[rows], p.b[rows])
            if resid > TOL_FEAS * scale:
                continue
            if ineq.size and np.min(p.A[ineq] @ v - p.b[ineq]) < -TOL_FEAS * scale:
                continue
            obj = float(v @ v)
            dual_ok = bool(np.all(y[~p.is_eq[rows]] >= -TOL_DUAL)) if rows.size else True
            key = (obj, not dual_ok)
            if best is None or obj < best[0][0] * (1 - 1e-12) - 1e-300 or (
                    abs(obj - best[0][0]) <= 1e-12 * max(obj, 1e-300)
                    and key[1] < best[0][1]):
                best = (key, v, y, rows)
    if best is None:
        return QPResult(v=np.zeros(p.dim), duals=np.zeros(p.n_rows), active=(),
                        status=Status.INFEASIBLE,
                        message="no active subset yields a feasible point")
    _, v, y, rows = best
    duals = np.zeros(p.n_rows)
    duals[rows] = y
    return QPResult(v=v, duals=duals, active=tuple(int(r) for r in rows),
                    status=Status.OPTIMAL)
