"""Small dense solvers: pivoted linear solve, two-phase simplex, active-set QP.

Sized for tens of variables and at most a few hundred constraints.  All
routines are pure functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DomainError, SingularMatrixError

FEASIBILITY_TOL = 1e-8
PIVOT_TOL = 1e-12
# reduced-cost / ratio-test tolerance inside the simplex tableau
_SIMPLEX_EPS = 1e-11
_MAX_SIMPLEX_ITER = 50_000
_MAX_QP_ITER = 10_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def solve_linear_system(A, b) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial (row) pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    vector_rhs = b.ndim == 1
    if b.shape[0] != n:
        raise DomainError(f"right-hand side has {b.shape[0]} rows, matrix has {n}")
    B = b.reshape(n, -1).copy()
    if n == 0:
        return B.ravel() if vector_rhs else B
    scale = np.max(np.abs(A))
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    threshold = PIVOT_TOL * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) < threshold:
            raise SingularMatrixError(f"pivot {A[p, k]:.3e} below threshold at column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            B[[k, p]] = B[[p, k]]
        factors = A[k + 1 :, k] / A[k, k]
        A[k + 1 :, k:] -= np.outer(factors, A[k, k:])
        B[k + 1 :] -= np.outer(factors, B[k])
    X = np.empty_like(B)
    for k in range(n - 1, -1, -1):
        X[k] = (B[k] - A[k, k + 1 :] @ X[k + 1 :]) / A[k, k]
    return X.ravel() if vector_rhs else X


@dataclass(frozen=True)
class SolveStatus:
    status: Literal["optimal", "infeasible", "unbounded"]
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0

    def __post_init__(self):
        if (self.status == OPTIMAL) != (self.x is not None):
            raise ValueError("solution vector must be present exactly when optimal")

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _as_bounds(bound, n, fill):
    if bound is None:
        return np.full(n, fill)
    arr = np.array(
        [fill if v is None else v for v in np.broadcast_to(np.asarray(bound, dtype=object), (n,))],
        dtype=float,
    )
    return arr


@dataclass(frozen=True)
class LinearProgram:
    """Optimize ``c @ x`` subject to ``A @ x <= b`` and ``lower <= x <= upper``.

    Missing bounds mean the variable is free on that side.
    """

    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: Literal["min", "max"] = "min"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = c.shape[0]
        A, b = _normalize_rows(self.A, self.b, n)
        lo = _as_bounds(self.lower, n, -np.inf)
        up = _as_bounds(self.upper, n, np.inf)
        if np.any(lo > up):
            raise DomainError("lower bound exceeds upper bound")
        if self.sense not in ("min", "max"):
            raise DomainError(f"sense must be 'min' or 'max', got {self.sense!r}")
        for name, val in (("c", c), ("A", A), ("b", b), ("lower", lo), ("upper", up)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class QuadraticProgram:
    """Minimize ``||M @ x + v||**2`` subject to ``A @ x <= b`` and box bounds."""

    M: np.ndarray
    v: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if v.shape[0] != M.shape[0]:
            raise DomainError(f"M has {M.shape[0]} rows but v has {v.shape[0]} entries")
        n = M.shape[1]
        A, b = _normalize_rows(self.A, self.b, n)
        lo = _as_bounds(self.lower, n, -np.inf)
        up = _as_bounds(self.upper, n, np.inf)
        if np.any(lo > up):
            raise DomainError("lower bound exceeds upper bound")
        for name, val in (("M", M), ("v", v), ("A", A), ("b", b), ("lower", lo), ("upper", up)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.M.shape[1]

    def objective(self, x) -> float:
        r = self.M @ np.asarray(x, dtype=float) + self.v
        return float(r @ r)


def _normalize_rows(A, b, n):
    if A is None:
        A = np.zeros((0, n))
    A = np.asarray(A, dtype=float).reshape(-1, n) if np.size(A) else np.zeros((0, n))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != b.shape[0]:
        raise DomainError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise DomainError("constraint data must be finite")
    return A, b


def _stacked_inequalities(A, b, lower, upper):
    """Fold finite box bounds into ``A x <= b`` rows."""
    n = A.shape[1]
    rows, rhs = [A], [b]
    eye = np.eye(n)
    up = np.isfinite(upper)
    lo = np.isfinite(lower)
    if up.any():
        rows.append(eye[up])
        rhs.append(upper[up])
    if lo.any():
        rows.append(-eye[lo])
        rhs.append(-lower[lo])
    return np.vstack(rows), np.concatenate(rhs)


# ---------------------------------------------------------------------------
# linear programming


def _simplex(T, basis, n_cols, iters):
    """Run Bland's-rule primal simplex on tableau ``T`` (last row = reduced costs).

    Only columns ``< n_cols`` may enter.  Returns ``(status, iters)``.
    """
    m = T.shape[0] - 1
    while True:
        if iters > _MAX_SIMPLEX_ITER:
            raise RuntimeError("simplex iteration limit reached")
        costs = T[-1, :n_cols]
        candidates = np.flatnonzero(costs < -_SIMPLEX_EPS)
        if candidates.size == 0:
            return OPTIMAL, iters
        col = int(candidates[0])
        column = T[:m, col]
        positive = column > _SIMPLEX_EPS
        if not positive.any():
            return UNBOUNDED, iters
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        tied = np.flatnonzero(ratios <= best + _SIMPLEX_EPS * max(1.0, abs(best)))
        row = int(min(tied, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        iters += 1


def _pivot(T, row, col):
    T[row] /= T[row, col]
    others = np.arange(T.shape[0]) != row
    T[others] -= np.outer(T[others, col], T[row])


def _standard_form(lp: LinearProgram):
    """Map ``x`` to nonnegative ``y`` with ``x = shift + S @ y``."""
    n = lp.n_vars
    cols, shift = [], np.zeros(n)
    extra_rows, extra_rhs = [], []
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lo):
            shift[j] = lo
            cols.append(e)
            if np.isfinite(up):
                row = np.zeros(n)
                row[j] = 1.0
                extra_rows.append(row)
                extra_rhs.append(up)
        elif np.isfinite(up):
            shift[j] = up
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    S = np.array(cols).T if cols else np.zeros((n, 0))
    A = lp.A
    b = lp.b
    if extra_rows:
        A = np.vstack([A, np.array(extra_rows)])
        b = np.concatenate([b, np.array(extra_rhs)])
    # A (shift + S y) <= b
    return S, shift, A @ S, b - A @ shift


def solve_lp(lp: LinearProgram) -> SolveStatus:
    """Two-phase dense simplex with Bland's rule.

    Infeasible and unbounded programs are reported through the status, never
    raised.
    """
    S, shift, A, b = _standard_form(lp)
    sign = -1.0 if lp.sense == "max" else 1.0
    c = sign * (lp.c @ S)
    m, k = A.shape

    # columns: y (k), slacks (m), artificials (one per negative-rhs row)
    neg = b < 0
    n_art = int(neg.sum())
    width = k + m + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :k] = A
    T[:m, k : k + m] = np.eye(m)
    T[:m, -1] = b
    T[:m][neg, : k + m] *= -1.0
    T[:m][neg, -1] *= -1.0
    basis = [k + i for i in range(m)]
    art_rows = np.flatnonzero(neg)
    for a, r in enumerate(art_rows):
        T[r, k + m + a] = 1.0
        basis[r] = k + m + a
    iters = 0

    if n_art:
        T[-1, k + m :] = 1.0
        T[-1, -1] = 0.0
        for r in art_rows:
            T[-1] -= T[r]
        _, iters = _simplex(T, basis, width, iters)
        if -T[-1, -1] > FEASIBILITY_TOL * max(1.0, np.abs(b).max()):
            return SolveStatus(INFEASIBLE, iterations=iters)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= k + m:
                nz = np.flatnonzero(np.abs(T[r, : k + m]) > 1e-9)
                if nz.size:
                    _pivot(T, r, int(nz[0]))
                    basis[r] = int(nz[0])
                else:
                    keep[r] = False
        rows = np.append(np.flatnonzero(keep), m)
        T = np.delete(T[rows], np.s_[k + m : width], axis=1)
        basis = [basis[r] for r in np.flatnonzero(keep)]

    width = T.shape[1] - 1
    T[-1, :] = 0.0
    T[-1, :k] = c
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    status, iters = _simplex(T, basis, width, iters)
    if status == UNBOUNDED:
        return SolveStatus(UNBOUNDED, iterations=iters)
    y = np.zeros(width)
    for r, j in enumerate(basis):
        y[j] = T[r, -1]
    x = shift + S @ y[:k]
    return SolveStatus(OPTIMAL, x, float(lp.c @ x), iters)


def feasible_point(A, b, lower=None, upper=None) -> np.ndarray | None:
    """A vertex of ``{x : A x <= b, lower <= x <= upper}`` or ``None`` if empty."""
    A = np.asarray(A, dtype=float)
    res = solve_lp(LinearProgram(np.zeros(A.shape[1]), A, b, lower, upper))
    return res.x if res.optimal else None


# ---------------------------------------------------------------------------
# quadratic programming


def _null_space(A, n):
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    return vt[rank:].T


def _independent(rows, candidate):
    if not rows:
        return np.linalg.norm(candidate) > 1e-12
    stacked = np.vstack(rows + [candidate])
    return np.linalg.matrix_rank(stacked, tol=1e-10) == len(rows) + 1


def _active_set(M, v, G, h, x, max_iter=_MAX_QP_ITER):
    """Primal active-set for ``min ||M x + v||^2`` s.t. ``G x <= h`` from feasible ``x``.

    Steps solve the equality-restricted subproblem as a least-squares problem
    on the null space of the working set, so a singular Hessian is fine.  Ties
    in the blocking and dropping rules go to the lowest constraint index.
    """
    n = x.shape[0]
    working: list[int] = []
    for i in np.flatnonzero(np.abs(G @ x - h) <= FEASIBILITY_TOL):
        if _independent([G[j] for j in working], G[i]):
            working.append(int(i))
    it = 0
    for it in range(1, max_iter + 1):
        W = G[working] if working else np.zeros((0, n))
        Z = _null_space(W, n)
        r = M @ x + v
        if Z.shape[1]:
            u, *_ = np.linalg.lstsq(M @ Z, -r, rcond=None)
            p = Z @ u
        else:
            p = np.zeros(n)
        if np.linalg.norm(p) <= 1e-12 * (1.0 + np.linalg.norm(x)) or np.linalg.norm(M @ p) <= 1e-14 * (
            1.0 + np.linalg.norm(r)
        ):
            grad = 2.0 * M.T @ r
            if not working:
                return x, it
            lam, *_ = np.linalg.lstsq(W.T, -grad, rcond=None)
            worst = int(np.argmin(lam))
            if lam[worst] >= -1e-10 * (1.0 + np.abs(grad).max()):
                return x, it
            working.pop(worst)
            continue
        Gp = G @ p
        slack = h - G @ x
        alpha, block = 1.0, None
        for i in range(G.shape[0]):
            if i in working or Gp[i] <= 1e-14:
                continue
            step = max(slack[i], 0.0) / Gp[i]
            if step < alpha - 1e-15:
                alpha, block = step, i
        x = x + alpha * p
        if block is not None:
            working.append(block)
    raise RuntimeError("active-set iteration limit reached")


def solve_qp(qp: QuadraticProgram) -> SolveStatus:
    """Convex QP by a primal active-set method.

    Deterministic choice among multiple minimizers: start from the minimum-norm
    unconstrained minimizer; if that is infeasible, project it onto the
    feasible region (itself a strictly convex QP started from the phase-one
    simplex vertex) and run the active-set method from the projection.
    """
    G, h = _stacked_inequalities(qp.A, qp.b, qp.lower, qp.upper)
    n = qp.n_vars
    x_free, *_ = np.linalg.lstsq(qp.M, -qp.v, rcond=None)
    if n == 0:
        x_free = np.zeros(0)
    tol = FEASIBILITY_TOL * (1.0 + np.abs(h)) if h.size else h
    if G.shape[0] == 0 or np.all(G @ x_free - h <= tol):
        return SolveStatus(OPTIMAL, x_free, qp.objective(x_free), 0)
    x0 = feasible_point(G, h)
    if x0 is None:
        return SolveStatus(INFEASIBLE)
    x_proj, it1 = _active_set(np.eye(n), -x_free, G, h, x0)
    x, it2 = _active_set(qp.M, qp.v, G, h, x_proj)
    return SolveStatus(OPTIMAL, x, qp.objective(x), it1 + it2)
