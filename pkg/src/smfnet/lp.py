"""Small dense linear programs over box-bounded variables.

Every LP in the package has the form::

    minimize    c @ x
    subject to  A @ x == b,   lb <= x <= ub      (lb, ub finite)

which is exactly the shape of constrained-zonotope queries (latent variables
live in the unit cube). The solver is a bounded-variable primal simplex on a
dense tableau: phase 1 with one artificial per row, phase 2 on the original
cost. Entering variables follow Dantzig's rule and fall back to Bland's rule
after a run of degenerate pivots, which rules out cycling.

Two batched entry points reuse work across related problems:

* :func:`feasible_many` checks many right-hand sides against one matrix.
  After the first cold solve, each new right-hand side starts from the
  previous basis with a single homotopy artificial carrying the change in
  ``b``; phase 1 then drives that artificial to zero.
* :func:`minimize_many` optimizes many cost vectors over one feasible
  region, sharing a single phase 1.

The kernels are compiled with numba; results are deterministic for identical
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
NUMERICAL = 2
ITERATION_LIMIT = 3

PIVOT_TOL = 1e-9
COST_TOL = 1e-10
DEGENERATE_RUN = 25
DRIFT_TOL = 1e-11
HARRIS_TOL = 1e-11
REFRESH_EVERY = 40


class LPIterationLimit(RuntimeError):
    """Raised when the simplex exceeds its pivot budget (degenerate input)."""


class LPNumericalError(RuntimeError):
    """Raised when rounding error cannot be brought below the feasibility tolerance."""


@dataclass(frozen=True)
class LPResult:
    status: int
    x: np.ndarray
    fun: float
    residual: float
    iterations: int

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL


# Tableau layout: columns [structural n | homotopy 1 | artificial m | rhs],
# last row holds reduced costs and -objective.


@njit(cache=True)
def _pivot(T, basis, is_basic, r, j):
    rows, cols = T.shape
    inv = 1.0 / T[r, j]
    for k in range(cols):
        T[r, k] *= inv
    T[r, j] = 1.0
    for i in range(rows):
        if i == r:
            continue
        f = T[i, j]
        if f != 0.0:
            for k in range(cols):
                T[i, k] -= f * T[r, k]
            T[i, j] = 0.0
    is_basic[basis[r]] = False
    basis[r] = j
    is_basic[j] = True


@njit(cache=True)
def _flip_column(T, j, u):
    # substitute y_j -> u - y_j for a nonbasic variable moving to its other bound
    rows, cols = T.shape
    rhs = cols - 1
    for i in range(rows):
        a = T[i, j]
        if a != 0.0:
            T[i, rhs] -= a * u
            T[i, j] = -a


@njit(cache=True)
def _ratio_bland(T, basis, ub, enter):
    """Textbook minimum ratio; ties go to the smallest basic index."""
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    step = ub[enter]
    leave = -1
    leave_upper = False
    for i in range(m):
        a = T[i, enter]
        if a > PIVOT_TOL:
            t = T[i, rhs] / a
            upper = False
        elif a < -PIVOT_TOL:
            u = ub[basis[i]]
            if u == np.inf:
                continue
            t = (u - T[i, rhs]) / (-a)
            upper = True
        else:
            continue
        if t < 0.0:
            t = 0.0
        if t < step - 1e-12 or (leave >= 0 and t <= step + 1e-12 and basis[i] < basis[leave]):
            step = t
            leave = i
            leave_upper = upper
    return step, leave, leave_upper


@njit(cache=True)
def _ratio_harris(T, basis, ub, enter):
    """Two-pass ratio test: among rows within the relaxed minimum ratio,
    take the largest pivot so that tiny pivots are avoided."""
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    theta = ub[enter]
    for i in range(m):
        a = T[i, enter]
        if a > PIVOT_TOL:
            t = (T[i, rhs] + HARRIS_TOL) / a
        elif a < -PIVOT_TOL:
            u = ub[basis[i]]
            if u == np.inf:
                continue
            t = (u - T[i, rhs] + HARRIS_TOL) / (-a)
        else:
            continue
        if t < theta:
            theta = t
    leave = -1
    leave_upper = False
    best_piv = 0.0
    step = ub[enter]
    for i in range(m):
        a = T[i, enter]
        if a > PIVOT_TOL:
            t = T[i, rhs] / a
            upper = False
        elif a < -PIVOT_TOL:
            u = ub[basis[i]]
            if u == np.inf:
                continue
            t = (u - T[i, rhs]) / (-a)
            upper = True
        else:
            continue
        if t <= theta and abs(a) > best_piv:
            best_piv = abs(a)
            leave = i
            leave_upper = upper
            step = t if t > 0.0 else 0.0
    if leave >= 0 and ub[enter] < step:
        return ub[enter], -1, False
    return step, leave, leave_upper


@njit(cache=True)
def _iterate(T, basis, is_basic, flipped, ub, enterable, max_iter, it0):
    """Run simplex pivots until optimal; returns (status, iterations)."""
    rows, cols = T.shape
    m = rows - 1
    rhs = cols - 1
    ncol = cols - 1
    it = it0
    degenerate = 0
    while True:
        bland = degenerate >= DEGENERATE_RUN
        enter = -1
        best = -COST_TOL
        for j in range(ncol):
            if is_basic[j] or not enterable[j]:
                continue
            d = T[m, j]
            if d < best:
                enter = j
                if bland:
                    break
                best = d
        if enter < 0:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        it += 1

        if bland:
            step, leave, leave_upper = _ratio_bland(T, basis, ub, enter)
        else:
            step, leave, leave_upper = _ratio_harris(T, basis, ub, enter)

        if step < 1e-12:
            degenerate += 1
        else:
            degenerate = 0

        if leave < 0:
            _flip_column(T, enter, ub[enter])
            flipped[enter] = not flipped[enter]
            continue

        if leave_upper:
            b = basis[leave]
            for k in range(cols):
                T[leave, k] = -T[leave, k]
            T[leave, b] = 1.0
            T[leave, rhs] = ub[b] + T[leave, rhs]
            flipped[b] = not flipped[b]
        _pivot(T, basis, is_basic, leave, enter)


@njit(cache=True)
def _cold_start(A, b, U):
    """Build the phase-1 tableau for ``A y = b``, ``0 <= y <= U``."""
    m, n = A.shape
    ncol = n + 1 + m
    T = np.zeros((m + 1, ncol + 1))
    rhs = ncol
    basis = np.empty(m, np.int64)
    is_basic = np.zeros(ncol, np.bool_)
    flipped = np.zeros(ncol, np.bool_)
    signs = np.ones(m)
    ub = np.empty(ncol)
    for j in range(n):
        ub[j] = U[j]
    ub[n] = 0.0
    for j in range(n + 1, ncol):
        ub[j] = np.inf
    for i in range(m):
        s = 1.0 if b[i] >= 0.0 else -1.0
        signs[i] = s
        for j in range(n):
            T[i, j] = s * A[i, j]
        T[i, n + 1 + i] = 1.0
        T[i, rhs] = s * b[i]
        basis[i] = n + 1 + i
        is_basic[n + 1 + i] = True
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += T[i, j]
        T[m, j] = -acc
    acc = 0.0
    for i in range(m):
        acc += T[i, rhs]
    T[m, rhs] = -acc
    return T, basis, is_basic, flipped, signs, ub


@njit(cache=True)
def _extract(T, basis, flipped, U, n):
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    y = np.zeros(n)
    for i in range(m):
        j = basis[i]
        if j < n:
            y[j] = T[i, rhs]
    for j in range(n):
        if flipped[j]:
            y[j] = U[j] - y[j]
        if y[j] < 0.0:
            y[j] = 0.0
        elif y[j] > U[j]:
            y[j] = U[j]
    return y


@njit(cache=True)
def _set_cost(T, basis, flipped, c, n):
    m = T.shape[0] - 1
    cols = T.shape[1]
    for j in range(cols):
        T[m, j] = 0.0
    for j in range(n):
        T[m, j] = -c[j] if flipped[j] else c[j]
    for i in range(m):
        bj = basis[i]
        if bj < n:
            cb = -c[bj] if flipped[bj] else c[bj]
            if cb != 0.0:
                for j in range(cols):
                    T[m, j] -= cb * T[i, j]


@njit(cache=True)
def _residual(A, b, y):
    m, n = A.shape
    worst = 0.0
    for i in range(m):
        acc = -b[i]
        for j in range(n):
            acc += A[i, j] * y[j]
        if abs(acc) > worst:
            worst = abs(acc)
    return worst


@njit(cache=True)
def _reinvert(A, b, signs, T, basis, flipped, ub, n):
    """Rebuild the tableau rows from the original data at the current basis.

    Long pivot sequences accumulate rounding error; recomputing ``B^-1``
    from scratch clears it. Returns False when the basis matrix is singular
    or the recomputed basic values leave their bounds.
    """
    m = A.shape[0]
    ncol = T.shape[1] - 1
    M = np.zeros((m, ncol + 1))
    for i in range(m):
        for j in range(n):
            M[i, j] = signs[i] * A[i, j]
        M[i, n + 1 + i] = 1.0
        M[i, ncol] = signs[i] * b[i]
    for j in range(ncol):
        if flipped[j]:
            for i in range(m):
                a = M[i, j]
                if a != 0.0:
                    M[i, ncol] -= a * ub[j]
                    M[i, j] = -a
    Bm = np.empty((m, m))
    for i in range(m):
        for r in range(m):
            Bm[r, i] = M[r, basis[i]]
    try:
        X = np.linalg.solve(Bm, M)
    except Exception:
        return False
    for i in range(m):
        v = X[i, ncol]
        if not (v >= -1e-9 and v <= ub[basis[i]] + 1e-9):
            return False
    for i in range(m):
        for j in range(ncol + 1):
            T[i, j] = X[i, j]
    return True


@njit(cache=True)
def _phase1(A, b, U, max_iter, it0):
    m, n = A.shape
    T, basis, is_basic, flipped, signs, ub = _cold_start(A, b, U)
    ncol = T.shape[1] - 1
    enterable = np.zeros(ncol, np.bool_)
    enterable[:n] = True
    status, it = _iterate(T, basis, is_basic, flipped, ub, enterable, max_iter, it0)
    return status, it, T, basis, is_basic, flipped, signs, ub, enterable


@njit(cache=True)
def _solve_kernel(A, b, C, U, phase2, feas_tol, max_iter):
    """Phase 1 once, then phase 2 for each row of ``C`` (if ``phase2``).

    Returns (status, Y, iterations); Y has one row per cost vector (or one
    row holding the phase-1 point). Each phase-2 point is checked against
    the equality rows; drift triggers a reinversion, then a cold restart.
    """
    m, n = A.shape
    status, it, T, basis, is_basic, flipped, signs, ub, enterable = _phase1(A, b, U, max_iter, 0)
    ncol = T.shape[1] - 1
    k = C.shape[0] if phase2 else 1
    Y = np.zeros((k, n))
    if status != OPTIMAL:
        return status, Y, it
    y = _extract(T, basis, flipped, U, n)
    if _residual(A, b, y) > feas_tol:
        return INFEASIBLE, Y, it
    if not phase2:
        Y[0] = y
        return OPTIMAL, Y, it
    for j in range(n + 1, ncol):
        ub[j] = 0.0
    for r in range(k):
        for attempt in range(3):
            if attempt == 1:
                if not _reinvert(A, b, signs, T, basis, flipped, ub, n):
                    continue
            elif attempt == 2:
                status, it, T, basis, is_basic, flipped, signs, ub, enterable = _phase1(A, b, U, max_iter, it)
                if status != OPTIMAL:
                    return status, Y, it
                for j in range(n + 1, ncol):
                    ub[j] = 0.0
            _set_cost(T, basis, flipped, C[r], n)
            status, it = _iterate(T, basis, is_basic, flipped, ub, enterable, max_iter, it)
            if status != OPTIMAL:
                return status, Y, it
            Y[r] = _extract(T, basis, flipped, U, n)
            res = _residual(A, b, Y[r])
            if res <= DRIFT_TOL:
                break
        if res > feas_tol:
            return NUMERICAL, Y, it
    return OPTIMAL, Y, it


@njit(cache=True)
def _drop_homotopy(T, basis, is_basic, flipped, ub, n):
    """Pivot the homotopy column out of the basis (it sits at a bound)."""
    m = T.shape[0] - 1
    for r in range(m):
        if basis[r] == n:
            best = -1
            bestv = 1e-9
            for j in range(n):
                if not is_basic[j] and abs(T[r, j]) > bestv:
                    best = j
                    bestv = abs(T[r, j])
            if best < 0:
                return False
            # degenerate exchange: the homotopy variable leaves at its current bound
            val = T[r, T.shape[1] - 1]
            at_upper = val > 0.5 * ub[n]
            if at_upper:
                cols = T.shape[1]
                for k in range(cols):
                    T[r, k] = -T[r, k]
                T[r, n] = 1.0
                T[r, cols - 1] = ub[n] + T[r, cols - 1]
                flipped[n] = not flipped[n]
            _pivot(T, basis, is_basic, r, best)
            return True
    return True


@njit(cache=True)
def _feasible_many_kernel(A, B, U, feas_tol, max_iter):
    """Feasibility of ``A y = B[k]``, ``0 <= y <= U`` for every row ``k``."""
    m, n = A.shape
    K = B.shape[0]
    ok = np.zeros(K, np.bool_)
    Y = np.zeros((K, n))
    have = False
    T = np.zeros((1, 1))
    basis = np.zeros(1, np.int64)
    is_basic = np.zeros(1, np.bool_)
    flipped = np.zeros(1, np.bool_)
    signs = np.ones(1)
    ub = np.zeros(1)
    enterable = np.zeros(1, np.bool_)
    prev = np.zeros(m)
    since = 0
    for k in range(K):
        b = B[k]
        solved = False
        if have and since < REFRESH_EVERY:
            ncol = T.shape[1] - 1
            rhs = ncol
            # homotopy column h = Binv S (b - prev); variable a in [0, 1] starts at 1
            diff = np.empty(m)
            for i in range(m):
                diff[i] = signs[i] * (b[i] - prev[i])
            for i in range(m):
                acc = 0.0
                for q in range(m):
                    v = T[i, n + 1 + q] * diff[q]
                    acc += -v if flipped[n + 1 + q] else v
                # a' = 1 - a is nonbasic at 0 with column -h
                T[i, n] = -acc
            flipped[n] = True
            ub[n] = 1.0
            for j in range(ncol + 1):
                T[m, j] = 0.0
            T[m, n] = -1.0
            enterable[n] = True
            status, _ = _iterate(T, basis, is_basic, flipped, ub, enterable, max_iter, 0)
            if status == OPTIMAL:
                # a' reached 1 and got flipped back (nonbasic) or sits basic at 1
                done = True
                if is_basic[n]:
                    for i in range(m):
                        if basis[i] == n:
                            val = T[i, rhs]
                            if flipped[n]:
                                val = 1.0 - val
                            done = val <= 1e-12
                    if done:
                        done = _drop_homotopy(T, basis, is_basic, flipped, ub, n)
                else:
                    done = not flipped[n]
                enterable[n] = False
                ub[n] = 0.0
                if done:
                    y = _extract(T, basis, flipped, U, n)
                    if _residual(A, b, y) <= feas_tol:
                        ok[k] = True
                        Y[k] = y
                        solved = True
                        for i in range(m):
                            prev[i] = b[i]
                        since += 1
        if not solved:
            T, basis, is_basic, flipped, signs, ub = _cold_start(A, b, U)
            ncol = T.shape[1] - 1
            enterable = np.zeros(ncol, np.bool_)
            enterable[:n] = True
            status, _ = _iterate(T, basis, is_basic, flipped, ub, enterable, max_iter, 0)
            if status == ITERATION_LIMIT:
                return status, ok, Y
            have = False
            since = 0
            y = _extract(T, basis, flipped, U, n)
            if status == OPTIMAL and _residual(A, b, y) <= feas_tol:
                ok[k] = True
                Y[k] = y
                for i in range(m):
                    prev[i] = b[i]
                # artificials stay pinned at zero from here on
                for j in range(n + 1, ncol):
                    ub[j] = 0.0
                have = True
    return OPTIMAL, ok, Y


def _prepare(A, b, lb, ub):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float).reshape(-1)
    ub = np.asarray(ub, dtype=float).reshape(-1)
    n = lb.shape[0]
    if A.ndim != 2:
        A = A.reshape(-1, n)
    if A.shape[1] != n or lb.shape != ub.shape:
        raise ValueError("inconsistent LP dimensions")
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("variable bounds must be finite")
    scale = np.max(np.abs(A), axis=1) if n else np.zeros(A.shape[0])
    scale = np.where(scale > 0.0, scale, 1.0)
    return np.ascontiguousarray(A / scale[:, None]), scale, lb, ub


def _budget(m, n, max_iter):
    return int(50 * (m + n) + 100 if max_iter is None else max_iter)


def solve(c, A_eq, b_eq, lb, ub, *, feas_tol=1e-9, max_iter=None) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_eq @ x == b_eq`` and ``lb <= x <= ub``.

    Equality rows are scaled to unit max-norm before solving; ``feas_tol``
    bounds the scaled residual of an accepted solution. An infeasible
    problem returns ``status == INFEASIBLE`` rather than raising.
    """
    c = np.asarray(c, dtype=float).reshape(1, -1)
    status, X, its = _minimize(c, A_eq, b_eq, lb, ub, feas_tol, max_iter)
    x = X[0]
    if status != OPTIMAL:
        return LPResult(status, x, np.inf, np.inf, its)
    return LPResult(OPTIMAL, x, float(c[0] @ x), 0.0, its)


def minimize_many(C, A_eq, b_eq, lb, ub, *, feas_tol=1e-9, max_iter=None):
    """Minimize each row of ``C`` over one polytope.

    Returns ``(X, values)`` with one optimal point per cost row, or
    ``(None, None)`` when the polytope is empty.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    status, X, _ = _minimize(C, A_eq, b_eq, lb, ub, feas_tol, max_iter)
    if status != OPTIMAL:
        return None, None
    return X, np.einsum("ij,ij->i", C, X)


def _minimize(C, A_eq, b_eq, lb, ub, feas_tol, max_iter):
    As, scale, lb, ub = _prepare(A_eq, np.zeros(0), lb, ub)
    n = lb.shape[0]
    bs = np.asarray(b_eq, dtype=float).reshape(-1) / scale
    U = ub - lb
    if np.any(U < 0):
        return INFEASIBLE, np.tile(lb, (C.shape[0], 1)), 0
    if C.shape[1] != n:
        raise ValueError("cost vector has wrong length")
    rhs = bs - As @ lb
    budget = _budget(As.shape[0], n, max_iter)
    status, Y, its = _solve_kernel(As, rhs, np.ascontiguousarray(C), U, True, feas_tol, budget)
    if status == ITERATION_LIMIT:
        raise LPIterationLimit(f"simplex exceeded {budget} pivots")
    if status == NUMERICAL:
        raise LPNumericalError("phase-2 solution violates the equality rows after refactoring")
    return status, lb + Y, its


def find_feasible(A_eq, b_eq, lb, ub, *, feas_tol=1e-9, max_iter=None) -> LPResult:
    """Phase-1 only: return a point of ``{A x = b, lb <= x <= ub}`` if one exists."""
    As, scale, lb, ub = _prepare(A_eq, np.zeros(0), lb, ub)
    n = lb.shape[0]
    bs = np.asarray(b_eq, dtype=float).reshape(-1) / scale
    U = ub - lb
    if np.any(U < 0):
        return LPResult(INFEASIBLE, lb.copy(), np.inf, np.inf, 0)
    if As.shape[0] == 0:
        return LPResult(OPTIMAL, lb + 0.5 * U, 0.0, 0.0, 0)
    budget = _budget(As.shape[0], n, max_iter)
    status, Y, its = _solve_kernel(As, bs - As @ lb, np.zeros((1, n)), U, False, feas_tol, budget)
    if status == ITERATION_LIMIT:
        raise LPIterationLimit(f"simplex exceeded {budget} pivots")
    x = lb + Y[0]
    res = float(np.max(np.abs(As @ x - bs)))
    return LPResult(OPTIMAL if status == OPTIMAL else INFEASIBLE, x, 0.0, res, its)


def feasible_many(A_eq, B_eq, lb, ub, *, feas_tol=1e-9, max_iter=None):
    """Check ``{A x = B[k], lb <= x <= ub}`` for every row ``B[k]``.

    Returns ``(ok, X)``: a boolean per row and a witness per feasible row.
    """
    As, scale, lb, ub = _prepare(A_eq, np.zeros(0), lb, ub)
    n = lb.shape[0]
    B = np.atleast_2d(np.asarray(B_eq, dtype=float)) / scale[None, :]
    U = ub - lb
    K = B.shape[0]
    if np.any(U < 0):
        return np.zeros(K, bool), np.tile(lb, (K, 1))
    if As.shape[0] == 0:
        return np.ones(K, bool), np.tile(lb + 0.5 * U, (K, 1))
    budget = _budget(As.shape[0], n, max_iter)
    rhs = np.ascontiguousarray(B - (As @ lb)[None, :])
    status, ok, Y = _feasible_many_kernel(As, rhs, U, feas_tol, budget)
    if status == ITERATION_LIMIT:
        raise LPIterationLimit(f"simplex exceeded {budget} pivots")
    return ok, lb + Y
