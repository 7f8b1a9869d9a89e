"""Bounded-variable primal revised simplex on sparse data.

Solves::

    min c.x   s.t.  row_lo <= A x <= row_hi,   lb <= x <= ub

by appending one logical column per row (``A x - s = 0`` with
``row_lo <= s <= row_hi``) and starting from the all-logical basis.
Phase 1 minimises the sum of bound infeasibilities of the basic variables
(composite costs, recomputed each iteration); phase 2 uses the true costs.

Pricing is Dantzig (largest reduced cost) with a Harris two-pass ratio test.
After ``stall_limit`` consecutive degenerate pivots the method switches to
Bland's smallest-index rule until a step makes progress again.

The basis inverse is an LU factorization (SuperLU) followed by a
product-form eta file, refactorized every ``refactor_every`` pivots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

LOWER, UPPER, FREE, BASIC = 0, 1, 2, 3

PIVOT_TOL = 1e-9


@dataclass
class SimplexResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit | numerical
    x: np.ndarray
    row_activity: np.ndarray
    y: np.ndarray
    d: np.ndarray
    objective: float
    iterations: int
    basis: np.ndarray


def geometric_scaling(A: sp.csc_matrix, passes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors R, C (powers of two) so R A C has entries near 1."""
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    if A.nnz == 0:
        return R, C
    coo = A.tocoo()
    rows, cols = coo.row, coo.col
    logv = np.log2(np.abs(coo.data))
    for _ in range(passes):
        v = logv + np.log2(R)[rows] + np.log2(C)[cols]
        rmax = np.full(m, -np.inf)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, rows, v)
        np.minimum.at(rmin, rows, v)
        has = np.isfinite(rmax)
        R[has] *= 2.0 ** (-(rmax[has] + rmin[has]) / 2)
        v = logv + np.log2(R)[rows] + np.log2(C)[cols]
        cmax = np.full(n, -np.inf)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, cols, v)
        np.minimum.at(cmin, cols, v)
        has = np.isfinite(cmax)
        C[has] *= 2.0 ** (-(cmax[has] + cmin[has]) / 2)
    return 2.0 ** np.round(np.log2(R)), 2.0 ** np.round(np.log2(C))


class _Basis:
    """LU of the basis matrix plus product-form eta updates."""

    def __init__(self, M: sp.csc_matrix, basis: np.ndarray):
        self.M = M
        self.lu = splu(M[:, basis].tocsc(), permc_spec="COLAMD")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, a in self.etas:
            wr = w[r] / a[r]
            w -= a * wr
            w[r] = wr
        return w

    def btran(self, v: np.ndarray) -> np.ndarray:
        w = v.copy()
        for r, a in reversed(self.etas):
            w[r] = (w[r] - (a @ w - a[r] * w[r])) / a[r]
        return self.lu.solve(w, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


def simplex(
    c: np.ndarray,
    A: sp.spmatrix,
    row_lo: np.ndarray,
    row_hi: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    *,
    feas_tol: float = 1e-7,
    opt_tol: float = 1e-7,
    max_iter: int | None = None,
    refactor_every: int = 64,
    stall_limit: int = 40,
    scale: bool = True,
) -> SimplexResult:
    A = sp.csc_matrix(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    if scale:
        R, C = geometric_scaling(A)
    else:
        R, C = np.ones(m), np.ones(n)
    As = sp.diags(R) @ A @ sp.diags(C)
    M = sp.hstack([As, -sp.identity(m)], format="csc")
    MT = M.T.tocsr()
    N = n + m
    L = np.concatenate([np.asarray(lb, float) / C, np.asarray(row_lo, float) * R])
    U = np.concatenate([np.asarray(ub, float) / C, np.asarray(row_hi, float) * R])
    cost = np.concatenate([c * C, np.zeros(m)])
    if max_iter is None:
        max_iter = max(1000, 20 * (m + n))

    status = np.empty(N, dtype=np.int8)
    x = np.zeros(N)
    fin_l, fin_u = np.isfinite(L), np.isfinite(U)
    x[fin_l] = L[fin_l]
    only_u = ~fin_l & fin_u
    x[only_u] = U[only_u]
    status[:] = FREE
    status[fin_l] = LOWER
    status[only_u] = UPPER
    basis = np.arange(n, N)
    status[basis] = BASIC
    fixed = fin_l & fin_u & (U - L <= 0)

    def reset_basics(fac: _Basis) -> None:
        nb = status != BASIC
        rhs = -(M[:, nb] @ x[nb])
        x[basis] = fac.ftran(rhs)

    fac = _Basis(M, basis)
    reset_basics(fac)

    it = 0
    stall = 0
    bland = False
    final_check = False
    result_status = "iteration_limit"
    phase1 = True
    while it < max_iter:
        if len(fac.etas) >= refactor_every:
            try:
                fac = _Basis(M, basis)
            except RuntimeError:
                return _finish("numerical", x, basis, As, M, cost, fac, R, C, n, m, it, phase1=False)
            reset_basics(fac)

        xB = x[basis]
        lB, uB = L[basis], U[basis]
        below = xB < lB - feas_tol
        above = xB > uB + feas_tol
        phase1 = bool(below.any() or above.any())
        if phase1:
            cB = np.where(below, -1.0, np.where(above, 1.0, 0.0))
            y = fac.btran(cB)
            d = -(MT @ y)
        else:
            y = fac.btran(cost[basis])
            d = cost - MT @ y
        d[basis] = 0.0

        cand = (
            ((status == LOWER) & (d < -opt_tol))
            | ((status == UPPER) & (d > opt_tol))
            | ((status == FREE) & (np.abs(d) > opt_tol))
        )
        cand &= ~fixed
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            if phase1:
                if not final_check:
                    fac = _Basis(M, basis)
                    reset_basics(fac)
                    final_check = True
                    continue
                result_status = "infeasible"
                break
            if not final_check:
                # fresh factorization before declaring optimality
                fac = _Basis(M, basis)
                reset_basics(fac)
                final_check = True
                continue
            result_status = "optimal"
            break
        final_check = False

        q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
        direction = 1.0 if d[q] < 0 else -1.0
        col = M[:, q].toarray().ravel()
        alpha = fac.ftran(col)
        delta = -direction * alpha  # rate of change of basic values

        # ratio test over basic variables
        dec = delta < -PIVOT_TOL
        inc = delta > PIVOT_TOL
        target = np.full(m, np.nan)
        # decreasing basics block at lB (or at uB when coming down from above)
        t_dec = np.where(above, uB, lB)
        t_dec = np.where(below, np.nan, t_dec)
        t_inc = np.where(below, lB, uB)
        t_inc = np.where(above, np.nan, t_inc)
        target[dec] = t_dec[dec]
        target[inc] = t_inc[inc]
        ok = np.isfinite(target)
        rows_ok = np.flatnonzero(ok)
        ratios = np.full(m, np.inf)
        if rows_ok.size:
            gap = np.abs(xB[rows_ok] - target[rows_ok])
            ratios[rows_ok] = gap / np.abs(delta[rows_ok])
        flip = U[q] - L[q] if (np.isfinite(L[q]) and np.isfinite(U[q])) else np.inf

        if rows_ok.size == 0:
            r = -1
            t = np.inf
        elif bland:
            tmin = ratios[rows_ok].min()
            ties = rows_ok[ratios[rows_ok] <= tmin + 1e-12]
            r = int(ties[np.argmin(basis[ties])])
            t = ratios[r]
        else:
            relaxed = (np.abs(xB[rows_ok] - target[rows_ok]) + feas_tol) / np.abs(delta[rows_ok])
            tmax = relaxed.min()
            pool = rows_ok[ratios[rows_ok] <= tmax]
            r = int(pool[np.argmax(np.abs(delta[pool]))])
            t = ratios[r]

        if np.isfinite(flip) and flip <= t:
            # bound flip of the entering variable, basis unchanged
            x[q] += direction * flip
            x[basis] = xB + delta * flip
            status[q] = UPPER if status[q] == LOWER else LOWER
            it += 1
            stall = 0
            bland = False
            continue
        if not np.isfinite(t):
            if phase1:
                result_status = "numerical"
            else:
                result_status = "unbounded"
            break
        t = max(t, 0.0)
        leaving = basis[r]
        x[q] += direction * t
        x[basis] = xB + delta * t
        x[leaving] = target[r]
        if L[leaving] == U[leaving] or target[r] == L[leaving]:
            status[leaving] = LOWER
        else:
            status[leaving] = UPPER
        status[q] = BASIC
        basis[r] = q
        fac.update(r, alpha)
        it += 1
        if t * max(abs(d[q]), 1.0) < 1e-12:
            stall += 1
            if stall >= stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
    return _finish(result_status, x, basis, As, M, cost, fac, R, C, n, m, it, phase1=phase1)


def _finish(status_str, x, basis, As, M, cost, fac, R, C, n, m, it, phase1) -> SimplexResult:
    try:
        y_s = fac.btran(cost[basis])
    except Exception:  # noqa: BLE001 - factor may be unusable after a numerical failure
        y_s = np.zeros(m)
    d_s = cost - M.T @ y_s
    d_s[basis] = 0.0
    xs = x[:n] * C
    y = y_s * R
    d = d_s[:n] / C
    obj = float(cost[:n] @ x[:n])
    row_act = (As @ x[:n]) / R
    return SimplexResult(status_str, xs, row_act, y, d, obj, it, basis.copy())
