"""Bounded-variable revised primal simplex (dense, two-phase).

Rows ``lo <= A x <= hi`` are turned into equalities ``A x - s = 0`` with
bounded logical variables ``s``. Rows whose starting activity falls outside
their range get an artificial variable; phase 1 drives the artificials to
zero. Pricing is Dantzig's rule with a switch to Bland's rule after a run of
degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
OPT_TOL = 1e-9
REFACTOR_EVERY = 50
DEGENERATE_RUN = 30

AT_LB, AT_UB, FREE, BASIC = 0, 1, 2, 3


class SimplexError(RuntimeError):
    """Numerical breakdown or cycling beyond the anti-cycling safeguard."""


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, M, cost, L, U, status, basis):
        self.M, self.L, self.U = M, L, U
        self.status = status
        self.basis = basis
        self.cost = cost
        self.x = np.zeros(M.shape[1])
        nb = status != BASIC
        self.x[nb & (status == AT_LB)] = L[nb & (status == AT_LB)]
        self.x[nb & (status == AT_UB)] = U[nb & (status == AT_UB)]
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SimplexError("singular basis") from None
        nb = np.ones(self.M.shape[1], dtype=bool)
        nb[self.basis] = False
        self.x[self.basis] = -self.Binv @ (self.M[:, nb] @ self.x[nb])

    def run(self, max_iter: int) -> tuple[str, int]:
        M, L, U = self.M, self.L, self.U
        its, degenerate, bland = 0, 0, False
        fixed = L == U
        while True:
            if its >= max_iter:
                raise SimplexError(f"iteration limit {max_iter} reached (possible cycling)")
            if its and its % REFACTOR_EVERY == 0:
                self.refactor()
            y = self.cost[self.basis] @ self.Binv
            d = self.cost - y @ M
            st = self.status
            cand = ((st == AT_LB) & (d < -OPT_TOL)) | ((st == AT_UB) & (d > OPT_TOL)) | (
                (st == FREE) & (np.abs(d) > OPT_TOL))
            cand &= ~fixed
            if not cand.any():
                return "optimal", its
            idx = np.flatnonzero(cand)
            j = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if d[j] < 0 else -1.0
            alpha = self.Binv @ M[:, j]
            delta = -direction * alpha
            xb = self.x[self.basis]
            lb_b, ub_b = L[self.basis], U[self.basis]
            ratios = np.full(alpha.size, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            ratios[dec] = (xb[dec] - lb_b[dec]) / -delta[dec]
            ratios[inc] = (ub_b[inc] - xb[inc]) / delta[inc]
            ratios = np.maximum(ratios, 0.0)
            flip = U[j] - L[j]
            theta = ratios.min() if ratios.size else np.inf
            if flip <= theta:
                if not np.isfinite(flip):
                    return "unbounded", its
                self.x[self.basis] = xb + flip * delta
                self.x[j] = U[j] if st[j] == AT_LB else L[j]
                st[j] = AT_UB if st[j] == AT_LB else AT_LB
                its += 1
                degenerate = 0
                bland = False
                continue
            if not np.isfinite(theta):
                return "unbounded", its
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            leaving = self.basis[r]
            self.x[self.basis] = xb + theta * delta
            self.x[j] = self.x[j] + direction * theta
            # the leaving variable sits on whichever bound it reached
            st[leaving] = AT_LB if delta[r] < 0 else AT_UB
            self.x[leaving] = L[leaving] if delta[r] < 0 else U[leaving]
            st[j] = BASIC
            self.basis[r] = j
            piv = alpha[r]
            row = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[r] = row
            its += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False


def solve_lp(c, A, row_lo, row_hi, lb, ub, max_iter: int | None = None) -> LpResult:
    """Minimize ``c @ x`` subject to ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``."""
    c = np.asarray(c, dtype=float)
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    m, n = A.shape
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    row_lo = np.asarray(row_lo, dtype=float)
    row_hi = np.asarray(row_hi, dtype=float)
    if np.any(lb > ub + FEAS_TOL) or np.any(row_lo > row_hi + FEAS_TOL):
        return LpResult("infeasible", None, np.nan, 0)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    if m == 0:
        x = np.where(c > 0, lb, np.where(c < 0, ub, np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))))
        if not np.all(np.isfinite(x)):
            return LpResult("unbounded", None, -np.inf, 0)
        return LpResult("optimal", x, float(c @ x), 0)

    # starting point for structural columns
    st_x = np.where(np.isfinite(lb), AT_LB, np.where(np.isfinite(ub), AT_UB, FREE))
    x0 = np.where(st_x == AT_LB, lb, np.where(st_x == AT_UB, ub, 0.0))
    r = A @ x0
    below, above = r < row_lo - FEAS_TOL, r > row_hi + FEAS_TOL
    art_rows = np.flatnonzero(below | above)
    k = art_rows.size
    M = np.zeros((m, n + m + k))
    M[:, :n] = A
    M[:, n : n + m] = -np.eye(m)
    L = np.concatenate([lb, row_lo, np.zeros(k)])
    U = np.concatenate([ub, row_hi, np.full(k, np.inf)])
    status = np.concatenate([st_x, np.full(m + k, AT_LB)])
    basis = []
    for i in range(m):
        if below[i] or above[i]:
            continue
        status[n + i] = BASIC
        basis.append((i, n + i))
    for a, i in enumerate(art_rows):
        status[n + i] = AT_LB if below[i] else AT_UB
        M[i, n + m + a] = 1.0 if below[i] else -1.0
        status[n + m + a] = BASIC
        basis.append((i, n + m + a))
    basis = [col for _, col in sorted(basis)]
    its = 0
    if k:
        cost1 = np.zeros(n + m + k)
        cost1[n + m :] = 1.0
        tab = _Tableau(M, cost1, L, U, status, basis)
        res, it1 = tab.run(max_iter)
        its += it1
        infeas = float(tab.x[n + m :].sum())
        if res != "optimal":
            raise SimplexError("phase 1 did not terminate at an optimum")
        if infeas > 1e-7 * max(1.0, np.abs(row_lo[np.isfinite(row_lo)]).max(initial=1.0)):
            return LpResult("infeasible", None, np.nan, its)
        U[n + m :] = 0.0
        tab.x[n + m :] = np.minimum(tab.x[n + m :], 0.0)
        for jj in range(n + m, n + m + k):
            if tab.status[jj] != BASIC:
                tab.status[jj] = AT_LB
        status, basis = tab.status, tab.basis
        x_start = tab.x
    else:
        x_start = None
    cost2 = np.concatenate([c, np.zeros(m + k)])
    tab = _Tableau(M, cost2, L, U, status, basis)
    if x_start is not None:
        tab.x[:] = x_start
        tab.refactor()
    res, it2 = tab.run(max_iter)
    its += it2
    if res == "unbounded":
        return LpResult("unbounded", None, -np.inf, its)
    x = tab.x[:n].copy()
    return LpResult("optimal", x, float(c @ x), its)
