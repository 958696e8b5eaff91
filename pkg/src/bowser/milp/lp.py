"""LP engines used by branch and bound.

Both engines hold one constraint matrix and re-solve under changing column
bounds. ``HighsEngine`` keeps the previous basis between calls (warm start);
``SimplexEngine`` runs the in-house bounded simplex from scratch each time.
"""
from __future__ import annotations

import numpy as np

from .simplex import LpResult, SimplexError, solve_lp


class LpFailure(RuntimeError):
    """The LP engine could not produce a reliable answer."""


class SimplexEngine:
    name = "simplex"

    def __init__(self, c, A, row_lo, row_hi):
        self.c = np.asarray(c, float)
        self.A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, float)
        self.row_lo, self.row_hi = row_lo, row_hi

    def solve(self, lb, ub) -> LpResult:
        try:
            return solve_lp(self.c, self.A, self.row_lo, self.row_hi, lb, ub)
        except SimplexError as e:
            raise LpFailure(str(e)) from e


class HighsEngine:
    name = "highs"

    def __init__(self, c, A, row_lo, row_hi):
        import highspy

        self._hs = highspy
        self.n = len(c)
        self.m = A.shape[0]
        self.c = np.asarray(c, float)
        if self.m == 0:
            self.h = None
            return
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = self.m
        lp.col_cost_ = self.c
        lp.col_lower_ = np.zeros(self.n)
        lp.col_upper_ = np.full(self.n, np.inf)
        lp.row_lower_ = np.asarray(row_lo, float)
        lp.row_upper_ = np.asarray(row_hi, float)
        csc = A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = csc.data.astype(float)
        h.passModel(lp)
        self.h = h
        self._cols = np.arange(self.n, dtype=np.int32)

    def solve(self, lb, ub) -> LpResult:
        lb = np.asarray(lb, float)
        ub = np.asarray(ub, float)
        if np.any(lb > ub):
            return LpResult("infeasible", None, np.nan, 0)
        if self.h is None:
            x = np.where(self.c >= 0, lb, ub)
            if not np.all(np.isfinite(x)):
                return LpResult("unbounded", None, -np.inf, 0)
            return LpResult("optimal", x, float(self.c @ x), 0)
        h, hs = self.h, self._hs
        h.changeColsBounds(self.n, self._cols, lb, ub)
        h.run()
        st = h.getModelStatus()
        its = int(h.getInfo().simplex_iteration_count)
        if st == hs.HighsModelStatus.kOptimal:
            x = np.array(h.getSolution().col_value)
            return LpResult("optimal", x, float(self.c @ x), its)
        if st == hs.HighsModelStatus.kInfeasible:
            return LpResult("infeasible", None, np.nan, its)
        if st in (hs.HighsModelStatus.kUnbounded, hs.HighsModelStatus.kUnboundedOrInfeasible):
            # a cold solve separates the two cases
            h.clearSolver()
            h.run()
            st = h.getModelStatus()
            if st == hs.HighsModelStatus.kInfeasible:
                return LpResult("infeasible", None, np.nan, its)
            if st == hs.HighsModelStatus.kOptimal:
                x = np.array(h.getSolution().col_value)
                return LpResult("optimal", x, float(self.c @ x), its)
            return LpResult("unbounded", None, -np.inf, its)
        raise LpFailure(f"HiGHS returned {h.modelStatusToString(st)}")


ENGINES = {"highs": HighsEngine, "simplex": SimplexEngine}


def make_engine(backend: str, c, A, row_lo, row_hi):
    try:
        cls = ENGINES[backend]
    except KeyError:
        raise ValueError(f"unknown LP backend '{backend}'") from None
    return cls(c, A, row_lo, row_hi)
