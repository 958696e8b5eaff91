"""Solver-independent linear model representation."""
from __future__ import annotations

import copy as _copy
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", ">=", "=")


class ModelError(ValueError):
    """The model breaks one of its structural invariants."""


class MilpModel:
    """Minimization model with continuous and binary variables.

    Variables and constraints are addressed by integer index; names are
    unique and kept for export and debugging.

    Examples
    --------
    >>> m = MilpModel("toy")
    >>> x = m.add_var("x", kind=BINARY, obj=1.0)
    >>> _ = m.add_constr("c", {x: 1.0}, ">=", 0.0)
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.kinds: list[str] = []
        self.obj: list[float] = []
        self.obj_offset = 0.0
        self.con_names: list[str] = []
        self.con_idx: list[np.ndarray] = []
        self.con_val: list[np.ndarray] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self._vindex: dict[str, int] = {}
        self._cindex: dict[str, int] = {}
        # builder-specific index maps (e.g. variable families)
        self.meta: dict = {}

    # building -------------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf, kind: str = CONTINUOUS, obj: float = 0.0) -> int:
        if name in self._vindex:
            raise ModelError(f"duplicate variable name '{name}'")
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind '{kind}'")
        if kind == BINARY and ub == np.inf:
            ub = 1.0
        if kind == BINARY and not (0.0 <= lb <= ub <= 1.0):
            raise ModelError(f"binary '{name}' needs bounds within [0, 1]")
        self._vindex[name] = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.kinds.append(kind)
        self.obj.append(float(obj))
        return len(self.var_names) - 1

    def add_constr(self, name: str, coefs, sense: str, rhs: float) -> int:
        """Add ``sum(coef * x) sense rhs``; duplicate indices are summed."""
        if name in self._cindex:
            raise ModelError(f"duplicate constraint name '{name}'")
        if sense not in SENSES:
            raise ModelError(f"unknown sense '{sense}'")
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        acc: dict[int, float] = {}
        for j, v in items:
            j = int(j)
            if not 0 <= j < len(self.var_names):
                raise ModelError(f"constraint '{name}' references missing variable {j}")
            acc[j] = acc.get(j, 0.0) + float(v)
        idx = np.array(sorted(k for k, v in acc.items() if v != 0.0), dtype=np.int64)
        val = np.array([acc[k] for k in idx], dtype=float)
        self._cindex[name] = len(self.con_names)
        self.con_names.append(name)
        self.con_idx.append(idx)
        self.con_val.append(val)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return len(self.con_names) - 1

    def set_bounds(self, j: int, lb: float | None = None, ub: float | None = None) -> None:
        if lb is not None:
            self.lb[j] = float(lb)
        if ub is not None:
            self.ub[j] = float(ub)

    def copy(self) -> "MilpModel":
        return _copy.deepcopy(self)

    # queries --------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_cons(self) -> int:
        return len(self.con_names)

    def var(self, name: str) -> int:
        return self._vindex[name]

    def con(self, name: str) -> int:
        return self._cindex[name]

    def binaries(self) -> np.ndarray:
        return np.array([k == BINARY for k in self.kinds], dtype=bool)

    def validate(self) -> list[str]:
        out = []
        if len(set(self.var_names)) != len(self.var_names):
            out.append("variable names are not unique")
        if len(set(self.con_names)) != len(self.con_names):
            out.append("constraint names are not unique")
        for j, (k, lo, hi) in enumerate(zip(self.kinds, self.lb, self.ub)):
            if k == BINARY and not (0.0 <= lo and hi <= 1.0):
                out.append(f"binary {self.var_names[j]} has bounds outside [0, 1]")
        for name, idx in zip(self.con_names, self.con_idx):
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
                out.append(f"constraint {name} references a missing variable")
        return out

    def to_arrays(self):
        """Return ``(c, A, row_lo, row_hi, lb, ub, is_binary)`` with ``A`` in CSR form."""
        m, n = self.n_cons, self.n_vars
        if m:
            rows = np.concatenate([np.full(ix.size, r) for r, ix in enumerate(self.con_idx)])
            cols = np.concatenate(self.con_idx)
            vals = np.concatenate(self.con_val)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = csr_matrix((vals, (rows, cols)), shape=(m, n))
        rhs = np.array(self.rhs, dtype=float)
        sense = np.array(self.senses)
        lo = np.where(sense == "<=", -np.inf, rhs)
        hi = np.where(sense == ">=", np.inf, rhs)
        return (np.array(self.obj, dtype=float), A, lo, hi,
                np.array(self.lb, dtype=float), np.array(self.ub, dtype=float), self.binaries())

    def objective_value(self, x) -> float:
        return float(np.dot(self.obj, x) + self.obj_offset)

    def max_violation(self, x) -> float:
        """Largest violation of any bound, row, or integrality requirement."""
        x = np.asarray(x, dtype=float)
        c, A, lo, hi, lb, ub, isb = self.to_arrays()
        v = [0.0]
        if x.size:
            v.append(float(np.max(np.maximum(lb - x, 0.0))))
            v.append(float(np.max(np.maximum(x - ub, 0.0))))
            if isb.any():
                v.append(float(np.max(np.abs(x[isb] - np.round(x[isb])))))
        if self.n_cons:
            ax = A @ x
            v.append(float(np.max(np.maximum(lo - ax, 0.0))))
            v.append(float(np.max(np.maximum(ax - hi, 0.0))))
        return max(v)

    def dump_solution(self, x, skip_zeros: bool = True) -> str:
        """Plain-text ``name value`` listing."""
        lines = []
        for name, val in zip(self.var_names, x):
            if skip_zeros and abs(val) < 1e-9:
                continue
            lines.append(f"{name} {val:.10g}")
        return "\n".join(lines) + ("\n" if lines else "")

    def __repr__(self):
        nb = int(self.binaries().sum())
        return f"MilpModel({self.name!r}, vars={self.n_vars} ({nb} binary), cons={self.n_cons})"


def linear(pairs: Iterable) -> dict:
    """Accumulate ``(index, coefficient)`` pairs into a coefficient map."""
    out: dict[int, float] = {}
    for j, v in pairs:
        out[j] = out.get(j, 0.0) + v
    return out
