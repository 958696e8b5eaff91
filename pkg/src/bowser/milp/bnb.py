"""LP-based branch and bound for models with binary variables.

Node selection is best-bound with depth-first tie breaking; branching picks
the most fractional binary, lowest index first. Each node's relaxation is
solved when the node is created, so the heap key is the node's own bound.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LpFailure, make_engine
from .model import MilpModel

INT_TOL = 1e-6
OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible_gap"
INFEASIBLE = "infeasible"
NO_INCUMBENT = "time_limit_no_incumbent"


class UnboundedError(RuntimeError):
    """The root relaxation is unbounded."""


class NumericalError(RuntimeError):
    """The LP engine failed beyond its safeguards."""


@dataclass
class MilpSolution:
    """Outcome of :func:`solve`.

    ``gap`` is ``(objective - bound) / max(1, |objective|)``.
    """

    status: str
    objective: float
    x: np.ndarray | None
    gap: float
    bound: float
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    root_bound: float = np.nan
    var_names: list = field(default_factory=list, repr=False)
    trace: list = field(default_factory=list, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    @property
    def assignment(self) -> dict:
        if self.x is None:
            return {}
        return dict(zip(self.var_names, self.x.tolist()))

    def value(self, j: int) -> float:
        return float(self.x[j])


def _gap(inc: float, bound: float) -> float:
    if not np.isfinite(inc):
        return np.inf
    return max(0.0, inc - bound) / max(1.0, abs(inc))


def solve_lp_relaxation(model: MilpModel, backend: str = "highs"):
    """Solve the continuous relaxation.

    Returns
    -------
    (objective, x, status) : tuple
        ``status`` is ``"optimal"`` or ``"infeasible"``.

    Raises
    ------
    UnboundedError, NumericalError
    """
    c, A, lo, hi, lb, ub, _ = model.to_arrays()
    try:
        res = make_engine(backend, c, A, lo, hi).solve(lb, ub)
    except LpFailure as e:
        raise NumericalError(str(e)) from e
    if res.status == "unbounded":
        raise UnboundedError("LP relaxation is unbounded")
    if res.status != "optimal":
        return np.nan, None, INFEASIBLE
    return res.objective + model.obj_offset, res.x, OPTIMAL


def solve(
    model: MilpModel,
    time_limit: float = 600.0,
    gap_tol: float = 1e-6,
    backend: str = "highs",
    node_limit: int | None = None,
    record_trace: bool = False,
) -> MilpSolution:
    """Branch and bound over the model's binary variables.

    Parameters
    ----------
    time_limit : float
        Wall-clock budget in seconds, checked between nodes.
    gap_tol : float
        Relative gap at which search stops.
    backend : {"highs", "simplex"}
        LP engine for node relaxations.
    record_trace : bool
        Keep ``(node, node_bound, global_bound, incumbent)`` tuples.
    """
    t0 = time.perf_counter()
    c, A, lo, hi, lb0, ub0, isb = model.to_arrays()
    off = model.obj_offset
    bins = np.flatnonzero(isb)
    engine = make_engine(backend, c, A, lo, hi)
    nodes = iterations = 0
    trace = []

    def relax(lb, ub):
        nonlocal nodes, iterations
        try:
            r = engine.solve(lb, ub)
        except LpFailure as e:
            raise NumericalError(str(e)) from e
        nodes += 1
        iterations += r.iterations
        return r

    root = relax(lb0, ub0)
    if root.status == "unbounded":
        raise UnboundedError("LP relaxation at the root is unbounded")
    names = list(model.var_names)
    if root.status != "optimal":
        return MilpSolution(INFEASIBLE, np.nan, None, np.inf, np.inf, nodes, iterations,
                            time.perf_counter() - t0, np.nan, names)
    root_bound = root.objective + off

    inc_val, inc_x = np.inf, None
    heap: list = []
    counter = 0
    pruned_bound = np.inf  # smallest bound among nodes discarded by the gap test

    def tol(v):
        return gap_tol * max(1.0, abs(v))

    def consider(res, blo, bhi, depth):
        nonlocal inc_val, inc_x, counter
        if res.status != "optimal":
            return
        val = res.objective + off
        if val >= inc_val - tol(inc_val):
            return
        xb = res.x[bins]
        frac = np.abs(xb - np.round(xb))
        if not np.any(frac > INT_TOL):
            x = res.x.copy()
            x[bins] = np.round(xb)
            x = np.clip(x, lb0, ub0)
            inc_val, inc_x = val, x
            return
        counter += 1
        heapq.heappush(heap, (val, -depth, counter, blo, bhi, res.x))

    consider(root, lb0[bins].copy(), ub0[bins].copy(), 0)
    lb, ub = lb0.copy(), ub0.copy()
    timed_out = False
    while heap:
        if time.perf_counter() - t0 > time_limit or (node_limit is not None and nodes >= node_limit):
            timed_out = True
            break
        val, negd, _, blo, bhi, x = heapq.heappop(heap)
        if val >= inc_val - tol(inc_val):
            pruned_bound = min(pruned_bound, val)
            # every remaining node has an even larger bound
            for item in heap:
                pruned_bound = min(pruned_bound, item[0])
            heap.clear()
            break
        if record_trace:
            trace.append((nodes, val, val, inc_val))
        xb = x[bins]
        frac = np.round(np.minimum(xb - np.floor(xb), np.ceil(xb) - xb), 9)
        k = int(np.argmax(frac))
        depth = -negd + 1
        for side in (0.0, 1.0):
            clo, chi = blo.copy(), bhi.copy()
            clo[k] = chi[k] = side
            lb[bins], ub[bins] = clo, chi
            consider(relax(lb, ub), clo, chi, depth)

    wall = time.perf_counter() - t0
    open_bound = min((item[0] for item in heap), default=np.inf)
    if inc_x is None:
        if timed_out:
            return MilpSolution(NO_INCUMBENT, np.nan, None, np.inf, min(open_bound, pruned_bound),
                                nodes, iterations, wall, root_bound, names, trace)
        return MilpSolution(INFEASIBLE, np.nan, None, np.inf, np.inf, nodes, iterations, wall,
                            root_bound, names, trace)
    bound = min(inc_val, open_bound, pruned_bound)
    gap = _gap(inc_val, bound)
    status = OPTIMAL if (not heap and gap <= gap_tol) else FEASIBLE_GAP
    return MilpSolution(status, float(inc_val), inc_x, gap, float(bound), nodes, iterations, wall,
                        root_bound, names, trace)
