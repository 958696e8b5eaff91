"""Deterministic bowser routing MILP: model builder, cut families, plan extraction.

Variable families (names are 1-based)::

    V_i_t      bowser at node i in period t               binary, N*T
    X_i_j_t    bowser moves i -> j between t and t+1      binary, over admissible moves, T-1 stages
    Q_a_t      liters delivered to asset a in period t    [0, c_a]
    B_t        liters loaded at the cistern in period t   [0, c_b]
    S_a_t      liters short for asset a in period t       [0, f_a_t]

Only admissible moves (explicit arcs plus waits) get an ``X`` variable, so the
rule forbidding transit between unconnected nodes holds by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CISTERN, InstanceKindError, Instance, Plan, SolverIntegrityError
from .milp import BINARY, MilpModel, MilpSolution, solve

FAMILIES = frozenset({"visits", "window", "level"})
SNAP = 1e-6


@dataclass(frozen=True)
class DbrpBuildOptions:
    """Model variant switches.

    ``families`` selects cut families when ``with_valid_inequalities`` is on:

    * ``visits``: each asset needs enough co-located periods to cover its net demand.
    * ``window``: no delivery within a window of periods without a visit.
    * ``level``: inventory since the last possible visit must cover demand or be short.
    """

    with_valid_inequalities: bool = False
    families: frozenset = field(default=FAMILIES)

    def __post_init__(self):
        fam = frozenset(self.families)
        object.__setattr__(self, "families", fam)
        if self.with_valid_inequalities and not fam:
            raise ValueError("families must be nonempty when valid inequalities are requested")
        unknown = fam - FAMILIES
        if unknown:
            raise ValueError(f"unknown cut families {sorted(unknown)}")


def _require_deterministic(inst: Instance):
    if inst.stochastic_consumption:
        raise InstanceKindError("stochastic consumption: use bowser.sbrp.build_sbrp_model")
    if inst.stochastic_location:
        raise InstanceKindError("stochastic asset locations are only supported by bowser.sdp")


def add_routing_core(model: MilpModel, inst: Instance) -> dict:
    """Route, bowser-inventory and co-location rows shared with the stochastic model.

    Returns the index maps ``V``, ``X``, ``Q``, ``B``.
    """
    N, T, A = inst.N, inst.T, inst.A
    g = inst.graph
    cb, sb = inst.bowser_capacity, inst.bowser_initial
    caps = inst.capacities()
    loc = inst.location_matrix()
    moves = g.transitions()

    V = {}
    for t in range(T):
        for i in range(N):
            lo = 1.0 if (t == 0 and i == inst.bowser_start) else 0.0
            V[i, t] = model.add_var(f"V_{i + 1}_{t + 1}", lo, 1.0, BINARY)
    X = {}
    for t in range(T - 1):
        for i, j in moves:
            X[i, j, t] = model.add_var(f"X_{i + 1}_{j + 1}_{t + 1}", 0.0, 1.0, BINARY, g.distance(i, j))
    Q = {(a, t): model.add_var(f"Q_{a + 1}_{t + 1}", 0.0, caps[a]) for a in range(A) for t in range(T)}
    B = {t: model.add_var(f"B_{t + 1}", 0.0, cb) for t in range(T)}

    for t in range(T):
        n = t + 1
        model.add_constr(f"refill_at_cistern_{n}", {B[t]: 1.0, V[CISTERN, t]: -cb}, "<=", 0.0)
        # load after refilling, before delivering
        co = [(B[k], 1.0) for k in range(t + 1)]
        co += [(Q[a, k], -1.0) for a in range(A) for k in range(t)]
        model.add_constr(f"bowser_capacity_{n}", co, "<=", cb - sb)
        co = [(B[k], 1.0) for k in range(t + 1)]
        co += [(Q[a, k], -1.0) for a in range(A) for k in range(t + 1)]
        model.add_constr(f"bowser_stock_{n}", co, ">=", -sb)
        model.add_constr(f"one_node_{n}", [(V[i, t], 1.0) for i in range(N)], "=", 1.0)
    for t in range(T - 1):
        n = t + 1
        for i in range(N):
            co = [(X[i, j, t], 1.0) for (ii, j) in moves if ii == i]
            co.append((V[i, t], -1.0))
            model.add_constr(f"leave_{i + 1}_{n}", co, "=", 0.0)
        for i, j in moves:
            x = X[i, j, t]
            tag = f"{i + 1}_{j + 1}_{n}"
            model.add_constr(f"link_both_{tag}", {x: 1.0, V[i, t]: -1.0, V[j, t + 1]: -1.0}, ">=", -1.0)
            model.add_constr(f"link_from_{tag}", {x: 1.0, V[i, t]: -1.0}, "<=", 0.0)
            model.add_constr(f"link_to_{tag}", {x: 1.0, V[j, t + 1]: -1.0}, "<=", 0.0)
    for a in range(A):
        for t in range(T):
            model.add_constr(f"colocated_{a + 1}_{t + 1}", {Q[a, t]: 1.0, V[loc[a, t], t]: -caps[a]}, "<=", 0.0)
    return dict(V=V, X=X, Q=Q, B=B)


def build_dbrp_model(inst: Instance, opts: DbrpBuildOptions | None = None) -> MilpModel:
    """Build the deterministic model; objective is travel plus penalized shortage.

    The bowser's period-1 node is fixed to ``inst.bowser_start``.
    """
    _require_deterministic(inst)
    opts = opts or DbrpBuildOptions()
    A, T = inst.A, inst.T
    f = inst.consumption_matrix()
    s = inst.initial_levels()
    caps = inst.capacities()
    m = MilpModel(inst.name or "dbrp")
    idx = add_routing_core(m, inst)
    Q = idx["Q"]
    S = {(a, t): m.add_var(f"S_{a + 1}_{t + 1}", 0.0, f[a, t], obj=inst.penalty) for a in range(A) for t in range(T)}
    for a in range(A):
        F = np.cumsum(f[a])
        for t in range(T):
            n = f"{a + 1}_{t + 1}"
            # level at the end of t, with shortages counted as phantom supply
            co = [(Q[a, k], 1.0) for k in range(t + 1)] + [(S[a, k], 1.0) for k in range(t + 1)]
            m.add_constr(f"demand_{n}", co, ">=", F[t] - s[a])
            # level right after delivery in t never exceeds the tank
            co = [(Q[a, k], 1.0) for k in range(t + 1)] + [(S[a, k], 1.0) for k in range(t)]
            m.add_constr(f"tank_{n}", co, "<=", caps[a] - s[a] + (F[t - 1] if t else 0.0))
    idx["S"] = S
    m.meta.update(idx, kind="dbrp")
    if opts.with_valid_inequalities:
        add_valid_inequalities(inst, m, opts.families)
    return m


def add_valid_inequalities(inst: Instance, model: MilpModel, families=FAMILIES) -> MilpModel:
    """Append the selected cut families in place and return ``model``.

    Big-M values are cumulative consumption sums: ``F_T`` for ``window`` rows
    and ``F_t`` for ``level`` rows.
    """
    if model.meta.get("kind") != "dbrp":
        raise ValueError("model was not built by build_dbrp_model")
    families = frozenset(families)
    V, Q, S = model.meta["V"], model.meta["Q"], model.meta["S"]
    A, T = inst.A, inst.T
    f = inst.consumption_matrix()
    s = inst.initial_levels()
    caps = inst.capacities()
    loc = inst.location_matrix()
    cap = np.minimum(caps, inst.bowser_capacity)
    for a in range(A):
        F = np.cumsum(f[a])
        vis = [V[loc[a, k], k] for k in range(T)]
        if "visits" in families:
            for t in range(T):
                co = [(vis[k], cap[a]) for k in range(t + 1)] + [(S[a, k], 1.0) for k in range(t + 1)]
                model.add_constr(f"cut_visits_{a + 1}_{t + 1}", co, ">=", F[t] - s[a])
        if "window" in families:
            for i in range(T):
                for j in range(i, T):
                    co = [(vis[k], F[-1]) for k in range(i, j + 1)] + [(Q[a, k], -1.0) for k in range(i, j + 1)]
                    model.add_constr(f"cut_window_{a + 1}_{i + 1}_{j + 1}", co, ">=", 0.0)
        if "level" in families:
            for t in range(T):
                for j in range(t + 1):
                    co = [(Q[a, k], 1.0) for k in range(j)] + [(S[a, k], 1.0) for k in range(t + 1)]
                    co += [(vis[k], F[t]) for k in range(j, t + 1)]
                    model.add_constr(f"cut_level_{a + 1}_{j + 1}_{t + 1}", co, ">=", F[t] - s[a])
    return model


def extract_plan(inst: Instance, solution: MilpSolution, model: MilpModel | None = None) -> Plan:
    """Read route, refills and refuels back from a solved model.

    Variables are located by name, so solutions of re-parsed exports work
    without ``model``.
    """
    if solution.x is None:
        raise ValueError(f"solution has no assignment (status {solution.status})")
    val = solution.assignment
    N, T, A = inst.N, inst.T, inst.A
    route = np.empty(T, dtype=int)
    for t in range(T):
        on = [i for i in range(N) if val[f"V_{i + 1}_{t + 1}"] > 0.5]
        if len(on) != 1:
            raise SolverIntegrityError(f"period {t + 1}: bowser at {len(on)} nodes")
        route[t] = on[0]

    def snap(v):
        return 0.0 if abs(v) < SNAP else v

    refills = np.array([snap(val[f"B_{t + 1}"]) for t in range(T)])
    refuels = np.array([[snap(val[f"Q_{a + 1}_{t + 1}"]) for t in range(T)] for a in range(A)])
    return Plan(route, refills, refuels.reshape(A, T))


def solve_dbrp(inst: Instance, opts: DbrpBuildOptions | None = None, **solve_kw):
    """Build, solve and extract; returns ``(model, solution, plan or None)``."""
    model = build_dbrp_model(inst, opts)
    sol = solve(model, **solve_kw)
    plan = extract_plan(inst, sol) if sol.x is not None else None
    return model, sol, plan
