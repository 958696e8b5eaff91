"""Stochastic-consumption routing model, here-and-now plans and receding-horizon control.

Per asset ``a`` and period ``t`` the model tracks three recourse variables:

    Im_a_t   expected shortage in t
    Ip_a_t   expected fuel left at the end of t
    E_a_t    expected fuel spilled because the tank overflowed in t

With ``y = s_a + sum Q_{<=t} + sum Im_{<t} - sum E_{<=t}`` (shortages are
added back because lost demand does not deplete later stock), ``Ip`` and
``Im`` sit above the piecewise-linear models of the complementary loss and
the loss of the cumulative demand ``D_1 + ... + D_t`` evaluated at ``y``.
``E_a_t >= Ip_a_{t-1} + Q_a_t - c_a``. All three are pushed down by the
objective, so the inequalities bind where it matters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import InstanceKindError, Instance, Plan
from .dbrp import DbrpBuildOptions, add_routing_core, extract_plan
from .milp import MilpModel, MilpSolution, solve
from .sim import simulate_levels
from .stochproc import cumulative_dists, linearize_complementary_loss

STATE_DIGITS = 9


@dataclass(frozen=True)
class SbrpBuildOptions:
    segments: int = 8
    base: DbrpBuildOptions = field(default_factory=DbrpBuildOptions)

    def __post_init__(self):
        if self.segments < 1:
            raise ValueError("segments must be >= 1")


def build_sbrp_model(inst: Instance, opts: SbrpBuildOptions | None = None) -> MilpModel:
    """Build the linearized stochastic model for ``inst``.

    Deterministic instances are rejected; convert them with
    :meth:`Instance.with_point_masses` to compare both models.
    """
    if not inst.stochastic_consumption:
        raise InstanceKindError("deterministic consumption: use bowser.dbrp.build_dbrp_model")
    if inst.stochastic_location:
        raise InstanceKindError("stochastic asset locations are only supported by bowser.sdp")
    opts = opts or SbrpBuildOptions()
    A, T = inst.A, inst.T
    s = inst.initial_levels()
    caps = inst.capacities()
    m = MilpModel(inst.name or "sbrp")
    idx = add_routing_core(m, inst)
    Q = idx["Q"]
    Im, Ip, E = {}, {}, {}
    for a in range(A):
        for t in range(T):
            n = f"{a + 1}_{t + 1}"
            Im[a, t] = m.add_var(f"Im_{n}", obj=inst.penalty)
            Ip[a, t] = m.add_var(f"Ip_{n}")
            E[a, t] = m.add_var(f"E_{n}")
    pieces = {}
    for a, asset in enumerate(inst.assets):
        for t, g in enumerate(cumulative_dists(asset.dists())):
            n = f"{a + 1}_{t + 1}"
            pl = linearize_complementary_loss(g, opts.segments)
            pieces[a, t] = pl
            y = [(Q[a, k], 1.0) for k in range(t + 1)] + [(Im[a, k], 1.0) for k in range(t)]
            y += [(E[a, k], -1.0) for k in range(t + 1)]
            for r, (slope, icpt) in enumerate(pl.segments):
                # Ip >= slope * y + icpt
                co = [(j, -slope * v) for j, v in y] + [(Ip[a, t], 1.0)]
                m.add_constr(f"surplus_{n}_{r}", co, ">=", slope * s[a] + icpt)
                # Im >= (slope - 1) * y + icpt + mean
                co = [(j, -(slope - 1.0) * v) for j, v in y] + [(Im[a, t], 1.0)]
                m.add_constr(f"short_{n}_{r}", co, ">=", (slope - 1.0) * s[a] + icpt + g.mean)
            if t == 0:
                m.add_constr(f"spill_{n}", {E[a, t]: 1.0, Q[a, t]: -1.0}, ">=", s[a] - caps[a])
            else:
                m.add_constr(f"spill_{n}", {E[a, t]: 1.0, Q[a, t]: -1.0, Ip[a, t - 1]: -1.0}, ">=", -caps[a])
    idx.update(Im=Im, Ip=Ip, E=E)
    m.meta.update(idx, kind="sbrp", pieces=pieces)
    return m


@dataclass
class SbrpResult:
    model: MilpModel
    solution: MilpSolution
    plan: Plan | None
    travel: float = np.nan
    expected_shortage: np.ndarray | None = None

    @property
    def predicted_total(self) -> float:
        return self.solution.objective

    @property
    def predicted_shortage(self) -> float:
        return float(self.expected_shortage.sum()) if self.expected_shortage is not None else np.nan


def here_and_now(inst: Instance, opts: SbrpBuildOptions | None = None, **solve_kw) -> SbrpResult:
    """Solve the stochastic model once and return the full-horizon plan."""
    model = build_sbrp_model(inst, opts)
    sol = solve(model, **solve_kw)
    if sol.x is None:
        return SbrpResult(model, sol, None)
    plan = extract_plan(inst, sol)
    im = np.array([[sol.x[model.meta["Im"][a, t]] for t in range(inst.T)] for a in range(inst.A)])
    return SbrpResult(model, sol, plan, plan.travel_cost(inst.graph), im)


class StageSolveError(RuntimeError):
    """A receding-horizon stage ended without a plan; ``partial`` holds what was implemented."""

    def __init__(self, stage, status, partial):
        self.stage, self.status, self.partial = stage, status, partial
        super().__init__(f"stage {stage + 1} solve ended with status '{status}'")


@dataclass
class RecedingHorizonResult:
    plan: Plan
    cost: float
    travel: float
    shortages: np.ndarray
    solves: int


class StageCache:
    """Memo of first-period decisions keyed by the stage state."""

    def __init__(self):
        self.data = {}
        self.hits = self.misses = 0

    def key(self, t, levels, b_level, node):
        r = STATE_DIGITS
        return (t, tuple(np.round(levels, r).tolist()), round(float(b_level), r), int(node))


def receding_horizon_run(
    inst: Instance,
    opts: SbrpBuildOptions | None,
    scenario,
    cache: StageCache | None = None,
    **solve_kw,
) -> RecedingHorizonResult:
    """Re-plan every period against the remaining horizon and apply one period.

    Parameters
    ----------
    scenario : (A, T) array
        Realized consumption, revealed one period at a time.
    cache : StageCache, optional
        Shares stage decisions across runs on the same instance.
    """
    opts = opts or SbrpBuildOptions()
    f = np.asarray(scenario, dtype=float).reshape(inst.A, inst.T)
    caps = inst.capacities()
    lvl = inst.initial_levels()
    b_lvl = inst.bowser_initial
    node = inst.bowser_start
    route, refills, refuels = [], [], []
    short = np.zeros((inst.A, inst.T))
    solves = 0
    for t in range(inst.T):
        k = cache.key(t, lvl, b_lvl, node) if cache is not None else None
        if cache is not None and k in cache.data:
            cache.hits += 1
            step = cache.data[k]
        else:
            sub = inst.suffix(t, lvl, b_lvl, node)
            res = here_and_now(sub, opts, **solve_kw)
            solves += 1
            if res.plan is None:
                partial = Plan(np.array(route, dtype=int), np.array(refills), np.array(refuels).T.reshape(inst.A, -1))
                raise StageSolveError(t, res.solution.status, partial)
            p = res.plan
            nxt = int(p.route[1]) if sub.T > 1 else int(p.route[0])
            step = (float(p.refills[0]), p.refuels[:, 0].copy(), nxt)
            if cache is not None:
                cache.misses += 1
                cache.data[k] = step
        B, Q, nxt = step
        b_lvl = b_lvl + B
        s1, d = simulate_levels(lvl, Q[:, None], f[:, t : t + 1], caps)
        short[:, t] = s1[:, 0]
        route.append(node)
        refills.append(B)
        refuels.append(d[:, 0])
        b_lvl = min(max(b_lvl - float(d[:, 0].sum()), 0.0), inst.bowser_capacity)
        lvl = np.maximum(lvl + d[:, 0] - f[:, t], 0.0)
        node = nxt
    plan = Plan(np.array(route), np.array(refills), np.array(refuels).T.reshape(inst.A, inst.T))
    travel = plan.travel_cost(inst.graph)
    cost = travel + inst.penalty * float(short.sum())
    return RecedingHorizonResult(plan, cost, travel, short, solves)
