"""Lost-sales evaluation of fixed plans.

Within a period: refill at the cistern, refuel co-located assets, consume,
count shortage, then move. Unmet demand is lost, never backlogged.

Random consumption uses common random numbers: the uniform driving asset
``a`` in period ``t`` of replication ``r`` comes from
``SeedSequence([seed, stream, r, a, t])``, so it does not depend on which
plan is evaluated or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import FEAS_TOL, Instance, InstanceKindError, Plan, PlanEvaluation, check_plan_feasibility


class InfeasiblePlanError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("plan is infeasible: " + "; ".join(self.violations[:5]))


def simulate_levels(initial, refuels, consumption, capacities):
    """Run the asset tank dynamics along one or many consumption paths.

    Parameters
    ----------
    initial : (A,) array
    refuels : (A, T) array
    consumption : (..., A, T) array
    capacities : (A,) array

    Returns
    -------
    shortages, delivered : arrays shaped like ``consumption``
        ``delivered`` is the refuel actually pumped, truncated at the tank's headroom.
    """
    f = np.asarray(consumption, dtype=float)
    q = np.asarray(refuels, dtype=float)
    lvl = np.broadcast_to(np.asarray(initial, dtype=float), f.shape[:-1]).copy()
    cap = np.asarray(capacities, dtype=float)
    short = np.empty_like(f)
    delivered = np.empty_like(f)
    for t in range(f.shape[-1]):
        d = np.minimum(q[:, t], cap - lvl)
        delivered[..., t] = d
        avail = lvl + d
        short[..., t] = np.maximum(f[..., t] - avail, 0.0)
        lvl = np.maximum(avail - f[..., t], 0.0)
    return short, delivered


def evaluate_plan_deterministic(inst: Instance, plan: Plan, check: bool = True) -> PlanEvaluation:
    """Exact travel plus penalized shortage of ``plan`` on a deterministic instance."""
    if inst.stochastic_consumption:
        raise InstanceKindError("stochastic consumption: use evaluate_plan_monte_carlo")
    if check:
        bad = check_plan_feasibility(inst, plan)
        if bad:
            raise InfeasiblePlanError(bad)
    short, _ = simulate_levels(inst.initial_levels(), plan.refuels, inst.consumption_matrix(), inst.capacities())
    travel = plan.travel_cost(inst.graph)
    sc = inst.penalty * float(short.sum())
    return PlanEvaluation(travel, sc, travel + sc, short)


def crn_uniforms(seed: int, replications: int, A: int, T: int, stream: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) keyed by ``(seed, stream, replication, asset, period)``."""
    out = np.empty((replications, A, T))
    for r in range(replications):
        for a in range(A):
            for t in range(T):
                w = np.random.SeedSequence([seed, stream, r, a, t]).generate_state(1, np.uint64)[0]
                out[r, a, t] = (int(w) >> 11) * 2.0**-53
    return out


def sample_consumption(inst: Instance, replications: int, seed: int, stream: int = 0) -> np.ndarray:
    """Consumption paths ``(replications, A, T)`` by inverse-CDF sampling of CRN uniforms."""
    u = crn_uniforms(seed, replications, inst.A, inst.T, stream)
    out = np.empty_like(u)
    for a, asset in enumerate(inst.assets):
        for t, d in enumerate(asset.dists()):
            out[:, a, t] = d.sample(u[:, a, t])
    return out


def student_interval(x, level: float = 0.95):
    """Mean and two-sided Student-t interval; the interval is None for fewer than 2 values."""
    x = np.asarray(x, dtype=float)
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, None, np.nan
    se = float(np.std(x, ddof=1) / np.sqrt(x.size))
    h = float(stats.t.ppf(0.5 + level / 2, x.size - 1)) * se
    return mean, (mean - h, mean + h), se


@dataclass
class MonteCarloResult:
    mean: float
    ci: tuple | None
    std_error: float
    replications: int
    totals: np.ndarray
    mean_shortages: np.ndarray
    travel_cost: float

    @property
    def half_width(self) -> float:
        return np.nan if self.ci is None else (self.ci[1] - self.ci[0]) / 2


def evaluate_plan_monte_carlo(
    inst: Instance,
    plan: Plan,
    replications: int,
    seed: int = 0,
    samples: np.ndarray | None = None,
    check: bool = True,
) -> MonteCarloResult:
    """Mean cost of ``plan`` over sampled consumption paths with a 95% Student-t interval.

    ``samples`` overrides the sampled paths (shape ``(replications, A, T)``).
    """
    if check:
        bad = check_plan_feasibility(inst, plan)
        if bad:
            raise InfeasiblePlanError(bad)
    if samples is None:
        if replications < 1:
            raise ValueError("replications must be positive")
        samples = sample_consumption(inst, replications, seed)
    short, _ = simulate_levels(inst.initial_levels(), plan.refuels, samples, inst.capacities())
    travel = plan.travel_cost(inst.graph)
    # ordered fold keeps totals reproducible
    totals = travel + inst.penalty * short.reshape(short.shape[0], -1).sum(axis=1)
    mean, ci, se = student_interval(totals)
    return MonteCarloResult(mean, ci, se, int(totals.size), totals, short.mean(axis=0), travel)


def bowser_levels(inst: Instance, plan: Plan) -> np.ndarray:
    """Bowser stock after deliveries in each period."""
    return inst.bowser_initial + np.cumsum(plan.refills - plan.refuels.sum(axis=0))


__all__ = [
    "FEAS_TOL", "InfeasiblePlanError", "MonteCarloResult", "bowser_levels", "crn_uniforms",
    "evaluate_plan_deterministic", "evaluate_plan_monte_carlo", "sample_consumption",
    "simulate_levels", "student_interval",
]
