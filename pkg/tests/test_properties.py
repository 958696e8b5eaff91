"""Generated-case suites; each property runs on 10,000 examples."""
import numpy as np
import pytest
from conftest import path_instance
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from oracles import (
    convolve_by_enumeration, fixed_plan_objective, lost_sales_shortages, plan_violations, random_feasible_plan,
)

from bowser import Plan, check_plan_feasibility
from bowser.benchgen import desk_dbrp_instance
from bowser.dbrp import build_dbrp_model
from bowser.sim import crn_uniforms, evaluate_plan_deterministic, evaluate_plan_monte_carlo, simulate_levels
from bowser.stochproc import DiscreteDist, complementary_loss, convolve, loss, truncated_poisson

N_CASES = int(__import__("os").environ.get("N_CASES", 10_000))
many = settings(max_examples=N_CASES, suppress_health_check=[HealthCheck.too_slow], derandomize=True)

INSTANCES = [
    path_instance(),
    path_instance(f=(3, 3, 3), cb=6.0, sb=2.0),
    path_instance(f=(0, 4, 2, 1), locs=(0, 1, 2, 2), cap=5.0, s=2.0),
    desk_dbrp_instance(0, n=3, A=2, T=3),
    desk_dbrp_instance(1, n=4, A=2, T=3),
]
MODELS = [build_dbrp_model(i) for i in INSTANCES]


@st.composite
def plans(draw):
    k = draw(st.integers(0, len(INSTANCES) - 1))
    inst = INSTANCES[k]
    if draw(st.booleans()):
        plan = random_feasible_plan(inst, np.random.default_rng(draw(st.integers(0, 2**32 - 1))))
        route, B, Q = plan.route.copy(), plan.refills.copy(), plan.refuels.copy()
        # nudge one entry so that near-feasible plans are common
        which = draw(st.sampled_from(["none", "route", "refill", "refuel"]))
        if which == "route":
            route[draw(st.integers(0, inst.T - 1))] = draw(st.integers(0, inst.N - 1))
        elif which == "refill":
            B[draw(st.integers(0, inst.T - 1))] += draw(st.integers(-1, 3))
        elif which == "refuel":
            Q[draw(st.integers(0, inst.A - 1)), draw(st.integers(0, inst.T - 1))] += draw(st.integers(-1, 3))
    else:
        route = np.array([draw(st.integers(0, inst.N - 1)) for _ in range(inst.T)])
        B = np.array([draw(st.integers(0, 6)) for _ in range(inst.T)], dtype=float)
        Q = np.array([[draw(st.integers(0, 4)) for _ in range(inst.T)] for _ in range(inst.A)], dtype=float)
    return k, Plan(route, B, Q)


@many
@given(plans())
def test_feasibility_three_ways(case):
    k, plan = case
    inst = INSTANCES[k]
    ok_check = check_plan_feasibility(inst, plan) == []
    ok_rules = plan_violations(inst, plan) == 0
    pinned = fixed_plan_objective(inst, plan, MODELS[k])
    assert ok_check == ok_rules == (pinned is not None)
    if ok_check:
        assert evaluate_plan_deterministic(inst, plan).total == pytest.approx(pinned, abs=1e-6)


@many
@given(
    st.lists(st.integers(0, 6), min_size=4, max_size=4),
    st.lists(st.integers(0, 6), min_size=4, max_size=4),
    st.integers(0, 6), st.integers(0, 3), st.integers(0, 3), st.integers(1, 4),
)
def test_more_delivery_never_adds_shortage(f, q, cap, s0, t, bump):
    s0 = min(s0, cap)
    q = np.array([q], dtype=float)
    f = np.array([f], dtype=float)
    short, _ = simulate_levels([s0], q, f, [cap])
    q2 = q.copy()
    q2[0, t] += bump
    short2, _ = simulate_levels([s0], q2, f, [cap])
    assert short2.sum() <= short.sum() + 1e-12
    assert short2[0, t] <= short[0, t]
    assert short[0].tolist() == lost_sales_shortages(s0, _clip(q[0], f[0], s0, cap), f[0])


def _clip(q, f, s0, cap):
    """Deliveries after headroom truncation, computed step by step."""
    out, lvl = [], s0
    for qq, ff in zip(q, f):
        d = min(qq, cap - lvl)
        out.append(d)
        lvl = max(lvl + d - ff, 0)
    return out


@many
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2))
def test_crn_streams_are_keyed(seed, R, A, T, stream):
    u = crn_uniforms(seed, R, A, T, stream)
    assert np.array_equal(u, crn_uniforms(seed, R, A, T, stream))
    assert np.array_equal(u[: R - 1], crn_uniforms(seed, R - 1, A, T, stream))
    assert np.all((u >= 0) & (u < 1))
    if A > 1:
        assert np.array_equal(u[:, :1], crn_uniforms(seed, R, 1, T, stream))


CRN_INST = path_instance().replace(assets=tuple(
    a.__class__(a.capacity, a.initial, a.locations, None, tuple(truncated_poisson(x, 5) for x in (2, 3, 1)))
    for a in path_instance().assets
))


@many
@given(st.integers(0, 2**31 - 1), st.integers(0, 2**32 - 1))
def test_crn_evaluation_is_reproducible(seed, plan_seed):
    plan = random_feasible_plan(path_instance(), np.random.default_rng(plan_seed))
    a = evaluate_plan_monte_carlo(CRN_INST, plan, 4, seed)
    b = evaluate_plan_monte_carlo(CRN_INST, plan, 4, seed)
    assert np.array_equal(a.totals, b.totals)


def dists(max_k=6):
    return st.lists(st.floats(0.0, 1.0), min_size=1, max_size=max_k + 1).filter(lambda w: sum(w) > 1e-3).map(
        lambda w: DiscreteDist(np.array(w) / sum(w))
    )


def close(p, q, atol):
    """Compare pmfs after zero padding; underflowed tail masses may trim differently."""
    n = max(p.size, q.size)
    return np.allclose(np.pad(p, (0, n - p.size)), np.pad(q, (0, n - q.size)), rtol=0, atol=atol)


def as_dict(d):
    return {k: p for k, p in enumerate(d.pmf)}


@many
@given(dists(), dists(), dists())
def test_convolution_algebra(a, b, c):
    ab, ba = convolve(a, b), convolve(b, a)
    assert close(ab.pmf, ba.pmf, 1e-12)
    assert close(convolve(ab, c).pmf, convolve(a, convolve(b, c)).pmf, 1e-12)
    assert close(convolve(a, DiscreteDist.point_mass(0)).pmf, a.pmf, 1e-15)
    assert ab.mean == pytest.approx(a.mean + b.mean, abs=1e-9)
    assert ab.var == pytest.approx(a.var + b.var, abs=1e-9)
    want = convolve_by_enumeration(as_dict(a), as_dict(b))
    for k, p in want.items():
        assert (ab.pmf[k] if k < ab.pmf.size else 0.0) == pytest.approx(p, abs=1e-12)


@many
@given(dists(), st.floats(-2.0, 10.0), st.floats(0.0, 3.0))
def test_loss_shape(d, q, h):
    lo, lh = loss(d, q), loss(d, q + h)
    assert lh <= lo + 1e-12  # nonincreasing
    assert complementary_loss(d, q + h) >= complementary_loss(d, q) - 1e-12
    mid = loss(d, q + h / 2)
    assert mid <= (lo + lh) / 2 + 1e-12  # convex
    assert complementary_loss(d, q) - lo == pytest.approx(q - d.mean, abs=1e-9)
