import numpy as np
import pytest

import highspy

from bowser.dbrp import DbrpBuildOptions, build_dbrp_model
from bowser.milp import BINARY, MilpModel, export_mps, parse_mps, solve, solve_lp_relaxation
from bowser.milp.bnb import INFEASIBLE, OPTIMAL
from bowser.milp.simplex import solve_lp
from oracles import enumerate_binary_program, textbook_simplex_max


@pytest.fixture(scope="module")
def worked_model(worked):
    return build_dbrp_model(worked)


def knapsack():
    m = MilpModel("toy")
    val, w = [5.0, 4.0, 3.0], [2.0, 3.0, 1.0]
    xs = [m.add_var(f"x{k}", kind=BINARY, obj=-v) for k, v in enumerate(val)]
    m.add_constr("weight", dict(zip(xs, w)), "<=", 4.0)
    return m, -np.array(val), [w], [4.0]


def eight_binaries():
    rng = np.random.default_rng(11)
    m = MilpModel("eight")
    c = rng.integers(-9, 4, 8).astype(float)
    xs = [m.add_var(f"y{k}", kind=BINARY, obj=v) for k, v in enumerate(c)]
    A = rng.integers(0, 6, (3, 8)).astype(float)
    b = [10.0, 9.0, 8.0]
    for i in range(3):
        m.add_constr(f"r{i}", dict(zip(xs, A[i])), "<=", b[i])
    return m, c, A, b


def test_worked_model_solves_to_494(worked_model):
    s = solve(worked_model)
    assert s.status == OPTIMAL and round(s.objective, 6) == 494


def test_single_binary():
    m = MilpModel()
    m.add_var("x", kind=BINARY, obj=1.0)
    s = solve(m)
    assert s.status == OPTIMAL and s.objective == 0


@pytest.mark.parametrize("backend", ["highs", "simplex"])
def test_knapsack_matches_enumeration(backend):
    m, c, A, b = knapsack()
    want, _ = enumerate_binary_program(c, A, b)
    assert solve(m, backend=backend).objective == pytest.approx(want, abs=1e-9)


def test_relaxation_bounds_worked(worked_model):
    obj, x, status = solve_lp_relaxation(worked_model)
    assert status == OPTIMAL and obj <= 494 + 1e-9


def test_contradictory_bounds_are_infeasible():
    m = MilpModel()
    x = m.add_var("x", obj=1.0)
    m.add_constr("lo", {x: 1.0}, ">=", 3.0)
    m.add_constr("hi", {x: 1.0}, "<=", 2.0)
    for backend in ("highs", "simplex"):
        assert solve(m, backend=backend).status == INFEASIBLE


@pytest.mark.parametrize("seed", range(20))
def test_random_lp_matches_textbook_simplex(seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(1, 10, (5, 5)).astype(float)
    b = rng.integers(5, 30, 5).astype(float)
    c = rng.integers(1, 10, 5).astype(float)
    want = textbook_simplex_max(c, A, b)
    n = 5
    res = solve_lp(-c, A, np.full(5, -np.inf), b, np.zeros(n), np.full(n, np.inf))
    assert res.status == "optimal" and -res.objective == pytest.approx(want, abs=1e-7)
    m = MilpModel()
    xs = [m.add_var(f"x{k}", obj=-c[k]) for k in range(n)]
    for i in range(5):
        m.add_constr(f"r{i}", dict(zip(xs, A[i])), "<=", b[i])
    assert -solve_lp_relaxation(m)[0] == pytest.approx(want, abs=1e-7)


def test_mps_round_trip_keeps_optimum(worked_model):
    again = parse_mps(export_mps(worked_model))
    assert again.n_vars == worked_model.n_vars and again.n_cons == worked_model.n_cons
    assert round(solve(again).objective, 6) == 494


def test_empty_model_exports():
    text = export_mps(MilpModel("empty"))
    assert "ENDATA" in text
    s = solve(parse_mps(text))
    assert s.status == OPTIMAL and s.objective == 0


def _highs_mps(text, tmp_path):
    p = tmp_path / "m.mps"
    p.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(p))
    h.run()
    return h.getInfo().objective_function_value


def test_exported_toy_agrees_with_external_solver(tmp_path):
    m, c, A, b = eight_binaries()
    want, _ = enumerate_binary_program(c, A, b)
    assert solve(m).objective == pytest.approx(want)
    assert _highs_mps(export_mps(m), tmp_path) == pytest.approx(want)


def test_exported_worked_model_agrees_with_external_solver(worked_model, tmp_path):
    assert _highs_mps(export_mps(worked_model), tmp_path) == pytest.approx(494)


def test_long_names_are_shortened_with_a_map(worked_model):
    text = export_mps(worked_model)
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("*")]
    assert all(len(tok) <= 8 for ln in body[1:] for tok in ln.split()[:1] if not ln.startswith(" "))
    assert "* NAME" in text


def test_bound_trace_respects_weak_duality(worked):
    m = build_dbrp_model(worked, DbrpBuildOptions(True))
    s = solve(m, record_trace=True)
    assert s.trace
    for _, node_bound, global_bound, inc in s.trace:
        assert global_bound <= inc + 1e-9
        assert global_bound <= s.objective + 1e-6


def test_solve_is_deterministic(worked_model):
    a, b = solve(worked_model), solve(worked_model)
    assert (a.status, a.objective, a.nodes) == (b.status, b.objective, b.nodes)
    assert np.array_equal(a.x, b.x)


def test_node_limit_reports_gap(worked_model):
    s = solve(worked_model, node_limit=3)
    assert s.status in ("feasible_gap", "time_limit_no_incumbent")
    assert s.bound <= 494 + 1e-6


def test_validation_rejects_duplicates():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(Exception):
        m.add_var("x")


@pytest.mark.slow
def test_in_house_simplex_backend_on_worked_model(worked_model):
    s = solve(worked_model, backend="simplex")
    assert s.status == OPTIMAL and round(s.objective, 6) == 494
