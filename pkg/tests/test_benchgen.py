import csv
import io
from collections import defaultdict

import numpy as np
import pytest
from oracles import bfs_reachable

from bowser import validate_instance
from bowser import benchgen as bg
from bowser.instance_io import read_instance


@pytest.fixture(scope="module")
def dbrp_bed():
    return bg.generate_dbrp_testbed(bg.default_dbrp_config(0))


@pytest.fixture(scope="module")
def sbrp_bed():
    return bg.generate_sbrp_testbed(bg.default_sbrp_config(0))


def test_graph_is_a_function_of_the_seed():
    a = bg.generate_bernoulli_site_graph(10, 0.1, np.random.default_rng(5))
    b = bg.generate_bernoulli_site_graph(10, 0.1, np.random.default_rng(5))
    c = bg.generate_bernoulli_site_graph(10, 0.1, np.random.default_rng(6))
    assert a.arc_list == b.arc_list and a.waits == b.waits
    assert a.arc_list != c.arc_list


def test_arc_count_follows_the_binomial_mean():
    # at p = 0.9 a draw is almost never rejected, so the count is Binomial(n(n-1), p);
    # seeds 0..199 alone sit at 3.06 sigma, so the check uses ten times as many
    n, p, k = 6, 0.9, 2000
    counts = [len(bg.generate_bernoulli_site_graph(n, p, np.random.default_rng(s)).arc_list) for s in range(k)]
    m = n * (n - 1)
    sigma = np.sqrt(m * p * (1 - p) / k)
    assert abs(np.mean(counts) - m * p) < 3 * sigma


def test_sparse_graphs_are_strongly_connected():
    for s in range(15):
        g = bg.generate_bernoulli_site_graph(10, 0.1, np.random.default_rng(s))
        arcs = [(i, j) for i, j, _ in g.arc_list]
        assert len(arcs) >= 10
        assert bfs_reachable(10, arcs) == set(range(10)) == bfs_reachable(10, arcs, reverse=True)
        assert all(d >= 1.0 and d == round(d) for _, _, d in g.arc_list)


def test_graph_argument_checks():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        bg.generate_bernoulli_site_graph(1, 0.5, rng)
    with pytest.raises(ValueError):
        bg.generate_bernoulli_site_graph(5, 1.0, rng)
    with pytest.raises(bg.GenerationError, match="larger p_edge"):
        bg.generate_bernoulli_site_graph(30, 0.01, rng, max_attempts=5)


def test_arc_lengths_are_roughly_normal():
    g, _ = bg.generate_topology(bg.Topology("x", 1, 30, 0.5), np.random.default_rng(1))
    d = np.array([x for _, _, x in g.arc_list])
    assert abs(d.mean() - 100) < 3 * 20 / np.sqrt(d.size)
    assert abs(d.std() - 20) < 2.0


def test_dbrp_bed_factorial(dbrp_bed):
    assert len(dbrp_bed) == 108
    keys = {(it.factors["bowser_capacity"], it.factors["topology"], it.factors["assets"], it.factors["penalty"])
            for it in dbrp_bed}
    assert len(keys) == 108
    it = next(x for x in dbrp_bed if x.factors["topology"] == "F" and x.factors["assets"] == 15)
    assert it.instance.A == 45 and it.instance.N == 30 and it.instance.T == 50


def test_dbrp_bed_is_valid(dbrp_bed):
    for it in dbrp_bed:
        inst = it.instance
        assert validate_instance(inst) == []
        for a in inst.assets:
            assert a.initial <= 0.2 * a.capacity
            assert a.capacity in (125.0, 146.0, 235.0, 112.0)


def test_assets_stay_in_their_site(dbrp_bed):
    it = next(x for x in dbrp_bed if x.factors["topology"] == "D")
    n = 10
    for k, a in enumerate(it.instance.assets):
        site = k // it.factors["assets"]
        assert np.all(a.locations // n == site)


def test_consumption_means_match_the_fitted_rows(dbrp_bed):
    samples = defaultdict(list)
    for it in dbrp_bed:
        for a in it.instance.assets:
            samples[a.name].append(a.consumption)
    rows, seen = {}, defaultdict(int)
    for name, _, lam, mu in bg.TABLE1:
        seen[name] += 1
        rows[f"{name} #{seen[name]}"] = (lam, mu)
    assert set(samples) <= set(rows)
    for key, f in samples.items():
        lam, mu = rows[key]
        x = np.concatenate(f)
        var = lam * (mu + mu * mu)  # compound Poisson with Poisson(mu) jumps
        assert abs(x.mean() - lam * mu) < 3 * np.sqrt(var / x.size), key


def test_table1_first_row_mean():
    lam, mu = bg.TABLE1[0][2:]
    assert lam * mu == pytest.approx(0.30268, abs=1e-4)
    assert bg.asset_catalog()[0].dist(0).mean == pytest.approx(lam * mu, rel=1e-7)


def test_sbrp_bed_factorial(sbrp_bed):
    assert len(sbrp_bed) == 108
    keys = {tuple(it.factors[k] for k in ("topology", "itl", "cp", "penalty")) for it in sbrp_bed}
    assert len(keys) == 108
    for it in sbrp_bed:
        inst = it.instance
        assert validate_instance(inst) == []
        assert inst.T == 5 and inst.A == 3 and inst.bowser_capacity == 20.0
        assert all(a.capacity == 6.0 for a in inst.assets)
        assert [a.initial for a in inst.assets] == list(bg.SBRP_ITL[it.factors["itl"]])
        for a in inst.assets:
            for d in a.dists():
                assert d.pmf.size - 1 == 7


def test_sbrp_pattern_cp3(sbrp_bed):
    it = next(x for x in sbrp_bed if x.factors["cp"] == "CP3")
    assert it.labels[0] == [f"tpoisson({x},7)" for x in (1, 2, 3, 4, 5)]
    means = [d.mean for d in it.instance.assets[0].dists()]
    assert np.all(np.diff(means) > 0)


def test_testbed_files_are_byte_identical(tmp_path, sbrp_bed):
    cfg = bg.default_sbrp_config(3)
    bg.write_testbed(bg.generate_sbrp_testbed(cfg), tmp_path / "a")
    bg.write_testbed(bg.generate_sbrp_testbed(cfg), tmp_path / "b")
    fa = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(fa) == 109
    for name in fa:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    txt = [n for n in fa if n.endswith(".txt")]
    back = read_instance(tmp_path / "a" / txt[0])
    assert validate_instance(back) == []
    assert bg.read_manifest(tmp_path / "a")[txt[0]]["topology"] in "ABCDEF"


def test_different_seeds_differ():
    a = bg.generate_sbrp_testbed(bg.default_sbrp_config(0))[0].instance
    b = bg.generate_sbrp_testbed(bg.default_sbrp_config(1))[0].instance
    assert a.graph.arc_list != b.graph.arc_list


def test_config_rejects_empty_levels():
    with pytest.raises(ValueError):
        bg.TestbedConfig("DBRP", 5, (), bg.DBRP_TOPOLOGIES, (1.0,), assets_per_site=(1,))
    with pytest.raises(ValueError):
        bg.TestbedConfig("XBRP", 5, (1.0,), bg.DBRP_TOPOLOGIES, (1.0,))


# --- harness ---------------------------------------------------------------

def spreadsheet_means(rows, factor, value, method):
    """Aggregation written the long way round: filter, bucket, sum, divide."""
    sums, counts = {}, {}
    for r in rows:
        if r["method"] != method or value not in r or r[value] is None:
            continue
        key = r[factor]
        sums[key] = sums.get(key, 0.0) + r[value]
        counts[key] = counts.get(key, 0) + 1
    return {k: sums[k] / counts[k] for k in sums}


@pytest.fixture(scope="module")
def small_rows():
    cfg = bg.default_sbrp_config(0)
    items = [it for it in bg.generate_sbrp_testbed(cfg) if it.factors["topology"] in ("A", "D")
             and it.factors["itl"] == "ITL3" and it.factors["penalty"] == 50.0]
    for it in items:
        it.instance = it.instance.replace(assets=it.instance.assets[:2], bowser_capacity=10.0)
    lim = bg.Limits(replications=100, segments=3)
    return bg.run_benchmark(items, ["SBRP_HN", "SDP"], lim)


def test_pivots_match_the_spreadsheet_oracle(small_rows):
    assert len(small_rows) == 12
    for fac in ("topology", "cp"):
        for m, v in (("SBRP_HN", "optimality_gap"), ("SBRP_HN", "linearization_gap"), ("SDP", "objective")):
            got = bg.pivot(small_rows, fac, v, m)
            want = spreadsheet_means(small_rows, fac, v, m)
            assert got.keys() == want.keys()
            for k in got:
                assert got[k] == pytest.approx(want[k], rel=1e-12)


def test_gap_definitions(small_rows):
    opt = {r["instance"]: r["objective"] for r in small_rows if r["method"] == "SDP"}
    for r in small_rows:
        if r["method"] == "SBRP_HN":
            assert r["optimality_gap"] == pytest.approx((r["simulated"] - opt[r["instance"]]) / opt[r["instance"]])
            assert r["linearization_gap"] == pytest.approx(abs(r["predicted"] - r["simulated"]) / r["simulated"])
            assert r["ci_low"] <= r["simulated"] <= r["ci_high"]


def test_pivot_table_layout(small_rows):
    text = bg.pivot_table(small_rows, ["topology", "cp"], [("SBRP_HN", "optimality_gap"), ("SDP", "objective")])
    rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
    assert rows[0] == ["topology", "SBRP_HN:optimality_gap", "SDP:objective"]
    assert [r[0] for r in rows[1:3]] == ["A", "D"]
    overall = rows[rows.index(["overall", "SBRP_HN:optimality_gap", "SDP:objective"]) + 1]
    sdp = [r["objective"] for r in small_rows if r["method"] == "SDP"]
    assert float(overall[2]) == pytest.approx(np.mean(sdp), rel=1e-5)


def test_failures_are_recorded_not_raised():
    cfg = bg.default_dbrp_config(0)
    it = bg.generate_dbrp_testbed(cfg)[0]
    rows = bg.run_benchmark([it], ["SDP"], bg.Limits())
    assert rows[0]["status"] == "error" and "SdpBudgetError" in rows[0]["error"]
    with pytest.raises(ValueError):
        bg.run_benchmark([it], ["XYZ"])


def test_rows_write_as_tsv(small_rows, tmp_path):
    bg.write_rows(small_rows, tmp_path / "rows.tsv")
    back = list(csv.DictReader(open(tmp_path / "rows.tsv"), delimiter="\t"))
    assert len(back) == len(small_rows)
    assert {r["method"] for r in back} == {"SBRP_HN", "SDP"}


def test_vi_never_needs_more_nodes_on_a_small_subset():
    items = [bg.TestbedInstance(bg.desk_dbrp_instance(s), {"seed": s}) for s in range(6)]
    rows = bg.run_benchmark(items, ["MP", "MPVI"], bg.Limits(time_limit=120))
    mp = [r["nodes"] for r in rows if r["method"] == "MP"]
    vi = [r["nodes"] for r in rows if r["method"] == "MPVI"]
    obj = {}
    for r in rows:
        obj.setdefault(r["instance"], []).append(r["objective"])
    assert all(abs(a - b) < 1e-6 for a, b in obj.values())
    assert np.mean(vi) <= np.mean(mp)
