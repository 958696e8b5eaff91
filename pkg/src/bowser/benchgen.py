"""Seeded test-bed generators and the KPI benchmark harness."""
from __future__ import annotations

import csv
import io
import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import CISTERN, AssetSpec, Instance, SiteGraph, validate_instance
from .stochproc import compound_poisson, poisson, truncated_poisson

ARC_MEAN, ARC_SD, ARC_MIN = 100.0, 20.0, 1.0


class GenerationError(RuntimeError):
    pass


# (model, tank liters, lambda, jump mean) for every fitted row
TABLE1 = (
    ("JCB 540-170", 125.0, 0.502645, 0.602257),
    ("JCB 540-170", 125.0, 0.774271, 0.684164),
    ("JCB 540-170", 125.0, 0.3731890, 1.004940),
    ("JCB JS130", 235.0, 1.03892, 1.01056),
    ("JCB JS130", 235.0, 0.926141, 0.393873),
    ("JCB 86C-1", 112.0, 0.476964, 0.960902),
    ("JCB 531-70", 146.0, 0.283428, 0.0516331),
)


@dataclass(frozen=True)
class AssetType:
    name: str
    tank: float
    rows: tuple  # (lambda, jump mean) pairs fitted for this model

    def dist(self, row: int, buckets: int = 1):
        lam, mu = self.rows[row]
        return compound_poisson(lam * buckets, poisson(mu))


def asset_catalog() -> tuple:
    out = {}
    for name, tank, lam, mu in TABLE1:
        out.setdefault((name, tank), []).append((lam, mu))
    return tuple(AssetType(n, t, tuple(r)) for (n, t), r in out.items())


@dataclass(frozen=True)
class Topology:
    label: str
    sites: int
    nodes_per_site: int
    p_edge: float


DBRP_TOPOLOGIES = (
    Topology("A", 1, 10, 0.1), Topology("B", 1, 20, 0.1), Topology("C", 1, 30, 0.1),
    Topology("D", 2, 10, 0.1), Topology("E", 2, 20, 0.1), Topology("F", 3, 10, 0.1),
)
SBRP_TOPOLOGIES = (
    Topology("A", 1, 5, 0.3), Topology("B", 1, 8, 0.3), Topology("C", 1, 10, 0.3),
    Topology("D", 2, 4, 0.3), Topology("E", 2, 5, 0.3), Topology("F", 3, 4, 0.3),
)
SBRP_PATTERNS = {
    "CP1": ((3,) * 5, (3,) * 5, (3,) * 5),
    "CP2": ((2,) * 5, (1,) * 5, (3,) * 5),
    "CP3": ((1, 2, 3, 4, 5), (5, 4, 3, 2, 1), (3, 3, 1, 1, 2)),
}
SBRP_ITL = {"ITL1": (0, 0, 0), "ITL2": (3, 0, 5), "ITL3": (5, 5, 5)}


@dataclass(frozen=True)
class TestbedConfig:
    """Factor levels of a full-factorial test bed.

    DBRP beds cross ``bowser_capacities x topologies x assets_per_site x
    penalties``; SBRP beds cross ``topologies x initial_levels x patterns x
    penalties``.
    """

    kind: str
    horizon: int
    bowser_capacities: tuple
    topologies: tuple
    penalties: tuple
    seed: int = 0
    assets_per_site: tuple = ()
    catalog: tuple = ()
    initial_fraction: float = 0.2
    buckets_per_period: int = 1
    stay_probability: float = 0.5
    bowser_initial: float = 0.0
    initial_levels: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=dict)
    asset_tank: float = 6.0
    truncation: int = 7
    max_attempts: int = 200_000

    __test__ = False

    def __post_init__(self):
        if self.kind not in ("DBRP", "SBRP"):
            raise ValueError("kind must be DBRP or SBRP")
        levels = [self.bowser_capacities, self.topologies, self.penalties]
        levels += [self.assets_per_site] if self.kind == "DBRP" else [self.initial_levels, self.patterns]
        if any(len(x) == 0 for x in levels):
            raise ValueError("every factor needs at least one level")


def default_dbrp_config(seed: int = 0) -> TestbedConfig:
    return TestbedConfig(
        kind="DBRP", horizon=50, bowser_capacities=(500.0, 1000.0, 2000.0), topologies=DBRP_TOPOLOGIES,
        penalties=(100.0, 500.0), seed=seed, assets_per_site=(5, 10, 15), catalog=asset_catalog(),
    )


def default_sbrp_config(seed: int = 0) -> TestbedConfig:
    return TestbedConfig(
        kind="SBRP", horizon=5, bowser_capacities=(20.0,), topologies=SBRP_TOPOLOGIES,
        penalties=(50.0, 100.0), seed=seed, initial_levels=dict(SBRP_ITL), patterns=dict(SBRP_PATTERNS),
    )


def _strongly_connected(n, pairs) -> bool:
    if n == 1:
        return True
    if not pairs:
        return False
    r, c = np.array(pairs).T
    g = csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    return connected_components(g, directed=True, connection="strong")[0] == 1


def _arc_lengths(rng, k):
    return np.maximum(np.round(rng.normal(ARC_MEAN, ARC_SD, size=k)), ARC_MIN)


def generate_bernoulli_site_graph(n: int, p_edge: float, rng, max_attempts: int = 10_000,
                                  wait_everywhere: bool = True) -> SiteGraph:
    """Directed Bernoulli graph, redrawn until strongly connected.

    Arc lengths are Normal(100, 20) rounded to whole units and floored at 1.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 < p_edge < 1.0:
        raise ValueError("p_edge must lie in (0, 1)")
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    for _ in range(max_attempts):
        keep = rng.random(len(off)) < p_edge
        pairs = [e for e, k in zip(off, keep) if k]
        if _strongly_connected(n, pairs):
            d = _arc_lengths(rng, len(pairs))
            waits = range(n) if wait_everywhere else ()
            return SiteGraph(n, tuple((i, j, float(x)) for (i, j), x in zip(pairs, d)), frozenset(waits))
    raise GenerationError(
        f"no strongly connected graph with n={n}, p={p_edge} after {max_attempts} attempts; try a larger p_edge"
    )


def generate_topology(topo: Topology, rng, max_attempts: int = 200_000) -> tuple[SiteGraph, list]:
    """Sites generated independently and chained by two-way gateway arcs.

    Site ``k`` occupies nodes ``k*n .. k*n+n-1``; its first node is the
    gateway, and the first site's gateway is the cistern. Returns the graph
    and the node ranges of the sites.
    """
    n = topo.nodes_per_site
    arcs, sites = [], []
    for k in range(topo.sites):
        g = generate_bernoulli_site_graph(n, topo.p_edge, rng, max_attempts)
        base = k * n
        arcs += [(i + base, j + base, d) for i, j, d in g.arc_list]
        sites.append(list(range(base, base + n)))
    for k in range(topo.sites - 1):
        a, b = k * n, (k + 1) * n
        d = _arc_lengths(rng, 2)
        arcs += [(a, b, float(d[0])), (b, a, float(d[1]))]
    N = topo.sites * n
    return SiteGraph(N, tuple(arcs), frozenset(range(N))), sites


def random_walk(graph: SiteGraph, nodes, T: int, stay: float, rng) -> np.ndarray:
    """Locations over ``T`` periods; moves stay inside ``nodes``."""
    allowed = set(nodes)
    path = [int(rng.choice(nodes))]
    for _ in range(T - 1):
        cur = path[-1]
        nb = [j for j, _ in graph.moves(cur) if j != cur and j in allowed]
        if nb and rng.random() >= stay:
            path.append(int(nb[rng.integers(len(nb))]))
        else:
            path.append(cur)
    return np.array(path)


@dataclass
class TestbedInstance:
    instance: Instance
    factors: dict
    labels: list | None = None

    __test__ = False


def _child(seed, *key):
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _topologies(config: TestbedConfig):
    out = []
    for k, topo in enumerate(config.topologies):
        out.append(generate_topology(topo, _child(config.seed, 1, k), config.max_attempts))
    return out


def generate_dbrp_testbed(config: TestbedConfig | None = None) -> list:
    """Full-factorial deterministic bed; consumption is drawn once per instance."""
    config = config or default_dbrp_config()
    topos = _topologies(config)
    out = []
    grid = itertools.product(
        enumerate(config.bowser_capacities), enumerate(config.topologies),
        enumerate(config.assets_per_site), enumerate(config.penalties),
    )
    for idx, ((ic, cb), (it, topo), (ia, na), (ip, pen)) in enumerate(grid):
        rng = _child(config.seed, 2, idx)
        graph, sites = topos[it]
        assets = []
        for s, nodes in enumerate(sites):
            for k in range(na):
                typ = config.catalog[rng.integers(len(config.catalog))]
                row = int(rng.integers(len(typ.rows)))
                dist = typ.dist(row, config.buckets_per_period)
                f = dist.sample(rng.random(config.horizon)).astype(float)
                init = float(rng.integers(0, int(np.floor(config.initial_fraction * typ.tank)) + 1))
                locs = random_walk(graph, nodes, config.horizon, config.stay_probability, rng)
                assets.append(AssetSpec(typ.tank, init, locs, f, name=f"{typ.name} #{row + 1}"))
        name = f"dbrp_{topo.label}_cb{int(cb)}_a{na}_p{int(pen)}"
        inst = Instance(config.horizon, graph, tuple(assets), cb, config.bowser_initial, pen, CISTERN, name)
        factors = dict(topology=topo.label, bowser_capacity=cb, assets=na, penalty=pen)
        out.append(TestbedInstance(inst, factors))
    return out


def generate_sbrp_testbed(config: TestbedConfig | None = None) -> list:
    """Full-factorial stochastic bed with truncated-Poisson consumption."""
    config = config or default_sbrp_config()
    topos = _topologies(config)
    out = []
    grid = itertools.product(
        enumerate(config.topologies), config.initial_levels.items(), config.patterns.items(),
        enumerate(config.penalties),
    )
    cb = config.bowser_capacities[0]
    for idx, ((it, topo), (itl, levels), (cp, lams), (ip, pen)) in enumerate(grid):
        graph, sites = topos[it]
        # locations depend on the topology only, so factor effects are not confounded with movement
        rng = _child(config.seed, 3, it)
        assets, labels = [], []
        for a, (s0, lam) in enumerate(zip(levels, lams)):
            nodes = sites[a % len(sites)]
            locs = random_walk(graph, nodes, config.horizon, config.stay_probability, rng)
            dists = tuple(truncated_poisson(float(x), config.truncation) for x in lam)
            assets.append(AssetSpec(config.asset_tank, float(s0), locs, None, dists))
            labels.append([f"tpoisson({x:g},{config.truncation})" for x in lam])
        name = f"sbrp_{topo.label}_{itl}_{cp}_p{int(pen)}"
        inst = Instance(config.horizon, graph, tuple(assets), cb, config.bowser_initial, pen, CISTERN, name)
        problems = validate_instance(inst)
        if problems:
            raise GenerationError(f"{name}: {problems[0]}")
        factors = dict(topology=topo.label, itl=itl, cp=cp, penalty=pen)
        out.append(TestbedInstance(inst, factors, labels))
    return out


def desk_dbrp_instance(seed: int, n: int = 6, A: int = 2, T: int = 6, p_edge: float = 0.35,
                       wait_everywhere: bool = True) -> Instance:
    """Small deterministic instance for solver cross-checks."""
    rng = _child(seed, 4)
    g = generate_bernoulli_site_graph(n, p_edge, rng, 200_000, wait_everywhere)
    assets = []
    for _ in range(A):
        cap = float(rng.integers(8, 21))
        assets.append(AssetSpec(cap, float(rng.integers(0, int(cap // 2) + 1)),
                                random_walk(g, list(range(n)), T, 0.5, rng),
                                rng.integers(0, 6, size=T).astype(float)))
    cb = float(rng.integers(15, 41))
    return Instance(T, g, tuple(assets), cb, float(rng.integers(0, int(cb) + 1)), float(rng.choice([10.0, 100.0])),
                    CISTERN, f"desk_{seed}")


def write_testbed(items, outdir) -> list:
    """Write instance files plus ``manifest.csv``; returns the written paths."""
    from .instance_io import write_instance

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    keys = sorted({k for it in items for k in it.factors})
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file"] + keys)
        for it in items:
            fn = f"{it.instance.name}.txt"
            write_instance(it.instance, out / fn, it.labels)
            w.writerow([fn] + [_cell(it.factors.get(k, "")) for k in keys])
            paths.append(out / fn)
    return paths


def read_manifest(indir) -> dict:
    path = Path(indir) / "manifest.csv"
    if not path.exists():
        return {}
    with open(path) as fh:
        return {row.pop("file"): row for row in csv.DictReader(fh)}


def _cell(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


# --- benchmark harness -----------------------------------------------------

METHODS = ("MP", "MPVI", "SBRP_HN", "SBRP_RH", "SDP")


@dataclass
class Limits:
    time_limit: float = 600.0
    gap_tol: float = 1e-6
    replications: int = 500
    segments: int = 5
    seed: int = 0
    sdp_budget: float = 5e7
    backend: str = "highs"


def _run_one(inst: Instance, method: str, lim: Limits) -> dict:
    from .dbrp import DbrpBuildOptions, build_dbrp_model
    from .milp import solve
    from .sbrp import SbrpBuildOptions, StageCache, here_and_now, receding_horizon_run
    from .sdp import solve_sdp
    from .sim import evaluate_plan_monte_carlo, sample_consumption

    t0 = time.perf_counter()
    row = dict(method=method)
    if method in ("MP", "MPVI"):
        m = build_dbrp_model(inst, DbrpBuildOptions(method == "MPVI"))
        s = solve(m, time_limit=lim.time_limit, gap_tol=lim.gap_tol, backend=lim.backend)
        row.update(status=s.status, objective=s.objective, gap=s.gap, nodes=s.nodes,
                   iterations=s.iterations, root_bound=s.root_bound)
    elif method == "SBRP_HN":
        r = here_and_now(inst, SbrpBuildOptions(lim.segments), time_limit=lim.time_limit, gap_tol=lim.gap_tol,
                         backend=lim.backend)
        row.update(status=r.solution.status, nodes=r.solution.nodes, iterations=r.solution.iterations,
                   predicted=r.predicted_total)
        if r.plan is not None:
            mc = evaluate_plan_monte_carlo(inst, r.plan, lim.replications, lim.seed)
            row.update(simulated=mc.mean, ci_low=mc.ci[0], ci_high=mc.ci[1],
                       linearization_gap=abs(r.predicted_total - mc.mean) / mc.mean)
    elif method == "SBRP_RH":
        paths = sample_consumption(inst, lim.replications, lim.seed)
        cache = StageCache()
        costs = np.array([
            receding_horizon_run(inst, SbrpBuildOptions(lim.segments), f, cache, time_limit=lim.time_limit,
                                 gap_tol=lim.gap_tol, backend=lim.backend).cost
            for f in paths
        ])
        from .sim import student_interval

        mean, ci, _ = student_interval(costs)
        row.update(status="optimal", simulated=mean, ci_low=ci[0], ci_high=ci[1], solves=len(cache.data))
    elif method == "SDP":
        pol = solve_sdp(inst, "stochastic_fuel", budget=lim.sdp_budget)
        row.update(status="optimal", objective=pol.value)
    else:
        raise ValueError(f"unknown method '{method}'")
    row["time"] = time.perf_counter() - t0
    return row


def run_benchmark(items, methods, limits: Limits | None = None, jobs: int = 1) -> list:
    """Per-instance KPI rows; failures are recorded in the row, never raised.

    When ``SDP`` is among ``methods``, heuristic rows gain an
    ``optimality_gap`` = (simulated - optimal) / optimal.
    """
    lim = limits or Limits()
    methods = [m.upper() for m in ([methods] if isinstance(methods, str) else methods)]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method '{m}'")
    tasks = [(it, m, lim) for it in items for m in methods]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_work, tasks))
    else:
        rows = [_work(t) for t in tasks]
    return add_optimality_gaps(rows)


def _work(task) -> dict:
    it, m, lim = task
    try:
        r = _run_one(it.instance, m, lim)
    except Exception as e:  # recorded per row so that one instance cannot abort the run
        r = dict(method=m, status="error", error=f"{type(e).__name__}: {e}")
    return dict(instance=it.instance.name, **it.factors, **r)


def add_optimality_gaps(rows) -> list:
    opt = {r["instance"]: r["objective"] for r in rows if r["method"] == "SDP" and r.get("status") == "optimal"}
    for r in rows:
        if r["method"] in ("SBRP_HN", "SBRP_RH") and r["instance"] in opt and "simulated" in r:
            r["optimality_gap"] = (r["simulated"] - opt[r["instance"]]) / opt[r["instance"]]
    return rows


def pivot(rows, by, value, method=None) -> dict:
    """Mean of ``value`` per level of factor ``by`` (rows lacking the value are skipped)."""
    acc = {}
    for r in rows:
        if method is not None and r["method"] != method:
            continue
        v = r.get(value)
        if v is None or not np.isfinite(v):
            continue
        acc.setdefault(r.get(by), []).append(float(v))
    return {k: float(np.mean(v)) for k, v in sorted(acc.items(), key=lambda kv: str(kv[0]))}


def pivot_table(rows, factors, columns) -> str:
    """Delimiter-separated pivot: one block per factor, one column per ``(method, value)`` pair."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    head = [f"{m}:{v}" for m, v in columns]
    for fac in list(factors) + ["overall"]:
        w.writerow([fac] + head)
        cols = []
        for m, v in columns:
            if fac == "overall":
                vals = [r[v] for r in rows if r["method"] == m and r.get(v) is not None and np.isfinite(r[v])]
                cols.append({"": float(np.mean(vals)) if vals else np.nan})
            else:
                cols.append(pivot(rows, fac, v, m))
        levels = sorted({k for c in cols for k in c}, key=str)
        for lev in levels:
            w.writerow([_cell(lev)] + [f"{c[lev]:.6g}" if lev in c else "" for c in cols])
    return buf.getvalue()


def write_rows(rows, path_or_buf) -> None:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    fh = open(path_or_buf, "w", newline="") if isinstance(path_or_buf, (str, Path)) else path_or_buf
    w = csv.DictWriter(fh, keys, delimiter="\t", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) if isinstance(v, float) else v for k, v in r.items()})
    if fh is not path_or_buf:
        fh.close()
