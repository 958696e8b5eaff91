"""Command-line entry point: ``bowser <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import benchgen
from .core import BowserError, validate_instance
from .instance_io import format_plan, read_instance, read_plan, write_plan

TIME_LIMIT_ENV = "BOWSER_TIME_LIMIT"
BENCH_METHODS = {"mp": "MP", "mpvi": "MPVI", "hn": "SBRP_HN", "rh": "SBRP_RH", "sdp": "SDP"}


def _default_time_limit() -> float:
    v = os.environ.get(TIME_LIMIT_ENV)
    if v is None:
        return 600.0
    try:
        return float(v)
    except ValueError:
        raise BowserError(f"{TIME_LIMIT_ENV}='{v}' is not a number") from None


def route_table(route) -> str:
    lines = ["t\tTransition"]
    for t in range(len(route) - 1):
        lines.append(f"{t + 1}\t{route[t] + 1} -> {route[t + 1] + 1}")
    return "\n".join(lines)


def _emit_plan(plan, out):
    if out:
        write_plan(plan, out)
        print(f"plan written to {out}")
    else:
        print(format_plan(plan), end="")


def cmd_validate(args):
    inst = read_instance(args.instance)
    problems = validate_instance(inst)
    kind = "deterministic" if inst.is_deterministic else "stochastic"
    print(f"{inst.name or args.instance}: {inst.N} nodes, {inst.A} assets, {inst.T} periods, {kind}")
    if problems:
        for p in problems:
            print(f"  problem: {p}")
        return 1
    print("  ok")
    return 0


def cmd_solve_det(args):
    from .dbrp import DbrpBuildOptions, build_dbrp_model, extract_plan
    from .milp import export_standard_format, solve
    from .sim import evaluate_plan_deterministic

    inst = read_instance(args.instance)
    model = build_dbrp_model(inst, DbrpBuildOptions(with_valid_inequalities=args.vi))
    if args.export:
        Path(args.export).write_text(export_standard_format(model))
    sol = solve(model, time_limit=args.time_limit, backend=args.backend)
    print(f"status {sol.status}")
    if sol.x is None:
        return 2
    plan = extract_plan(inst, sol, model)
    ev = evaluate_plan_deterministic(inst, plan)
    print(f"objective {sol.objective:.6g}")
    print(f"travel {ev.travel_cost:.6g}  shortage {ev.total_shortage:.6g}  penalty {ev.shortage_cost:.6g}")
    print(f"gap {sol.gap:.3g}  nodes {sol.nodes}  time {sol.wall_time:.2f}s")
    print(route_table(plan.route))
    _emit_plan(plan, args.out)
    return 0


def cmd_solve_sto(args):
    from .sbrp import SbrpBuildOptions, StageCache, StageSolveError, here_and_now, receding_horizon_run
    from .sim import evaluate_plan_monte_carlo, sample_consumption, student_interval

    inst = read_instance(args.instance)
    opts = SbrpBuildOptions(segments=args.segments)
    kw = dict(time_limit=args.time_limit, backend=args.backend)
    if args.mode == "hn":
        res = here_and_now(inst, opts, **kw)
        print(f"status {res.solution.status}")
        if res.plan is None:
            return 2
        mc = evaluate_plan_monte_carlo(inst, res.plan, args.reps, args.seed)
        print(f"routing cost {res.travel:.6g}")
        print(f"predicted expected shortage {res.predicted_shortage:.6g}")
        print(f"predicted expected cost {res.predicted_total:.6g}")
        print(f"simulated expected cost {mc.mean:.6g}  95% CI ({mc.ci[0]:.6g}, {mc.ci[1]:.6g})  reps {args.reps}")
        print(route_table(res.plan.route))
        _emit_plan(res.plan, args.out)
        return 0
    paths = sample_consumption(inst, args.reps, args.seed)
    cache = StageCache()
    costs = []
    first = None
    for f in paths:
        try:
            r = receding_horizon_run(inst, opts, f, cache, **kw)
        except StageSolveError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        costs.append(r.cost)
        first = first or r
    mean, ci, _ = student_interval(costs)
    ci_txt = f"({ci[0]:.6g}, {ci[1]:.6g})" if ci else "n/a"
    print(f"receding horizon: {len(costs)} runs, {len(cache.data)} distinct stage solves")
    print(f"simulated expected cost {mean:.6g}  95% CI {ci_txt}")
    if args.out:
        write_plan(first.plan, args.out)
        print(f"plan of replication 1 written to {args.out}")
    return 0


def cmd_sdp(args):
    from .sdp import simulate_policy, solve_sdp

    inst = read_instance(args.instance)
    pol = solve_sdp(inst, args.variant, budget=args.budget)
    print(f"optimal expected cost {pol.value:.6f}")
    if args.reps:
        sim = simulate_policy(inst, pol, args.reps, args.seed)
        print(f"simulated {sim.mean:.6f}  95% CI ({sim.ci[0]:.6f}, {sim.ci[1]:.6f})")
    if args.dump:
        text = pol.dump(args.max_states)
        if args.dump == "-":
            print(text, end="")
        else:
            Path(args.dump).write_text(text)
            print(f"policy written to {args.dump}")
    return 0


def cmd_simulate(args):
    from .sim import evaluate_plan_monte_carlo

    inst = read_instance(args.instance)
    plan = read_plan(args.plan)
    mc = evaluate_plan_monte_carlo(inst, plan, args.reps, args.seed)
    print(f"travel {mc.travel_cost:.6g}")
    print(f"mean {mc.mean:.6f}  95% CI ({mc.ci[0]:.6f}, {mc.ci[1]:.6f})  reps {mc.replications}")
    return 0


def load_testbed_config(spec: str, seed: int | None):
    """``dbrp``, ``sbrp`` or ``all``, or a JSON file with ``kind`` plus config overrides."""
    if spec in ("dbrp", "sbrp", "all"):
        kinds, over = (["dbrp", "sbrp"] if spec == "all" else [spec]), {}
    else:
        over = json.loads(Path(spec).read_text())
        kind = over.pop("kind", "all")
        kinds = ["dbrp", "sbrp"] if kind == "all" else [kind]
    if seed is not None:
        over["seed"] = seed
    out = []
    for k in kinds:
        if k not in ("dbrp", "sbrp"):
            raise BowserError(f"unknown testbed kind '{k}'")
        base = benchgen.default_dbrp_config if k == "dbrp" else benchgen.default_sbrp_config
        cfg = base(over.get("seed", 0))
        fields = {f for f in cfg.__dataclass_fields__}
        bad = set(over) - fields
        if bad:
            raise BowserError(f"unknown config keys: {sorted(bad)}")
        vals = {key: (tuple(v) if isinstance(v, list) else v) for key, v in over.items()}
        if "topologies" in vals:
            vals["topologies"] = tuple(benchgen.Topology(*t) for t in vals["topologies"])
        out.append(cfg.__class__(**{**cfg.__dict__, **vals}))
    return out


def cmd_gen_testbed(args):
    cfgs = load_testbed_config(args.config, args.seed)
    for cfg in cfgs:
        gen = benchgen.generate_dbrp_testbed if cfg.kind == "DBRP" else benchgen.generate_sbrp_testbed
        items = gen(cfg)
        out = Path(args.out) / cfg.kind.lower() if len(cfgs) > 1 else Path(args.out)
        benchgen.write_testbed(items, out)
        print(f"{len(items)} {cfg.kind} instances written to {out}")
    return 0


def _load_bed(d):
    d = Path(d)
    manifest = benchgen.read_manifest(d)
    files = list(manifest) if manifest else sorted(p.name for p in d.glob("*.txt"))
    if not files:
        raise BowserError(f"no instances in {d}")
    items = []
    for fn in files:
        fac = {k: _maybe_num(v) for k, v in manifest.get(fn, {}).items()}
        items.append(benchgen.TestbedInstance(read_instance(d / fn), fac))
    return items


def _maybe_num(v):
    try:
        return float(v)
    except ValueError:
        return v


def cmd_bench(args):
    items = _load_bed(args.dir)
    methods = [BENCH_METHODS[m] for m in args.method]
    lim = benchgen.Limits(time_limit=args.time_limit, replications=args.reps, segments=args.segments,
                          seed=args.seed, backend=args.backend)
    rows = benchgen.run_benchmark(items, methods, lim, args.jobs)
    if args.rows:
        benchgen.write_rows(rows, args.rows)
    factors = [k for k in items[0].factors]
    kpis = []
    for m in methods:
        if m in ("MP", "MPVI"):
            kpis += [(m, "objective"), (m, "time"), (m, "nodes"), (m, "gap")]
        elif m == "SDP":
            kpis += [(m, "objective"), (m, "time")]
        else:
            kpis += [(m, "simulated"), (m, "time")]
            if m == "SBRP_HN":
                kpis.append((m, "linearization_gap"))
            if "SDP" in methods:
                kpis.append((m, "optimality_gap"))
    print(benchgen.pivot_table(rows, factors, kpis), end="")
    errors = [r for r in rows if r.get("status") == "error"]
    for r in errors:
        print(f"error: {r['instance']} {r['method']}: {r['error']}", file=sys.stderr)
    return 1 if errors else 0


def cmd_fit(args):
    from . import telemetry as tm

    snaps = []
    for fn in args.xml:
        snaps += tm.parse_aemp_fleet(Path(fn).read_bytes())
    window = tm.ActivityWindow.parse(args.window) if args.window else None
    rows, failed = [], 0
    for asset, ss in tm.group_by_asset(snaps).items():
        try:
            series = tm.bucket_series(ss, args.bucket)
            rep = tm.fit_asset_distribution(series, window)
        except tm.TelemetryError as e:
            print(f"error: asset {asset}: {e}", file=sys.stderr)
            failed += 1
            continue
        rows.append((asset, ss[0].model, rep if not args.window else _relabel(rep, args.window)))
    print(tm.format_report(rows), end="")
    return 1 if failed else 0


def _relabel(rep, label):
    from dataclasses import replace

    return replace(rep, window=label)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bowser", description="Fuel bowser routing toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    tl = _default_time_limit()

    def solver_flags(sp):
        sp.add_argument("--time-limit", type=float, default=tl, help=f"seconds (default ${TIME_LIMIT_ENV} or 600)")
        sp.add_argument("--backend", choices=["highs", "simplex"], default="highs")

    s = sub.add_parser("validate", help="check an instance file")
    s.add_argument("instance")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve-det", help="solve a deterministic instance")
    s.add_argument("instance")
    s.add_argument("--vi", action="store_true", help="add valid inequalities")
    s.add_argument("--export", help="write the model in MPS format")
    s.add_argument("--out", help="plan file (default: stdout)")
    solver_flags(s)
    s.set_defaults(func=cmd_solve_det)

    s = sub.add_parser("solve-sto", help="here-and-now or receding-horizon plan for a stochastic instance")
    s.add_argument("instance")
    s.add_argument("--segments", type=int, default=8)
    s.add_argument("--mode", choices=["hn", "rh"], default="hn")
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    solver_flags(s)
    s.set_defaults(func=cmd_solve_sto)

    s = sub.add_parser("sdp", help="optimal policy by backward recursion")
    s.add_argument("instance")
    s.add_argument("--variant", choices=["fuel", "location", "det"], default="fuel")
    s.add_argument("--budget", type=float, default=5e7)
    s.add_argument("--dump", nargs="?", const="-", help="policy table to a file, or stdout")
    s.add_argument("--max-states", type=int, default=10_000)
    s.add_argument("--reps", type=int, default=0, help="also simulate the policy")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sdp)

    s = sub.add_parser("simulate", help="Monte Carlo cost of a plan")
    s.add_argument("instance")
    s.add_argument("plan")
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen-testbed", help="write a benchmark testbed")
    s.add_argument("config", help="dbrp, sbrp, all, or a JSON config file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gen_testbed)

    s = sub.add_parser("bench", help="run methods over a testbed directory")
    s.add_argument("dir")
    s.add_argument("--method", action="append", choices=sorted(BENCH_METHODS), required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--segments", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rows", help="per-instance rows as TSV")
    solver_flags(s)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("fit", help="fit consumption distributions from AEMP XML")
    s.add_argument("xml", nargs="+")
    s.add_argument("--bucket", type=int, default=15, help="minutes")
    s.add_argument("--window", help="e.g. 'Mon-Fri 07:00-16:00'")
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (BowserError, ValueError, OSError, RuntimeError, KeyError) as e:
        print(f"bowser: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
