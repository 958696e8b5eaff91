"""Plain-text instance and plan files.

Grammar
-------
A file is a sequence of ``[section]`` blocks. ``#`` starts a comment.
Key/value sections hold ``key = value`` lines; matrix sections hold
whitespace-separated rows. Node labels are 1-based and node 1 is the cistern.

Instance sections::

    [instance]            name, horizon, nodes, penalty, bowser_capacity,
                          bowser_initial, bowser_start (optional, default 1)
    [distances]           N x N matrix; '.' forbids the transit; a 0 on the
                          diagonal lets the bowser wait at that node (always
                          allowed at the cistern)
    [assets]              one "capacity initial" row per asset
    [locations]           A x T matrix of node labels
    [location_dist]       alternative to [locations]: A x T cells of the form
                          ``node:prob|node:prob``
    [consumption]         A x T matrix of liters (deterministic)
    [consumption_dist]    alternative: A x T distribution tokens
                          ``poisson(lam)``, ``tpoisson(lam,cap)``,
                          ``cpoisson(lam,mu[,buckets])``, ``pmf(p0,p1,...)``
                          or a bare integer for a point mass

Plan sections::

    [plan]        horizon, assets
    [route]       T node labels
    [refills]     T liters
    [refuels]     A x T liters
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .core import AssetSpec, Instance, Plan, SiteGraph
from .stochproc import DiscreteDist, compound_poisson, convolve_all, poisson, truncated_poisson


class FormatError(ValueError):
    """Malformed instance or plan document."""


def _sections(text: str) -> dict:
    out, cur = {}, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            cur = m.group(1).lower()
            if cur in out:
                raise FormatError(f"line {lineno}: duplicate section [{cur}]")
            out[cur] = []
            continue
        if cur is None:
            raise FormatError(f"line {lineno}: content before the first section")
        out[cur].append((lineno, line))
    return out


def _keyvals(lines) -> dict:
    kv = {}
    for lineno, line in lines:
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k.lower()] = v
    return kv


def _rows(lines) -> list:
    return [(lineno, line.split()) for lineno, line in lines]


def _num(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"line {lineno}: '{tok}' is not a number") from None


_TOKEN = re.compile(r"(\w+)\(([^)]*)\)")


def parse_dist(tok: str) -> DiscreteDist:
    """Parse one consumption distribution token."""
    if re.fullmatch(r"\d+", tok):
        return DiscreteDist.point_mass(int(tok))
    m = _TOKEN.fullmatch(tok)
    if not m:
        raise FormatError(f"unknown distribution token '{tok}'")
    kind = m.group(1).lower()
    args = [float(x) for x in m.group(2).split(",") if x.strip()]
    if kind == "poisson" and len(args) == 1:
        return poisson(args[0])
    if kind == "tpoisson" and len(args) == 2:
        return truncated_poisson(args[0], int(args[1]))
    if kind == "cpoisson" and len(args) in (2, 3):
        d = compound_poisson(args[0], poisson(args[1]))
        n = int(args[2]) if len(args) == 3 else 1
        return convolve_all([d] * n) if n > 1 else d
    if kind == "point" and len(args) == 1:
        return DiscreteDist.point_mass(int(args[0]))
    if kind == "pmf" and args:
        return DiscreteDist(np.array(args))
    raise FormatError(f"bad distribution token '{tok}'")


def _fmt(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _matrix(sec, name, nrows, ncols):
    rows = _rows(sec.get(name, []))
    if len(rows) != nrows:
        raise FormatError(f"[{name}] needs {nrows} rows, found {len(rows)}")
    for lineno, r in rows:
        if len(r) != ncols:
            raise FormatError(f"line {lineno}: [{name}] rows need {ncols} entries, found {len(r)}")
    return rows


def parse_instance(text: str) -> Instance:
    sec = _sections(text)
    if "instance" not in sec:
        raise FormatError("missing [instance] section")
    kv = _keyvals(sec["instance"])
    try:
        T = int(kv["horizon"])
        N = int(kv["nodes"])
        p = float(kv["penalty"])
        cb = float(kv["bowser_capacity"])
        sb = float(kv["bowser_initial"])
    except KeyError as e:
        raise FormatError(f"[instance] lacks key {e}") from None
    start = int(kv.get("bowser_start", 1)) - 1
    arcs, waits = [], set()
    for i, (lineno, row) in enumerate(_matrix(sec, "distances", N, N)):
        for j, tok in enumerate(row):
            if tok in (".", "-"):
                continue
            d = _num(tok, lineno)
            if i == j:
                if d != 0:
                    raise FormatError(f"line {lineno}: diagonal entries must be 0 or '.'")
                waits.add(i)
            else:
                arcs.append((i, j, d))
    graph = SiteGraph(N, tuple(arcs), frozenset(waits))

    arows = _rows(sec.get("assets", []))
    if not arows:
        raise FormatError("missing [assets] section")
    A = len(arows)
    specs = []
    for lineno, r in arows:
        if len(r) != 2:
            raise FormatError(f"line {lineno}: asset rows are 'capacity initial'")
        specs.append(dict(capacity=_num(r[0], lineno), initial=_num(r[1], lineno)))

    if ("locations" in sec) == ("location_dist" in sec):
        raise FormatError("give exactly one of [locations] or [location_dist]")
    if "locations" in sec:
        for k, (lineno, r) in enumerate(_matrix(sec, "locations", A, T)):
            specs[k]["locations"] = [int(_num(x, lineno)) - 1 for x in r]
    else:
        for k, (lineno, r) in enumerate(_matrix(sec, "location_dist", A, T)):
            tab = np.zeros((T, N))
            for t, cell in enumerate(r):
                for part in cell.split("|"):
                    node, _, pr = part.partition(":")
                    tab[t, int(node) - 1] += float(pr) if pr else 1.0
            specs[k]["location_dist"] = tab

    if ("consumption" in sec) == ("consumption_dist" in sec):
        raise FormatError("give exactly one of [consumption] or [consumption_dist]")
    cache = {}
    if "consumption" in sec:
        for k, (lineno, r) in enumerate(_matrix(sec, "consumption", A, T)):
            specs[k]["consumption"] = [_num(x, lineno) for x in r]
    else:
        for k, (lineno, r) in enumerate(_matrix(sec, "consumption_dist", A, T)):
            try:
                specs[k]["consumption_dist"] = tuple(
                    cache[x] if x in cache else cache.setdefault(x, parse_dist(x)) for x in r
                )
            except (FormatError, ValueError) as e:
                raise FormatError(f"line {lineno}: {e}") from None
    assets = tuple(AssetSpec(**s) for s in specs)
    return Instance(T, graph, assets, cb, sb, p, start, kv.get("name", ""))


def _dist_token(d: DiscreteDist, label: str | None) -> str:
    if label:
        return label
    if d.is_point_mass():
        return str(d.support_max)
    return "pmf(" + ",".join(repr(float(x)) for x in d.pmf) + ")"


def format_instance(inst: Instance, dist_labels=None) -> str:
    """Render an instance.

    Parameters
    ----------
    dist_labels : array of str, optional
        ``A x T`` tokens to write in place of explicit pmfs (e.g.
        ``"tpoisson(3,7)"``) so that files stay compact and readable.
    """
    g = inst.graph
    L = [
        "[instance]",
        f"name = {inst.name}" if inst.name else "# unnamed instance",
        f"horizon = {inst.horizon}",
        f"nodes = {g.n}",
        f"penalty = {_fmt(inst.penalty)}",
        f"bowser_capacity = {_fmt(inst.bowser_capacity)}",
        f"bowser_initial = {_fmt(inst.bowser_initial)}",
        f"bowser_start = {inst.bowser_start + 1}",
        "",
        "[distances]",
    ]
    D = [["."] * g.n for _ in range(g.n)]
    for (i, j), d in sorted(g.arcs.items()):
        D[i][j] = _fmt(d)
    for w in sorted(g.waits):
        D[w][w] = "0"
    width = max(len(x) for row in D for x in row)
    L += [" ".join(x.rjust(width) for x in row) for row in D]
    L += ["", "[assets]"] + [f"{_fmt(a.capacity)} {_fmt(a.initial)}" for a in inst.assets]
    if inst.stochastic_location:
        L += ["", "[location_dist]"]
        for a in inst.assets:
            if a.location_dist is None:
                L.append(" ".join(str(x + 1) for x in a.locations))
                continue
            cells = []
            for row in a.location_dist:
                nz = np.flatnonzero(row)
                cells.append("|".join(f"{v + 1}:{float(row[v])!r}" for v in nz))
            L.append(" ".join(cells))
    else:
        L += ["", "[locations]"] + [" ".join(str(x + 1) for x in a.locations) for a in inst.assets]
    if inst.stochastic_consumption:
        L += ["", "[consumption_dist]"]
        for k, a in enumerate(inst.assets):
            labels = dist_labels[k] if dist_labels is not None else [None] * inst.horizon
            L.append(" ".join(_dist_token(d, lab) for d, lab in zip(a.dists(), labels)))
    else:
        L += ["", "[consumption]"] + [" ".join(_fmt(x) for x in a.consumption) for a in inst.assets]
    return "\n".join(L) + "\n"


def read_instance(path) -> Instance:
    return parse_instance(Path(path).read_text())


def write_instance(inst: Instance, path, dist_labels=None) -> None:
    Path(path).write_text(format_instance(inst, dist_labels))


def parse_plan(text: str) -> Plan:
    sec = _sections(text)
    if "route" not in sec:
        raise FormatError("missing [route] section")
    route = [int(_num(x, ln)) - 1 for ln, r in _rows(sec["route"]) for x in r]
    refills = [_num(x, ln) for ln, r in _rows(sec.get("refills", [])) for x in r]
    refuels = [[_num(x, ln) for x in r] for ln, r in _rows(sec.get("refuels", []))]
    T = len(route)
    if len(refills) != T:
        raise FormatError(f"[refills] needs {T} entries")
    if any(len(r) != T for r in refuels):
        raise FormatError(f"[refuels] rows need {T} entries")
    return Plan(np.array(route), np.array(refills), np.array(refuels).reshape(len(refuels), T))


def format_plan(plan: Plan) -> str:
    A, T = plan.refuels.shape
    L = ["[plan]", f"horizon = {T}", f"assets = {A}", "", "[route]",
         " ".join(str(x + 1) for x in plan.route), "", "[refills]",
         " ".join(_fmt(round(x, 9)) for x in plan.refills), "", "[refuels]"]
    L += [" ".join(_fmt(round(x, 9)) for x in row) for row in plan.refuels]
    return "\n".join(L) + "\n"


def read_plan(path) -> Plan:
    return parse_plan(Path(path).read_text())


def write_plan(plan: Plan, path) -> None:
    Path(path).write_text(format_plan(plan))
