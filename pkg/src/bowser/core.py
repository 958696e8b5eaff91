"""Shared domain model: site graphs, assets, instances, plans and evaluations.

Nodes are 0-based internally; the cistern is node 0. External formats use
1-based labels (see :mod:`bowser.instance_io`).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .stochproc import DiscreteDist

CISTERN = 0
FEAS_TOL = 1e-6


class BowserError(Exception):
    """Base class for package errors."""


class InstanceKindError(BowserError):
    """Raised when a model or method receives the wrong instance variant."""


class PlanDimensionError(BowserError):
    """Plan arrays do not match the instance dimensions."""


class SolverIntegrityError(BowserError):
    """A solver returned data that contradicts the model structure."""


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SiteGraph:
    """Directed site network.

    Parameters
    ----------
    n : int
        Number of nodes.
    arc_list : iterable of (i, j, distance)
        Explicit arcs between distinct nodes.
    waits : iterable of int, optional
        Nodes where the bowser may stay put for a period (zero distance).
        The cistern is always included. Defaults to the cistern only.
    """

    n: int
    arc_list: tuple = ()
    waits: frozenset = frozenset({CISTERN})

    def __post_init__(self):
        arcs = tuple(sorted((int(i), int(j), float(d)) for i, j, d in self.arc_list))
        object.__setattr__(self, "arc_list", arcs)
        object.__setattr__(self, "waits", frozenset(int(w) for w in self.waits) | {CISTERN})
        dist = {}
        for i, j, d in arcs:
            dist.setdefault((i, j), d)
        object.__setattr__(self, "_dist", dist)
        succ = [[] for _ in range(max(self.n, 0))]
        for (i, j), d in dist.items():
            if 0 <= i < self.n and i != j:
                succ[i].append((j, d))
        for w in self.waits:
            if 0 <= w < self.n:
                succ[w].append((w, 0.0))
        for s in succ:
            s.sort()
        object.__setattr__(self, "_succ", [tuple(s) for s in succ])

    @classmethod
    def from_dict(cls, n: int, arcs: Mapping, waits: Iterable[int] | None = None, wait_everywhere=False):
        w = range(n) if wait_everywhere else (waits if waits is not None else ())
        return cls(n, tuple((i, j, d) for (i, j), d in arcs.items()), frozenset(w))

    @property
    def arcs(self) -> dict:
        return dict(self._dist)

    def moves(self, i: int) -> tuple:
        """Admissible ``(j, distance)`` successors of ``i`` including waiting."""
        return self._succ[i]

    def can_move(self, i: int, j: int) -> bool:
        if i == j:
            return i in self.waits
        return (i, j) in self._dist

    def distance(self, i: int, j: int) -> float:
        if i == j and i in self.waits:
            return 0.0
        return self._dist[(i, j)]

    def transitions(self) -> list:
        """All admissible ``(i, j)`` pairs sorted, waits included."""
        return sorted({(i, j) for i in range(self.n) for j, _ in self._succ[i]})

    def _adjacency(self, reverse=False) -> csr_matrix:
        pairs = [(i, j) for (i, j) in self._dist if 0 <= i < self.n and 0 <= j < self.n]
        if not pairs:
            return csr_matrix((self.n, self.n))
        r, c = np.array(pairs).T
        if reverse:
            r, c = c, r
        return csr_matrix((np.ones(len(r)), (r, c)), shape=(self.n, self.n))

    def unreachable(self) -> tuple[list, list]:
        """Nodes not reachable from the cistern, and nodes that cannot reach it."""
        fwd = set(breadth_first_order(self._adjacency(), CISTERN, return_predecessors=False))
        bwd = set(breadth_first_order(self._adjacency(True), CISTERN, return_predecessors=False))
        return ([v for v in range(self.n) if v not in fwd], [v for v in range(self.n) if v not in bwd])

    def is_strongly_connected(self) -> bool:
        a, b = self.unreachable()
        return not a and not b


@dataclass(frozen=True, eq=False)
class AssetSpec:
    """One fuel-consuming asset.

    Exactly one of ``consumption`` / ``consumption_dist`` and exactly one of
    ``locations`` / ``location_dist`` should be given; :func:`validate_instance`
    reports violations.
    """

    capacity: float
    initial: float
    locations: np.ndarray | None = None
    consumption: np.ndarray | None = None
    consumption_dist: tuple | None = None
    location_dist: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.locations is not None:
            object.__setattr__(self, "locations", _frozen(self.locations, int))
        if self.consumption is not None:
            object.__setattr__(self, "consumption", _frozen(self.consumption, float))
        if self.consumption_dist is not None:
            object.__setattr__(self, "consumption_dist", tuple(self.consumption_dist))
        if self.location_dist is not None:
            object.__setattr__(self, "location_dist", _frozen(self.location_dist, float))

    @property
    def stochastic_consumption(self) -> bool:
        return self.consumption_dist is not None

    @property
    def stochastic_location(self) -> bool:
        return self.location_dist is not None

    def dists(self) -> tuple:
        """Per-period consumption distributions (point masses if deterministic)."""
        if self.consumption_dist is not None:
            return self.consumption_dist
        out = []
        for f in self.consumption:
            if f != round(f):
                raise InstanceKindError("point masses need integral consumption")
            out.append(DiscreteDist.point_mass(int(round(f))))
        return tuple(out)

    def mean_consumption(self) -> np.ndarray:
        if self.consumption is not None:
            return np.asarray(self.consumption, float)
        return np.array([d.mean for d in self.consumption_dist])


@dataclass(frozen=True, eq=False)
class Instance:
    """Complete problem data.

    Attributes
    ----------
    horizon : int
        Number of periods ``T``.
    graph : SiteGraph
    assets : tuple of AssetSpec
    bowser_capacity, bowser_initial : float
    penalty : float
        Cost per liter short.
    bowser_start : int
        Node occupied in period 1 (defaults to the cistern).
    """

    horizon: int
    graph: SiteGraph
    assets: tuple
    bowser_capacity: float
    bowser_initial: float
    penalty: float
    bowser_start: int = CISTERN
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def A(self) -> int:
        return len(self.assets)

    @property
    def N(self) -> int:
        return self.graph.n

    @property
    def is_deterministic(self) -> bool:
        return all(not a.stochastic_consumption and not a.stochastic_location for a in self.assets)

    @property
    def stochastic_consumption(self) -> bool:
        return any(a.stochastic_consumption for a in self.assets)

    @property
    def stochastic_location(self) -> bool:
        return any(a.stochastic_location for a in self.assets)

    def consumption_matrix(self) -> np.ndarray:
        if self.stochastic_consumption:
            raise InstanceKindError("instance has stochastic consumption")
        return np.array([a.consumption for a in self.assets], dtype=float).reshape(self.A, self.T)

    def mean_consumption_matrix(self) -> np.ndarray:
        return np.array([a.mean_consumption() for a in self.assets]).reshape(self.A, self.T)

    def location_matrix(self) -> np.ndarray:
        if self.stochastic_location:
            raise InstanceKindError("instance has stochastic asset locations")
        return np.array([a.locations for a in self.assets], dtype=int).reshape(self.A, self.T)

    def capacities(self) -> np.ndarray:
        return np.array([a.capacity for a in self.assets], dtype=float)

    def initial_levels(self) -> np.ndarray:
        return np.array([a.initial for a in self.assets], dtype=float)

    def replace(self, **kw) -> "Instance":
        return replace(self, **kw)

    def with_point_masses(self) -> "Instance":
        """Stochastic twin whose distributions are point masses at ``f``."""
        assets = [replace(a, consumption=None, consumption_dist=a.dists()) for a in self.assets]
        return replace(self, assets=tuple(assets))

    def with_mean_consumption(self) -> "Instance":
        """Deterministic twin using expected consumption."""
        assets = [replace(a, consumption=a.mean_consumption(), consumption_dist=None) for a in self.assets]
        return replace(self, assets=tuple(assets))

    def suffix(self, t0: int, levels, bowser_level: float, bowser_node: int) -> "Instance":
        """Sub-instance over periods ``t0..T-1`` from a given state."""
        assets = []
        for a, lvl in zip(self.assets, levels):
            kw = dict(initial=float(lvl))
            if a.locations is not None:
                kw["locations"] = a.locations[t0:]
            if a.location_dist is not None:
                kw["location_dist"] = a.location_dist[t0:]
            if a.consumption is not None:
                kw["consumption"] = a.consumption[t0:]
            if a.consumption_dist is not None:
                kw["consumption_dist"] = a.consumption_dist[t0:]
            assets.append(replace(a, **kw))
        return replace(
            self,
            horizon=self.horizon - t0,
            assets=tuple(assets),
            bowser_initial=float(bowser_level),
            bowser_start=int(bowser_node),
        )


@dataclass(frozen=True, eq=False)
class Plan:
    """Bowser route and refuelling quantities.

    Attributes
    ----------
    route : (T,) int array
        Node occupied in each period.
    refills : (T,) array
        Liters moved from the cistern into the bowser.
    refuels : (A, T) array
        Liters delivered to each asset.
    """

    route: np.ndarray
    refills: np.ndarray
    refuels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "route", _frozen(self.route, int))
        object.__setattr__(self, "refills", _frozen(self.refills, float))
        r = np.array(self.refuels, dtype=float)
        if r.ndim == 1:
            r = r.reshape(1, -1)
        r.setflags(write=False)
        object.__setattr__(self, "refuels", r)

    @property
    def transits(self) -> list:
        return list(zip(self.route[:-1].tolist(), self.route[1:].tolist()))

    def travel_cost(self, graph: SiteGraph) -> float:
        return float(sum(graph.distance(i, j) for i, j in self.transits))


@dataclass(frozen=True, eq=False)
class PlanEvaluation:
    travel_cost: float
    shortage_cost: float
    total: float
    shortages: np.ndarray

    @property
    def total_shortage(self) -> float:
        return float(np.sum(self.shortages))


def validate_instance(inst: Instance) -> list[str]:
    """List every violated invariant; an empty list means the instance is valid."""
    out = []
    g = inst.graph
    if g.n < 1:
        out.append("graph.node_count: must be positive")
        return out
    seen = set()
    for i, j, d in g.arc_list:
        if not (0 <= i < g.n and 0 <= j < g.n):
            out.append(f"graph.arcs: arc ({i + 1},{j + 1}) references a missing node")
        if i == j:
            out.append(f"graph.arcs: explicit self-loop at node {i + 1}; use waits")
        if not d > 0:
            out.append(f"graph.arcs: arc ({i + 1},{j + 1}) has nonpositive distance {d}")
        if (i, j) in seen:
            out.append(f"graph.arcs: duplicate arc ({i + 1},{j + 1})")
        seen.add((i, j))
    for w in g.waits:
        if not 0 <= w < g.n:
            out.append(f"graph.waits: node {w + 1} does not exist")
    if not out:
        unreach, stuck = g.unreachable()
        if unreach:
            out.append("graph.connectivity: nodes " + ",".join(str(v + 1) for v in unreach)
                       + " are not reachable from the cistern")
        if stuck:
            out.append("graph.connectivity: nodes " + ",".join(str(v + 1) for v in stuck)
                       + " cannot reach the cistern")
    T = inst.horizon
    if T < 1:
        out.append("horizon: T must be >= 1")
    if inst.A < 1:
        out.append("assets: at least one asset is required")
    if not 0 <= inst.bowser_initial <= inst.bowser_capacity:
        out.append(f"bowser_initial: s_b={inst.bowser_initial} outside [0, c_b={inst.bowser_capacity}]")
    if not inst.penalty > 0:
        out.append(f"penalty: p={inst.penalty} must be positive")
    if not 0 <= inst.bowser_start < g.n:
        out.append(f"bowser_start: node {inst.bowser_start + 1} does not exist")
    for k, a in enumerate(inst.assets, start=1):
        tag = f"assets[{k}]"
        if not a.capacity > 0:
            out.append(f"{tag}.c_a: capacity must be positive")
        if not 0 <= a.initial <= a.capacity:
            out.append(f"{tag}.s_a: initial level {a.initial} outside [0, c_a={a.capacity}]")
        if (a.consumption is None) == (a.consumption_dist is None):
            out.append(f"{tag}.consumption: exactly one of deterministic or stochastic consumption must be set")
        elif a.consumption is not None:
            if a.consumption.shape != (T,):
                out.append(f"{tag}.f: expected {T} periods, got {a.consumption.size}")
            elif np.any(a.consumption < 0) or not np.all(np.isfinite(a.consumption)):
                out.append(f"{tag}.f: consumption must be finite and nonnegative")
        else:
            if len(a.consumption_dist) != T:
                out.append(f"{tag}.f: expected {T} distributions, got {len(a.consumption_dist)}")
            elif not all(isinstance(d, DiscreteDist) for d in a.consumption_dist):
                out.append(f"{tag}.f: stochastic consumption entries must be DiscreteDist")
        if (a.locations is None) == (a.location_dist is None):
            out.append(f"{tag}.l: exactly one of deterministic or stochastic location must be set")
        elif a.locations is not None:
            if a.locations.shape != (T,):
                out.append(f"{tag}.l: expected {T} periods, got {a.locations.size}")
            elif np.any(a.locations < 0) or np.any(a.locations >= g.n):
                out.append(f"{tag}.l: location outside 1..{g.n}")
        else:
            ld = a.location_dist
            if ld.shape != (T, g.n):
                out.append(f"{tag}.l: location pmf table must be {T}x{g.n}")
            elif np.any(ld < 0) or np.any(np.abs(ld.sum(axis=1) - 1.0) > 1e-9):
                out.append(f"{tag}.l: every location pmf must be nonnegative and sum to 1")
    return out


def _check_dims(inst: Instance, plan: Plan):
    T, A = inst.horizon, inst.A
    if plan.route.shape != (T,):
        raise PlanDimensionError(f"route has shape {plan.route.shape}, expected ({T},)")
    if plan.refills.shape != (T,):
        raise PlanDimensionError(f"refills have shape {plan.refills.shape}, expected ({T},)")
    if plan.refuels.shape != (A, T):
        raise PlanDimensionError(f"refuels have shape {plan.refuels.shape}, expected ({A}, {T})")


def check_plan_feasibility(inst: Instance, plan: Plan, tol: float = FEAS_TOL) -> list[str]:
    """List every way ``plan`` breaks the routing and inventory rules of ``inst``.

    Raises
    ------
    PlanDimensionError
        If the plan arrays do not match ``(A, T)``.
    """
    _check_dims(inst, plan)
    g, T = inst.graph, inst.horizon
    out = []
    route = plan.route
    bad = [t for t in range(T) if not 0 <= route[t] < g.n]
    for t in bad:
        out.append(f"route[{t + 1}]: node {route[t] + 1} does not exist")
    if bad:
        return out
    if route[0] != inst.bowser_start:
        out.append(f"route[1]: bowser starts at node {route[0] + 1}, expected {inst.bowser_start + 1}")
    for t in range(1, T):
        if not g.can_move(route[t - 1], route[t]):
            out.append(f"route[{t + 1}]: transit {route[t - 1] + 1}->{route[t] + 1} is not an arc")
    B, Q = plan.refills, plan.refuels
    for t in np.flatnonzero(B < -tol):
        out.append(f"refills[{t + 1}]: negative refill {B[t]}")
    for a, t in zip(*np.nonzero(Q < -tol)):
        out.append(f"refuels[{a + 1},{t + 1}]: negative delivery {Q[a, t]}")
    for t in np.flatnonzero(B > tol):
        if route[t] != CISTERN:
            out.append(f"refills[{t + 1}]: refill away from the cistern (bowser at node {route[t] + 1})")
    if not inst.stochastic_location:
        loc = inst.location_matrix()
        for a, t in zip(*np.nonzero(Q > tol)):
            if loc[a, t] != route[t]:
                out.append(f"refuels[{a + 1},{t + 1}]: asset at node {loc[a, t] + 1} but bowser at node {route[t] + 1}")
    level = inst.bowser_initial
    for t in range(T):
        level += B[t]
        if level > inst.bowser_capacity + tol:
            out.append(f"bowser[{t + 1}]: level {level:.6g} after refill exceeds capacity {inst.bowser_capacity}")
        level -= Q[:, t].sum()
        if level < -tol:
            out.append(f"bowser[{t + 1}]: deliveries exceed available fuel (level {level:.6g})")
    if not inst.stochastic_consumption:
        f = inst.consumption_matrix()
        lvl = inst.initial_levels().copy()
        cap = inst.capacities()
        for t in range(T):
            lvl = lvl + Q[:, t]
            for a in np.flatnonzero(lvl > cap + tol):
                out.append(f"assets[{a + 1}] period {t + 1}: tank level {lvl[a]:.6g} exceeds capacity {cap[a]}")
            lvl = np.maximum(lvl - f[:, t], 0.0)
    return out
