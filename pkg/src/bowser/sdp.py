"""Exact finite-horizon dynamic program over integer fuel grids.

The state in period ``t`` is ``(b_tank, b_loc, m_tank, m_loc)``. Within a
period the bowser refills (at the cistern only), refuels co-located assets,
the assets consume, shortages are charged, and the bowser moves.

Backward recursion works on dense tensors indexed ``[b, node, m_1, ..., m_A]``
and holds values *averaged over the current asset locations*, which are
independent across periods. Decisions are recovered lazily per state from the
stored post-decision tensors, so the policy covers every grid state.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import CISTERN, Instance, InstanceKindError
from .sim import crn_uniforms, student_interval

DEFAULT_BUDGET = 5e7
TIE_TOL = 1e-9
VARIANTS = ("stochastic_fuel", "stochastic_location", "deterministic")
_ALIASES = {"fuel": "stochastic_fuel", "location": "stochastic_location", "det": "deterministic"}


class SdpBudgetError(RuntimeError):
    def __init__(self, work: float, budget: float, states: int):
        self.work, self.budget, self.states = work, budget, states
        super().__init__(
            f"state-action work {work:.3g} exceeds budget {budget:.3g} ({states} states per period)"
        )


class PolicyLookupError(KeyError):
    """State outside the grid the policy was computed on."""


@dataclass(frozen=True)
class SdpState:
    t: int
    b_tank: int
    b_loc: int
    m_tank: tuple
    m_loc: tuple


@dataclass(frozen=True)
class SdpAction:
    b_ref: int
    m_ref: tuple
    b_loc_next: int


def _integral(x, what):
    a = np.asarray(x, dtype=float)
    if np.any(np.abs(a - np.round(a)) > 1e-9):
        raise ValueError(f"{what} must be integral for the dynamic program")
    return np.round(a).astype(int)


def state_space_size(inst: Instance) -> int:
    caps = _integral(inst.capacities(), "asset capacities")
    return int((int(inst.bowser_capacity) + 1) * inst.N * np.prod(caps + 1))


def work_estimate(inst: Instance) -> float:
    """Per-horizon count of state-action evaluations done by the recursion."""
    caps = inst.capacities()
    deg = max(len(inst.graph.moves(i)) for i in range(inst.N))
    per_state = float(np.sum(caps + 1) + inst.bowser_capacity + 1 + deg)
    return float(inst.T) * state_space_size(inst) * per_state


def _location_probs(inst: Instance, variant: str) -> np.ndarray:
    """``P[t, a, node]``: probability asset ``a`` sits at ``node`` in period ``t``."""
    P = np.zeros((inst.T, inst.A, inst.N))
    for a, asset in enumerate(inst.assets):
        if asset.location_dist is not None:
            P[:, a, :] = np.asarray(asset.location_dist, dtype=float)
        else:
            P[np.arange(inst.T), a, np.asarray(asset.locations, dtype=int)] = 1.0
    return P


def _transition(d, cap):
    """``M[y, m']`` = P(max(y - D, 0) = m') and ``L[y]`` = E[(D - y)^+] for y = 0..cap."""
    M = np.zeros((cap + 1, cap + 1))
    k = d.support
    for y in range(cap + 1):
        np.add.at(M[y], np.maximum(y - k, 0), d.pmf)
    L = np.array([float(np.maximum(k - y, 0) @ d.pmf) for y in range(cap + 1)])
    return M, L


class SdpPolicy:
    """Optimal policy; values are tabulated, actions are derived on request."""

    def __init__(self, inst, variant, post, avg, caps, P, value):
        self.inst = inst
        self.variant = variant
        self._post = post  # post[t][b, node, y...]: cost after delivering, incl. moving
        self._avg = avg  # avg[t][b, node, m...]: value before locations are revealed
        self._caps = caps
        self._P = P
        self.value = value
        self._memo = {}

    @property
    def T(self):
        return self.inst.T

    def initial_state(self, m_loc=None) -> SdpState:
        inst = self.inst
        if m_loc is None:
            m_loc = tuple(int(np.argmax(self._P[0, a])) for a in range(inst.A))
        return SdpState(0, int(round(inst.bowser_initial)), int(inst.bowser_start),
                        tuple(int(round(s)) for s in inst.initial_levels()), tuple(m_loc))

    def expected_value(self, t: int, b_tank: int, b_loc: int, m_tank) -> float:
        """Cost-to-go before the period-``t`` asset locations are known."""
        return float(self._avg[t][(b_tank, b_loc) + tuple(m_tank)])

    def _check(self, s: SdpState):
        inst = self.inst
        ok = 0 <= s.t < inst.T and 0 <= s.b_tank <= inst.bowser_capacity and 0 <= s.b_loc < inst.N
        ok = ok and len(s.m_tank) == inst.A and len(s.m_loc) == inst.A
        ok = ok and all(0 <= m <= c for m, c in zip(s.m_tank, self._caps))
        ok = ok and all(self._P[s.t, a, loc] > 0 for a, loc in enumerate(s.m_loc))
        if not ok:
            raise PolicyLookupError(f"state {s} is not covered by this policy")

    def decide(self, s: SdpState) -> tuple[SdpAction, float]:
        """Optimal action at ``s`` (lowest lexicographic among ties) and its cost-to-go."""
        if s in self._memo:
            return self._memo[s]
        self._check(s)
        inst = self.inst
        post = self._post[s.t]
        cb = int(inst.bowser_capacity)
        refills = range(cb - s.b_tank + 1) if s.b_loc == CISTERN else range(1)
        ranges = [
            range(self._caps[a] - s.m_tank[a] + 1) if s.m_loc[a] == s.b_loc else range(1)
            for a in range(inst.A)
        ]
        qs = np.array(list(product(*ranges)), dtype=int).reshape(-1, inst.A)
        tot = qs.sum(axis=1)
        y = np.asarray(s.m_tank) + qs
        best = None
        cands = []
        for br in refills:
            b1 = s.b_tank + br
            ok = tot <= b1
            if not ok.any():
                continue
            idx = (b1 - tot[ok], np.full(ok.sum(), s.b_loc)) + tuple(y[ok].T)
            vals = post[idx]
            for q, v in zip(qs[ok], vals):
                cands.append((float(v), br, tuple(int(x) for x in q)))
        vmin = min(c[0] for c in cands)
        best = min((c[1], c[2]) for c in cands if c[0] <= vmin + TIE_TOL)
        br, q = best
        b_after = s.b_tank + br - sum(q)
        y = tuple(m + d for m, d in zip(s.m_tank, q))
        nxt = self._best_move(s.t, b_after, s.b_loc, y)
        out = (SdpAction(br, q, nxt), vmin)
        self._memo[s] = out
        return out

    def _best_move(self, t, b, node, y):
        if t == self.inst.T - 1:
            return node
        nxt_avg = self._avg[t + 1]
        Ms = self._trans[t]
        vals = []
        for j, d in self.inst.graph.moves(node):
            v = nxt_avg[b, j]
            for a in range(self.inst.A - 1, -1, -1):
                v = v @ Ms[a][y[a]] if v.ndim == 1 else np.tensordot(v, Ms[a][y[a]], axes=([a], [0]))
            vals.append((d + float(v), j))
        vmin = min(v for v, _ in vals)
        return min(j for v, j in vals if v <= vmin + TIE_TOL)

    def dump(self, max_states: int = 10_000) -> str:
        """Table of reachable states with their optimal action and cost-to-go."""
        inst = self.inst
        lines = ["t b_tank b_loc m_tank m_loc | b_ref m_ref b_loc_next | cost_to_go"]
        frontier = set()
        for locs in _loc_support(self._P[0]):
            frontier.add(self.initial_state(locs))
        dists = [a.dists() for a in inst.assets]
        count = 0
        for t in range(inst.T):
            nxt = set()
            for s in sorted(frontier, key=lambda s: (s.b_tank, s.b_loc, s.m_tank, s.m_loc)):
                act, v = self.decide(s)
                count += 1
                if count > max_states:
                    lines.append("... truncated")
                    return "\n".join(lines) + "\n"
                lines.append(
                    f"{t + 1} {s.b_tank} {s.b_loc + 1} {list(s.m_tank)} {[l + 1 for l in s.m_loc]} | "
                    f"{act.b_ref} {list(act.m_ref)} {act.b_loc_next + 1} | {v:.6f}"
                )
                if t + 1 < inst.T:
                    b = s.b_tank + act.b_ref - sum(act.m_ref)
                    y = [m + q for m, q in zip(s.m_tank, act.m_ref)]
                    outs = [sorted({max(y[a] - int(k), 0) for k in dists[a][t].support[dists[a][t].pmf > 0]})
                            for a in range(inst.A)]
                    for m in product(*outs):
                        for locs in _loc_support(self._P[t + 1]):
                            nxt.add(SdpState(t + 1, b, act.b_loc_next, tuple(m), locs))
            frontier = nxt
        return "\n".join(lines) + "\n"


def _loc_support(P_t):
    return [tuple(x) for x in product(*[np.flatnonzero(p > 0).tolist() for p in P_t])]


def _resolve_variant(inst: Instance, variant: str) -> str:
    variant = _ALIASES.get(variant, variant)
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}'")
    if variant == "deterministic" and not inst.is_deterministic:
        raise InstanceKindError("deterministic variant needs deterministic consumption and locations")
    if variant == "stochastic_fuel" and inst.stochastic_location:
        raise InstanceKindError("instance has random asset locations: use the stochastic_location variant")
    return variant


def solve_sdp(inst: Instance, variant: str = "stochastic_fuel", budget: float = DEFAULT_BUDGET) -> SdpPolicy:
    """Backward recursion; returns the policy with ``policy.value`` = optimal expected cost.

    Raises
    ------
    SdpBudgetError
        When the state-action work estimate exceeds ``budget``.
    """
    variant = _resolve_variant(inst, variant)
    cb = int(_integral(inst.bowser_capacity, "bowser capacity"))
    _integral(inst.bowser_initial, "bowser initial level")
    caps = [int(c) for c in _integral(inst.capacities(), "asset capacities")]
    _integral(inst.initial_levels(), "asset initial levels")
    work = work_estimate(inst)
    if work > budget:
        raise SdpBudgetError(work, budget, state_space_size(inst))
    T, A, N = inst.T, inst.A, inst.N
    g = inst.graph
    P = _location_probs(inst, variant)
    trans = [[None] * A for _ in range(T)]
    pen = [[None] * A for _ in range(T)]
    for a, asset in enumerate(inst.assets):
        for t, d in enumerate(asset.dists()):
            trans[t][a], pen[t][a] = _transition(d, caps[a])
    shape = (cb + 1, N) + tuple(c + 1 for c in caps)
    nxt_avg = np.zeros(shape)
    post_list = [None] * T
    avg_list = [None] * T
    for t in range(T - 1, -1, -1):
        # H[b, node, y]: expected cost from the end of delivery, before moving
        if t == T - 1:
            H = np.zeros(shape)
        else:
            H = nxt_avg
            for a in range(A):
                H = np.moveaxis(np.tensordot(H, trans[t][a], axes=([2 + a], [1])), -1, 2 + a)
        for a in range(A):
            sh = [1] * len(shape)
            sh[2 + a] = caps[a] + 1
            H = H + inst.penalty * pen[t][a].reshape(sh)
        if t < T - 1:
            G = np.empty_like(H)
            for i in range(N):
                G[:, i] = np.min(np.stack([d + H[:, j] for j, d in g.moves(i)]), axis=0)
        else:
            G = H
        post_list[t] = G
        avg = np.zeros(shape)
        for i in range(N):
            p_here = P[t, :, i]
            for C in product((0, 1), repeat=A):
                prob = float(np.prod([p_here[a] if C[a] else 1.0 - p_here[a] for a in range(A)]))
                if prob <= 0.0:
                    continue
                R = _deliver(G[:, i], [a for a in range(A) if C[a]], caps)
                if i == CISTERN:
                    R = np.minimum.accumulate(R[::-1], axis=0)[::-1]
                avg[:, i] += prob * R
        avg_list[t] = avg
        nxt_avg = avg
    s0 = (int(round(inst.bowser_initial)), int(inst.bowser_start)) + tuple(
        int(round(s)) for s in inst.initial_levels()
    )
    value = float(avg_list[0][s0])
    pol = SdpPolicy(inst, variant, post_list, avg_list, caps, P, value)
    pol._trans = trans
    return pol


def _deliver(G, assets, caps):
    """``R[b, m] = min over feasible refuels q of G[b - sum q, m + q]`` for the listed assets."""
    R = G
    for a in assets:
        ax = 1 + a
        best = R.copy()
        for q in range(1, min(caps[a], R.shape[0] - 1) + 1):
            # candidate[b, .., m_a, ..] = R[b - q, .., m_a + q, ..]
            src = [slice(None)] * R.ndim
            dst = [slice(None)] * R.ndim
            src[0], dst[0] = slice(0, R.shape[0] - q), slice(q, None)
            src[ax], dst[ax] = slice(q, None), slice(0, R.shape[ax] - q)
            np.minimum(best[tuple(dst)], R[tuple(src)], out=best[tuple(dst)])
        R = best
    return R


@dataclass
class PolicySimulation:
    mean: float
    ci: tuple | None
    std_error: float
    totals: np.ndarray


def simulate_policy(inst: Instance, policy: SdpPolicy, replications: int, seed: int = 0) -> PolicySimulation:
    """Monte Carlo cost of following ``policy``; consumption uses the CRN streams of :mod:`bowser.sim`."""
    if policy.inst is not inst and (policy.inst.T != inst.T or policy.inst.A != inst.A):
        raise PolicyLookupError("policy was computed for a different instance")
    T, A = inst.T, inst.A
    u = crn_uniforms(seed, replications, A, T)
    uloc = crn_uniforms(seed, replications, A, T, stream=1) if policy.variant == "stochastic_location" else None
    dists = [a.dists() for a in inst.assets]
    cdfs = policy._P.cumsum(axis=2)
    totals = np.empty(replications)
    for r in range(replications):
        b = int(round(inst.bowser_initial))
        node = int(inst.bowser_start)
        m = [int(round(s)) for s in inst.initial_levels()]
        cost = 0.0
        for t in range(T):
            if uloc is None:
                locs = tuple(int(np.argmax(policy._P[t, a])) for a in range(A))
            else:
                locs = tuple(
                    int(min(np.searchsorted(cdfs[t, a], uloc[r, a, t], side="right"), inst.N - 1))
                    for a in range(A)
                )
            act, _ = policy.decide(SdpState(t, b, node, tuple(m), locs))
            b = b + act.b_ref - sum(act.m_ref)
            for a in range(A):
                y = m[a] + act.m_ref[a]
                D = int(dists[a][t].sample(u[r, a, t]))
                cost += inst.penalty * max(D - y, 0)
                m[a] = max(y - D, 0)
            if t < T - 1:
                cost += inst.graph.distance(node, act.b_loc_next)
                node = act.b_loc_next
        totals[r] = cost
    mean, ci, se = student_interval(totals)
    return PolicySimulation(mean, ci, se, totals)
