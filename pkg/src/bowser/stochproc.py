"""Discrete consumption distributions and first-order loss functions.

Every distribution lives on a finite nonnegative integer support ``0..K``.
The loss helpers accept real-valued arguments and evaluate the defining
sums directly, so no interpolation is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

PMF_TOL = 1e-9
TAIL_MASS = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability mass function on ``0..K``.

    Parameters
    ----------
    pmf : array_like
        Nonnegative masses indexed by the support value. Trailing zeros are
        trimmed so that equal distributions share one canonical array.
    """

    pmf: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("pmf must be nonempty")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pmf entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PMF_TOL:
            raise ValueError(f"pmf sums to {p.sum():.12g}, expected 1")
        nz = np.flatnonzero(p)
        p = p[: nz[-1] + 1].copy()
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    # construction helpers -------------------------------------------------
    @classmethod
    def point_mass(cls, k: int) -> "DiscreteDist":
        if k < 0 or int(k) != k:
            raise ValueError("point mass must sit on a nonnegative integer")
        p = np.zeros(int(k) + 1)
        p[-1] = 1.0
        return cls(p)

    @classmethod
    def from_pairs(cls, values: Sequence[int], probs: Sequence[float]) -> "DiscreteDist":
        values = np.asarray(values, dtype=int)
        if np.any(values < 0):
            raise ValueError("support must be nonnegative")
        p = np.zeros(values.max() + 1)
        np.add.at(p, values, np.asarray(probs, dtype=float))
        return cls(p)

    # summaries ------------------------------------------------------------
    @property
    def support_max(self) -> int:
        return self.pmf.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.pmf.size)

    @property
    def mean(self) -> float:
        return float(self.support @ self.pmf)

    @property
    def var(self) -> float:
        k = self.support
        return float((k - self.mean) ** 2 @ self.pmf)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def is_point_mass(self) -> bool:
        return np.count_nonzero(self.pmf) == 1

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniforms ``u`` in [0, 1)."""
        cdf = self.cdf()
        cdf[-1] = 1.0
        return np.searchsorted(cdf, u, side="right")

    def key(self) -> bytes:
        return self.pmf.tobytes()

    def __eq__(self, other):
        if not isinstance(other, DiscreteDist):
            return NotImplemented
        return self.pmf.shape == other.pmf.shape and bool(np.all(self.pmf == other.pmf))

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"DiscreteDist(K={self.support_max}, mean={self.mean:.6g})"


def _renormalized(p: np.ndarray) -> DiscreteDist:
    p = np.clip(p, 0.0, None)
    return DiscreteDist(p / p.sum())


def truncated_poisson(lam: float, cap: int) -> DiscreteDist:
    """Poisson(lam) restricted to ``0..cap`` and renormalized."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if cap < 1 or int(cap) != cap:
        raise ValueError("cap must be an integer >= 1")
    return _renormalized(stats.poisson.pmf(np.arange(int(cap) + 1), lam))


def poisson(lam: float, tail: float = TAIL_MASS) -> DiscreteDist:
    """Poisson(lam) cut where the remaining tail mass drops below ``tail``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0:
        return DiscreteDist.point_mass(0)
    cap = max(1, int(stats.poisson.isf(tail, lam)) + 1)
    return _renormalized(stats.poisson.pmf(np.arange(cap + 1), lam))


def compound_poisson(lam: float, jump: DiscreteDist, tail: float = TAIL_MASS) -> DiscreteDist:
    """Random sum of ``Poisson(lam)`` i.i.d. jumps, via the Panjer recursion.

    The support is extended until the accumulated mass reaches ``1 - tail``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    h = jump.pmf
    g = [float(np.exp(-lam * (1.0 - h[0])))]
    total = g[0]
    jmax = h.size - 1
    if jmax == 0:
        return DiscreteDist.point_mass(0)
    j = np.arange(1, jmax + 1)
    wh = j * h[1:]
    k = 0
    while total < 1.0 - tail:
        k += 1
        # sum_{i=1}^{min(k,J)} i h_i g_{k-i}
        idx = np.arange(1, min(k, jmax) + 1)
        gk = lam / k * float(wh[idx - 1] @ np.asarray(g)[k - idx])
        g.append(gk)
        total += gk
        if k > 100000:
            raise RuntimeError("compound Poisson support did not converge")
    return _renormalized(np.asarray(g))


def convolve(a: DiscreteDist, b: DiscreteDist) -> DiscreteDist:
    """Exact distribution of the sum of two independent variables."""
    return _renormalized(np.convolve(a.pmf, b.pmf))


def convolve_all(dists: Sequence[DiscreteDist]) -> DiscreteDist:
    out = DiscreteDist.point_mass(0)
    for d in dists:
        out = convolve(out, d)
    return out


def loss(d: DiscreteDist, Q) -> np.ndarray | float:
    """First-order loss ``E[max(D - Q, 0)]``."""
    q = np.asarray(Q, dtype=float)
    k = d.support
    val = np.maximum(k - q[..., None], 0.0) @ d.pmf
    return float(val) if val.ndim == 0 else val


def complementary_loss(d: DiscreteDist, Q) -> np.ndarray | float:
    """Complementary first-order loss ``E[max(Q - D, 0)]``."""
    q = np.asarray(Q, dtype=float)
    k = d.support
    val = np.maximum(q[..., None] - k, 0.0) @ d.pmf
    return float(val) if val.ndim == 0 else val


def cumulative_dists(per_period: Sequence[DiscreteDist]) -> list[DiscreteDist]:
    """Distributions of the partial sums ``D_1 + ... + D_t`` for every t."""
    out, acc = [], DiscreteDist.point_mass(0)
    for d in per_period:
        acc = convolve(acc, d)
        out.append(acc)
    return out


def lost_sales_loss(per_period: Sequence[DiscreteDist], t: int, Q: float) -> tuple[float, float]:
    """Period-``t`` expected shortage from initial stock ``Q``.

    Returns
    -------
    (backlog, lost_sales) : tuple of float
        ``backlog`` is the exact difference of cumulative losses, which is the
        per-period shortage when unmet demand carries over. ``lost_sales`` is
        the corrected estimate that lifts the argument by the expected shortage
        accumulated in earlier periods.
    """
    if not 1 <= t <= len(per_period):
        raise ValueError("t out of range")
    cum = cumulative_dists(per_period[:t])
    prev = loss(cum[t - 2], Q) if t > 1 else 0.0
    backlog = loss(cum[t - 1], Q) - prev
    lost = loss(cum[t - 1], Q + prev)
    return float(backlog), float(lost)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Convex max-of-affine function on ``[0, q_max]``.

    Attributes
    ----------
    segments : tuple of (slope, intercept)
        Sorted by increasing slope.
    q_max : float
        Right end of the domain of interest.
    tangent_points : tuple of float
        Abscissae where the approximation touches its target.
    """

    segments: tuple
    q_max: float
    tangent_points: tuple = field(default=())

    def __post_init__(self):
        if len(self.segments) < 1:
            raise ValueError("need at least one segment")

    def __call__(self, Q):
        q = np.asarray(Q, dtype=float)
        s = np.array([seg[0] for seg in self.segments])
        c = np.array([seg[1] for seg in self.segments])
        val = np.max(q[..., None] * s + c, axis=-1)
        return float(val) if val.ndim == 0 else val

    def shifted(self, dslope: float, dintercept: float) -> "PiecewiseLinear":
        segs = tuple((s + dslope, c + dintercept) for s, c in self.segments)
        return PiecewiseLinear(segs, self.q_max, self.tangent_points)


def _regions(d: DiscreteDist, segments: int) -> list[np.ndarray]:
    supp = np.flatnonzero(d.pmf)
    if supp.size <= segments:
        return [supp[i : i + 1] for i in range(supp.size)]
    before = (np.cumsum(d.pmf) - d.pmf)[supp]
    label = np.minimum(np.floor(before * segments + 1e-12).astype(int), segments - 1)
    return [supp[label == r] for r in np.unique(label)]


def linearize_complementary_loss(d: DiscreteDist, segments: int) -> PiecewiseLinear:
    """Lower-bounding piecewise-linear model of the complementary loss.

    The support is split into ``segments`` contiguous blocks of roughly equal
    probability. Block ``i`` contributes the affine function
    ``P_i * Q - E_i`` with ``P_i`` the cumulative probability and ``E_i`` the
    cumulative partial expectation of blocks ``1..i``; together with the zero
    function these lower-bound the target and touch it at each block's
    largest support point.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    pieces = [(0.0, 0.0)]
    tangents = [0.0]
    cp = ce = 0.0
    for blk in _regions(d, segments):
        cp += float(d.pmf[blk].sum())
        ce += float(blk @ d.pmf[blk])
        pieces.append((cp, -ce))
        tangents.append(float(blk[-1]))
    # the final slope is one up to rounding; pin it so that the loss model has slope 0
    pieces[-1] = (1.0, -d.mean)
    return PiecewiseLinear(tuple(pieces), float(d.support_max), tuple(tangents))


def linearize_loss(d: DiscreteDist, segments: int) -> PiecewiseLinear:
    """Matching model of the loss via ``loss = complementary - Q + mean``."""
    return linearize_complementary_loss(d, segments).shifted(-1.0, d.mean)


@dataclass(frozen=True)
class CompoundPoissonFit:
    lam: float
    jump_mean: float
    log_likelihood: float
    degenerate: bool = False
    n_samples: int = 0


def neyman_a_pmf(lam: float, mu: float, kmax: int) -> np.ndarray:
    """Pmf of compound Poisson(lam) with Poisson(mu) jumps on ``0..kmax``."""
    kk = np.arange(kmax + 1)
    h = stats.poisson.pmf(kk, mu)
    g = np.empty(kmax + 1)
    g[0] = np.exp(-lam * (1.0 - h[0]))
    wh = kk * h
    for k in range(1, kmax + 1):
        g[k] = lam / k * float(wh[1 : k + 1] @ g[k - 1 :: -1][:k])
    return g


def compound_poisson_loglik(counts: np.ndarray, lam: float, mu: float) -> float:
    g = neyman_a_pmf(lam, mu, counts.size - 1)
    with np.errstate(divide="ignore"):
        lg = np.log(g)
    m = counts > 0
    return float(counts[m] @ lg[m])


def fit_compound_poisson_mle(
    samples, lo: float = 1e-3, hi: float = 10.0, grid: int = 41, rounds: int = 3
) -> CompoundPoissonFit:
    """Maximum-likelihood fit of compound Poisson with Poisson jumps.

    A logarithmic grid over ``[lo, hi]`` for both parameters is searched and
    then zoomed ``rounds`` times around the incumbent; a Nelder-Mead pass
    polishes the grid optimum.
    """
    x = np.asarray(samples)
    if x.size < 30:
        raise ValueError("at least 30 samples are required")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise ValueError("samples must be nonnegative integers")
    x = x.astype(int)
    counts = np.bincount(x)
    if counts.size == 1:
        return CompoundPoissonFit(lo, lo, compound_poisson_loglik(counts, lo, lo), degenerate=True, n_samples=x.size)

    llo, lhi = np.log(lo), np.log(hi)
    step = (lhi - llo) / (grid - 1)
    axis_l = axis_m = np.linspace(llo, lhi, grid)
    best = (-np.inf, llo, llo)
    for r in range(rounds + 1):
        for a in axis_l:
            for b in axis_m:
                ll = compound_poisson_loglik(counts, np.exp(a), np.exp(b))
                if ll > best[0]:
                    best = (ll, a, b)
        if r == rounds:
            break
        _, a0, b0 = best
        axis_l = np.clip(np.linspace(a0 - step, a0 + step, 11), llo, lhi)
        axis_m = np.clip(np.linspace(b0 - step, b0 + step, 11), llo, lhi)
        step /= 5.0
    ll, a, b = best
    res = optimize.minimize(
        lambda p: -compound_poisson_loglik(counts, float(np.exp(p[0])), float(np.exp(p[1]))),
        [a, b], method="Nelder-Mead", options=dict(xatol=1e-9, fatol=1e-11),
    )
    if -res.fun > ll and llo <= min(res.x) and max(res.x) <= lhi:
        ll, a, b = -res.fun, res.x[0], res.x[1]
    return CompoundPoissonFit(float(np.exp(a)), float(np.exp(b)), float(ll), False, x.size)
