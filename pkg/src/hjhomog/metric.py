"""Metric problems on the line: maximal subsolutions of H(Dm, y, omega) = mu.

In one dimension the maximal Lipschitz subsolution vanishing at the base
point x has an exact representation through the level-mu branch roots
p^-(s) <= 0 <= p^+(s) of H(., s, omega):

    m_mu(y, x, omega) = integral_x^y p^+(s) ds          for y > x,
    m_mu(y, x, omega) = integral_y^x (-p^-(s)) ds        for y < x.

The integrand is piecewise smooth: constant off the bump transitions and
cutoff zones (where it is integrated exactly), and resolved by a composite
midpoint rule elsewhere.  A monotone Gauss-Seidel grid sweep provides an
independent discrete oracle for the same object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .environment import AssembledHamiltonian, sup_zero_level
from .errors import LevelBelowMinimum, LevelNotAdmissible, NonConvergence

__all__ = [
    "MetricQuery",
    "MetricProfile",
    "metric_value",
    "metric_profile",
    "metric_oracle",
    "reversed_metric",
    "subadditivity_check",
    "slope_envelope",
]

FINE_STEP = 0.02          # midpoint step inside bump/cutoff transitions
ADMISSIBILITY_MARGIN = 1e-8


@dataclass(frozen=True)
class MetricQuery:
    """A metric problem instance: level mu, base point x, environment."""

    hamiltonian: AssembledHamiltonian
    mu: float
    x: float = 0.0


@dataclass(frozen=True)
class MetricProfile:
    """Sampled metric solution with its certified slope envelope."""

    query: MetricQuery
    ys: np.ndarray
    values: np.ndarray
    l_mu: float
    L_mu: float


# ---------------------------------------------------------------------------
# breakpoints and quadrature nodes
# ---------------------------------------------------------------------------


def _merge_intervals(lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge possibly overlapping intervals into a disjoint sorted union."""
    if lo.size == 0:
        return lo, hi
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    running = np.maximum.accumulate(hi)
    new_group = np.concatenate(([True], lo[1:] > running[:-1]))
    starts = np.nonzero(new_group)[0]
    merged_hi = np.maximum.reduceat(hi, starts)
    return lo[starts], merged_hi


def _nonflat_union(H: AssembledHamiltonian, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Disjoint union of intervals in [a, b] where the weights of H vary."""
    los: List[np.ndarray] = []
    his: List[np.ndarray] = []
    if H.junction_mode == "wfl":
        los.append(np.array([-1.0]))
        his.append(np.array([1.0]))
    elif H.junction_mode == "eps":
        r = 1.0 / math.sqrt(float(H.eps))
        los.append(np.array([-2.0 * r, r]))
        his.append(np.array([-r, 2.0 * r]))
    for med in H.media():
        s = med.lattice_spacing
        ks = np.arange(int(np.floor(a / s + 0.5)) - 1, int(np.floor(b / s + 0.5)) + 2)
        ks = ks[med.mark(ks) != 0.0]
        if ks.size:
            c = med.cell_center(ks)
            pw, sw = med.bump.plateau_half_width, med.bump.support_half_width
            los.extend([c - sw, c + pw])
            his.extend([c - pw, c + sw])
    if not los:
        return np.empty(0), np.empty(0)
    lo = np.clip(np.concatenate(los), a, b)
    hi = np.clip(np.concatenate(his), a, b)
    keep = hi > lo
    return _merge_intervals(lo[keep], hi[keep])


def _quadrature_nodes(
    H: AssembledHamiltonian, a: float, b: float, extra: Sequence[float] = (),
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Midpoint nodes and weights for integrating a branch root over [a, b].

    Returns (nodes, weights, cuts): sorted nodes with their sub-interval
    widths, and the sorted segment boundaries.  Segments on which the
    coefficient functions are constant get a single exact node; the rest are
    resolved at step <= FINE_STEP.
    """
    zlo, zhi = _nonflat_union(H, a, b)
    extra = np.asarray(extra, dtype=float)
    extra = extra[(extra > a) & (extra < b)] if extra.size else extra
    cuts = np.unique(np.concatenate([[a, b], zlo, zhi, extra]))
    seg_lo, seg_hi = cuts[:-1], cuts[1:]
    mids = 0.5 * (seg_lo + seg_hi)
    if zlo.size:
        pos = np.searchsorted(zlo, mids, side="right") - 1
        inside = (pos >= 0) & (mids <= zhi[np.clip(pos, 0, len(zhi) - 1)])
    else:
        inside = np.zeros(mids.shape, dtype=bool)

    flat_nodes = mids[~inside]
    flat_weights = (seg_hi - seg_lo)[~inside]

    nf_lo = seg_lo[inside]
    nf_len = (seg_hi - seg_lo)[inside]
    if nf_lo.size:
        # at least two nodes so the rule never degenerates to a single
        # midpoint shared with coarser grid-based discretizations
        counts = np.maximum(np.ceil(nf_len / FINE_STEP).astype(np.int64), 2)
        total = int(counts.sum())
        seg_of = np.repeat(np.arange(len(nf_lo)), counts)
        first = np.concatenate(([0], np.cumsum(counts)[:-1]))
        within = np.arange(total) - np.repeat(first, counts)
        h = nf_len[seg_of] / counts[seg_of]
        nf_nodes = nf_lo[seg_of] + (within + 0.5) * h
        nf_weights = h
    else:
        nf_nodes = np.empty(0)
        nf_weights = np.empty(0)

    nodes = np.concatenate([flat_nodes, nf_nodes])
    weights = np.concatenate([flat_weights, nf_weights])
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order], cuts


def _check_admissible(query: MetricQuery, a: float, b: float) -> None:
    if a >= b:
        return
    sup0 = sup_zero_level(query.hamiltonian, a, b)
    if not (query.mu > sup0 + ADMISSIBILITY_MARGIN):
        raise LevelNotAdmissible(
            f"mu = {query.mu} must exceed sup H(0, . ) = {sup0} on [{a}, {b}] "
            f"by at least {ADMISSIBILITY_MARGIN}"
        )


# ---------------------------------------------------------------------------
# closed form
# ---------------------------------------------------------------------------


def metric_value(query: MetricQuery, y: float) -> float:
    """m_mu(y, x, omega) by exact piecewise quadrature of the branch roots."""
    x = query.x
    y = float(y)
    if y == x:
        return 0.0
    a, b = (x, y) if y > x else (y, x)
    _check_admissible(query, a, b)
    H = query.hamiltonian
    nodes, weights, _ = _quadrature_nodes(H, a, b)
    if y > x:
        roots = H.root_plus(query.mu, nodes)
        return float(np.dot(weights, roots))
    roots = H.root_minus(query.mu, nodes)
    return float(np.dot(weights, -roots))


def metric_profile(query: MetricQuery, ys: Sequence[float]) -> MetricProfile:
    """Evaluate the closed form at many points with one cumulative pass."""
    ys = np.asarray(ys, dtype=float)
    x = query.x
    a, b = min(float(np.min(ys)), x), max(float(np.max(ys)), x)
    _check_admissible(query, a, b)
    H = query.hamiltonian
    values = np.zeros_like(ys)

    for side in (+1, -1):
        sel = ys > x if side > 0 else ys < x
        if not np.any(sel):
            continue
        lo, hi = (x, b) if side > 0 else (a, x)
        nodes, weights, cuts = _quadrature_nodes(H, lo, hi, extra=ys[sel])
        roots = H.root_plus(query.mu, nodes) if side > 0 else -H.root_minus(query.mu, nodes)
        # integral attributed exactly per cut: every y in ys is itself a cut,
        # and nodes lie strictly inside segments, so counting nodes below a
        # cut is exact (no cumulative float-drift comparisons)
        contrib = np.concatenate(([0.0], np.cumsum(weights * roots)))
        at_cut = contrib[np.searchsorted(nodes, cuts, side="left")]
        pos = np.searchsorted(cuts, ys[sel])
        if side > 0:
            values[sel] = at_cut[pos]
        else:
            values[sel] = at_cut[-1] - at_cut[pos]

    l_mu, L_mu = slope_envelope(query, a, b)
    return MetricProfile(query=query, ys=ys, values=values, l_mu=l_mu, L_mu=L_mu)


def slope_envelope(query: MetricQuery, a: float, b: float) -> Tuple[float, float]:
    """(l_mu, L_mu): min/max over the range of min(p^+, -p^-) and max of them."""
    H = query.hamiltonian
    nodes, _, cuts = _quadrature_nodes(H, a, b)
    nodes = np.concatenate([nodes, cuts])
    p_plus = H.root_plus(query.mu, nodes)
    p_minus = H.root_minus(query.mu, nodes)
    lo = np.minimum(p_plus, -p_minus)
    hi = np.maximum(p_plus, -p_minus)
    return float(np.min(lo)), float(np.max(hi))


def reversed_metric(query: MetricQuery, y: float) -> float:
    """n_mu(y, x, omega) for the reversed Hamiltonian G(p, .) = H(-p, .).

    Satisfies n_mu(y, x) = m_mu(x, y); computed through the reversed
    Hamiltonian so the identity exercises an independent code path.
    """
    reversed_query = replace(query, hamiltonian=query.hamiltonian.reversed_in_p())
    return metric_value(reversed_query, y)


def subadditivity_check(query: MetricQuery, x: float, y: float, z: float) -> float:
    """Defect m(z, x) - m(z, y) - m(y, x), clamped at zero from below."""
    m_zx = metric_value(replace(query, x=x), z)
    m_zy = metric_value(replace(query, x=y), z)
    m_yx = metric_value(replace(query, x=x), y)
    return max(m_zx - m_zy - m_yx, 0.0)


# ---------------------------------------------------------------------------
# grid oracle
# ---------------------------------------------------------------------------


def metric_oracle(
    query: MetricQuery,
    grid: Sequence[float],
    tol: float = 1e-12,
    max_sweeps: int = 50,
) -> MetricProfile:
    """Discrete maximal subsolution by monotone alternating sweeps.

    Cell costs are cell-width times the extremal admissible slope sampled at
    the cell midpoint; the fixed point of

        m_i <- min over neighbours j of (m_j + one-sided cost)

    is reached by left-to-right / right-to-left passes (exact after one
    round trip in one dimension since costs are nonnegative).
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("oracle grid must be strictly increasing")
    ix = int(np.argmin(np.abs(grid - query.x)))
    if abs(grid[ix] - query.x) > 1e-9:
        raise ValueError("oracle grid must contain the base point x")
    H = query.hamiltonian
    mids = 0.5 * (grid[:-1] + grid[1:])
    widths = np.diff(grid)
    try:
        cost_right = widths * H.root_plus(query.mu, mids)
        cost_left = widths * (-H.root_minus(query.mu, mids))
    except LevelBelowMinimum as exc:
        raise LevelNotAdmissible(f"mu = {query.mu} inadmissible on the oracle grid: {exc}") from exc

    m = np.full(grid.shape, np.inf)
    m[ix] = 0.0
    c_r = np.concatenate(([0.0], np.cumsum(cost_right)))   # prefix sums, c_r[i] = cost 0..i
    c_l = np.concatenate(([0.0], np.cumsum(cost_left[::-1])))[::-1]
    for sweep in range(max_sweeps):
        previous = m.copy()
        # left-to-right: m_i = min_{j<=i} m_j + sum of rightward costs j..i
        m = np.minimum(m, c_r + np.minimum.accumulate(m - c_r))
        # right-to-left
        m = np.minimum(m, c_l + np.minimum.accumulate((m - c_l)[::-1])[::-1])
        if np.max(np.abs(previous - m)) < tol and np.all(np.isfinite(m)):
            break
    else:
        raise NonConvergence(
            "metric oracle sweeps failed to stabilise (mu too close to the admissible floor?)",
            mu=query.mu, sweeps=max_sweeps,
        )
    l_mu, L_mu = slope_envelope(query, float(grid[0]), float(grid[-1]))
    return MetricProfile(query=query, ys=grid, values=m, l_mu=l_mu, L_mu=L_mu)
