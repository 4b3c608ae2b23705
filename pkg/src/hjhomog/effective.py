"""Homogenized objects: effective Hamiltonians, flux limiter, correctors.

The deterministic effective Hamiltonian of a stationary piece is tabulated
in support-function form: for each level mu the interval of admissible
homogenized slopes [p_minus(mu), p_plus(mu)] is the long-window spatial
average of the pointwise branch roots,

    p_plus(mu)  = m_mu(t, 0, omega) / t  ->  max{p : Hbar(p) <= mu},

so the evaluator inverts nested intervals (exact for convex Hbar, linear
interpolation between tabulated levels).

The junction flux limiter is the smallest level admitting global Lipschitz
subsolutions, computable per realisation as sup_y H(0, y, omega); its
deterministic limit is max(mu*_L, mu*_R) for a convex splicing of the two
sides, and mu*_0 = C * mu*_L when a slowed-down middle Hamiltonian rules a
zone of radius 2/sqrt(eps).

Approximate correctors solve delta*v + H(Dv + p, y, omega) = 0 by damped
explicit marching with a Godunov flux; delta*v converges to minus the flux
limiter near the junction and the rescaled profile carries the junction
slopes at +-infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit, prange

from .environment import (
    AssembledHamiltonian,
    FixedRadiusSlowdown,
    PiecewiseLinearCore,
    RandomMedium,
    assemble_stationary,
    mu_star_exact,
    sup_zero_level,
)
from .errors import LevelBelowMinimum, NonConvergence
from .metric import MetricQuery, metric_value

__all__ = [
    "homogenized_slopes",
    "EffectiveHamiltonian",
    "build_effective",
    "mu_star",
    "FluxLimiterEstimate",
    "flux_limiter",
    "CorrectorResult",
    "corrector_solve",
    "CorrectorSlopeReport",
    "corrector_slopes",
    "junction_slope_interval",
    "default_mu_grid",
]


# ---------------------------------------------------------------------------
# homogenized slopes and effective tables
# ---------------------------------------------------------------------------


def homogenized_slopes(
    hamiltonian: AssembledHamiltonian, mu: float, t: float, x0: float = 0.0,
) -> Tuple[float, float]:
    """(p_plus, p_minus) estimates m_mu(+-t, x0)/(+-t) at window length t."""
    q = MetricQuery(hamiltonian=hamiltonian, mu=mu, x=x0)
    p_plus = metric_value(q, x0 + t) / t
    p_minus = metric_value(q, x0 - t) / (-t)
    return p_plus, p_minus


def default_mu_grid(mu_star_value: float, span: float = 5.0, levels: int = 40) -> np.ndarray:
    """Geometric level ladder hugging the flat bottom: mu* + [1e-3 .. span]."""
    return mu_star_value + np.geomspace(1e-3, span, levels)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Deterministic convex Hamiltonian as nested mu-level slope intervals."""

    mu_levels: np.ndarray
    p_minus: np.ndarray
    p_plus: np.ndarray
    mu_star: float
    window: float = math.nan
    n_seeds: int = 1
    spread: float = 0.0

    def __post_init__(self):
        mu = np.asarray(self.mu_levels, dtype=float)
        pm = np.asarray(self.p_minus, dtype=float)
        pp = np.asarray(self.p_plus, dtype=float)
        object.__setattr__(self, "mu_levels", mu)
        object.__setattr__(self, "p_minus", pm)
        object.__setattr__(self, "p_plus", pp)
        if np.any(np.diff(mu) <= 0.0):
            raise ValueError("mu levels must be strictly increasing")
        if np.any(np.diff(pp) < -1e-12) or np.any(np.diff(pm) > 1e-12):
            raise ValueError("slope intervals are not nested (window too short?)")
        if not (pm[0] <= 1e-12 and pp[0] >= -1e-12):
            raise ValueError("bottom interval must contain p = 0")
        object.__setattr__(self, "_core", self._build_core())

    def _build_core(self) -> PiecewiseLinearCore:
        knots = np.concatenate([self.p_minus[::-1], [0.0], self.p_plus])
        values = np.concatenate([self.mu_levels[::-1], [self.mu_levels[0]], self.mu_levels])
        order = np.argsort(knots, kind="stable")
        knots, values = knots[order], values[order]
        keep = np.concatenate(([True], np.diff(knots) > 1e-12))
        knots, values = knots[keep], values[keep]
        i0 = int(np.argmin(np.abs(knots)))
        knots[i0] = 0.0
        sl = ((self.mu_levels[-1] - self.mu_levels[-2])
              / (self.p_minus[-1] - self.p_minus[-2]))
        sr = ((self.mu_levels[-1] - self.mu_levels[-2])
              / (self.p_plus[-1] - self.p_plus[-2]))
        return PiecewiseLinearCore(knots=knots, values=values,
                                   slope_left=sl, slope_right=sr, label="effective")

    # -- evaluation (delegates to the piecewise-linear support form) -------

    def as_core(self) -> PiecewiseLinearCore:
        return self._core

    def value(self, p):
        return self._core.value(p)

    def plus_part(self, p):
        return self._core.plus_part(p)

    def minus_part(self, p):
        return self._core.minus_part(p)

    def min_value(self) -> float:
        return float(self.mu_levels[0])

    def level_set(self, mu: float) -> Tuple[float, float]:
        """Slope interval [p_minus, p_plus] at level mu (interpolated)."""
        if mu < self.mu_levels[0] - 1e-12:
            raise LevelBelowMinimum(f"mu below the tabulated bottom {self.mu_levels[0]}")
        mu = max(mu, float(self.mu_levels[0]))
        if mu <= self.mu_levels[-1]:
            return (float(np.interp(mu, self.mu_levels, self.p_minus)),
                    float(np.interp(mu, self.mu_levels, self.p_plus)))
        sl = (self.p_minus[-1] - self.p_minus[-2]) / (self.mu_levels[-1] - self.mu_levels[-2])
        sr = (self.p_plus[-1] - self.p_plus[-2]) / (self.mu_levels[-1] - self.mu_levels[-2])
        d = mu - self.mu_levels[-1]
        return (float(self.p_minus[-1] + sl * d), float(self.p_plus[-1] + sr * d))


def build_effective(
    core,
    media: Sequence[RandomMedium],
    mu_grid: Optional[np.ndarray] = None,
    t: float = 2000.0,
) -> EffectiveHamiltonian:
    """Tabulate the effective Hamiltonian of the stationary piece core*psi.

    Slope intervals are averaged over the supplied media realisations; the
    reported spread is the largest per-level standard deviation.
    """
    if not media:
        raise ValueError("need at least one medium realisation")
    ms = mu_star_exact(core, media[0])
    if mu_grid is None:
        mu_grid = default_mu_grid(ms)
    mu_grid = np.asarray(mu_grid, dtype=float)
    if np.any(mu_grid <= ms):
        raise ValueError("mu grid must lie strictly above mu*")
    pp = np.empty((len(media), len(mu_grid)))
    pm = np.empty_like(pp)
    for i, med in enumerate(media):
        ham = assemble_stationary(core, med)
        for j, mu in enumerate(mu_grid):
            pp[i, j], pm[i, j] = homogenized_slopes(ham, float(mu), t)
    spread = float(max(np.max(pp.std(axis=0)), np.max(pm.std(axis=0)))) if len(media) > 1 else 0.0
    return EffectiveHamiltonian(
        mu_levels=mu_grid, p_minus=pm.mean(axis=0), p_plus=pp.mean(axis=0),
        mu_star=ms, window=t, n_seeds=len(media), spread=spread,
    )


# ---------------------------------------------------------------------------
# mu* estimators
# ---------------------------------------------------------------------------


def mu_star(
    core,
    medium: RandomMedium,
    method: Literal["sup_window", "corrector"] = "sup_window",
    window: float = 1e4,
    delta: float = 1e-2,
    dx: float = 0.02,
) -> float:
    """Minimum of the effective Hamiltonian, by either estimator.

    ``sup_window``: sup over [-window/2, window/2] of H(0, y, omega)
    (constants are exact subsolutions at that level).  ``corrector``:
    -delta * v_delta(0) for the discounted corrector at p = 0.
    """
    ham = assemble_stationary(core, medium)
    if method == "sup_window":
        return sup_zero_level(ham, -window / 2.0, window / 2.0)
    if method == "corrector":
        half = 1.2 / delta
        res = corrector_solve(ham, delta=delta, domain=(-half, half), dx=dx)
        return -res.delta_v_at(0.0)
    raise ValueError(f"unknown mu_star method {method!r}")


# ---------------------------------------------------------------------------
# flux limiter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluxLimiterEstimate:
    """Per-seed smallest admissible levels and their deterministic limit."""

    regime: str
    window: float
    seeds: Tuple[int, ...]
    a_tilde: np.ndarray
    a_bar: float
    rel_tol: float = 0.02

    @property
    def failures(self) -> np.ndarray:
        scale = max(abs(self.a_bar), 1e-300)
        return np.abs(self.a_tilde - self.a_bar) > self.rel_tol * scale

    @property
    def failure_rate(self) -> float:
        return float(np.mean(self.failures))


def flux_limiter(
    factory: Callable[[int], Union[AssembledHamiltonian, FixedRadiusSlowdown]],
    seeds: Sequence[int],
    window: float,
    regime: str,
    a_bar: Optional[float] = None,
    rel_tol: float = 0.02,
) -> FluxLimiterEstimate:
    """Empirical flux limiter across seeds with its deterministic target.

    ``factory(seed)`` builds the junction Hamiltonian for one realisation.
    When ``a_bar`` is omitted it is derived from the regime: max of the two
    one-sided mu* for a convex splicing, the middle mu* for a slowdown.
    """
    values = []
    for seed in sorted(seeds):
        ham = factory(int(seed))
        if isinstance(ham, FixedRadiusSlowdown):
            values.append(ham.a_tilde())
        else:
            values.append(sup_zero_level(ham, -window / 2.0, window / 2.0))
    ham0 = factory(int(sorted(seeds)[0]))
    if a_bar is None:
        a_bar = deterministic_limiter(ham0)
    return FluxLimiterEstimate(
        regime=regime, window=window, seeds=tuple(sorted(int(s) for s in seeds)),
        a_tilde=np.asarray(values), a_bar=float(a_bar), rel_tol=rel_tol,
    )


def deterministic_limiter(ham: Union[AssembledHamiltonian, FixedRadiusSlowdown]) -> float:
    """Deterministic junction limiter implied by the assembly geometry."""
    if isinstance(ham, FixedRadiusSlowdown):
        raise ValueError("a fixed-radius slowdown has a genuinely random limiter")
    if ham.junction_mode == "wfl":
        left = mu_star_exact(ham.core_left, ham.medium_left)
        right = mu_star_exact(ham.core_right, ham.medium_right)
        return max(left, right)
    if ham.junction_mode == "eps":
        return float(ham.middle_scale) * mu_star_exact(ham.core_left, ham.medium_left)
    return mu_star_exact(ham.core_left, ham.medium_left)


# ---------------------------------------------------------------------------
# approximate correctors
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _pl_eval(p, row, knots, vals, sl, sr):
    nk = knots.shape[0]
    if p <= knots[0]:
        return vals[row, 0] + sl[row] * (p - knots[0])
    if p >= knots[nk - 1]:
        return vals[row, nk - 1] + sr[row] * (p - knots[nk - 1])
    j = 0
    while knots[j + 1] < p:
        j += 1
    w = (p - knots[j]) / (knots[j + 1] - knots[j])
    return vals[row, j] * (1.0 - w) + vals[row, j + 1] * w


@njit(cache=True, parallel=True, fastmath=True)
def _corrector_march(v0, knots, vals, sl, sr, dx, dt, delta, p_shift,
                     tol, max_steps, barrier, check_every):
    nx = v0.shape[0]
    v = v0.copy()
    vn = np.empty(nx)
    resid_buf = np.empty(nx)
    bar_buf = np.zeros(nx)   # running per-node max of |delta*v|, all iterations
    steps = 0
    resid = np.inf
    while steps < max_steps:
        for i in prange(nx):
            vm = v[i - 1] if i > 0 else 2.0 * v[0] - v[1]
            vp = v[i + 1] if i < nx - 1 else 2.0 * v[nx - 1] - v[nx - 2]
            qa = (v[i] - vm) / dx + p_shift
            qb = (vp - v[i]) / dx + p_shift
            fa = _pl_eval(max(qa, 0.0), i, knots, vals, sl, sr)
            fb = _pl_eval(min(qb, 0.0), i, knots, vals, sl, sr)
            f = fa if fa > fb else fb
            r = delta * v[i] + f
            resid_buf[i] = abs(r)
            w = v[i] - dt * r
            vn[i] = w
            aw = abs(delta * w)
            if aw > bar_buf[i]:
                bar_buf[i] = aw
        tmp = v
        v = vn
        vn = tmp
        steps += 1
        # residual decays geometrically; checking every few steps only
        # overshoots the stopping time by at most check_every steps
        if steps % check_every == 0 or steps == max_steps:
            rmax = 0.0
            for i in range(nx):
                if resid_buf[i] > rmax:
                    rmax = resid_buf[i]
            resid = rmax
            if rmax < tol:
                break
    barrier_excess = bar_buf.max() - barrier
    return v, steps, resid, barrier_excess


@dataclass(frozen=True)
class CorrectorResult:
    """Steady state of delta*v + H(Dv + p_shift, y, omega) = 0 on a grid."""

    ys: np.ndarray
    values: np.ndarray
    delta: float
    p_shift: float
    residual: float
    steps: int
    barrier: float
    barrier_excess: float

    def value_at(self, y) -> np.ndarray:
        return np.interp(np.asarray(y, dtype=float), self.ys, self.values)

    def delta_v_at(self, y):
        return self.delta * self.value_at(y)

    def rescaled(self) -> Tuple[np.ndarray, np.ndarray]:
        """(z, w) with z = delta*y and w = delta*(v(y) - v(0)); w(0) = 0."""
        v0 = float(self.value_at(0.0))
        return self.delta * self.ys, self.delta * (self.values - v0)

    def lipschitz_measured(self) -> float:
        dy = np.diff(self.ys)
        return float(np.max(np.abs(np.diff(self.values)) / dy))


def corrector_solve(
    hamiltonian: AssembledHamiltonian,
    delta: float,
    domain: Tuple[float, float],
    dx: float,
    p_shift: float = 0.0,
    cfl: float = 0.9,
    residual_scale: float = 1e-10,
    v_init: Optional[np.ndarray] = None,
    max_steps: Optional[int] = None,
) -> CorrectorResult:
    """Damped explicit Godunov marching to the discounted steady state.

    Iterates w <- w - dt*(delta*w + F(Dw + p_shift, y)) under CFL until the
    max residual drops below ``residual_scale * delta``; boundary closure is
    one-sided extrapolation (outgoing characteristics under coercivity).
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    lo, hi = domain
    n = int(round((hi - lo) / dx))
    ys = lo + dx * np.arange(n + 1)
    pl = hamiltonian._pl_cores()
    if pl is None:
        raise ValueError("corrector solver requires piecewise-linear cores")
    knots, vals_l, vals_r, _, _ = pl
    w_l, w_r = hamiltonian.weights(ys)
    vals = w_l[:, None] * vals_l[None, :] + w_r[:, None] * vals_r[None, :]
    sl = hamiltonian._end_slope(w_l, w_r, -1)
    sr = hamiltonian._end_slope(w_l, w_r, +1)
    h_at_shift = np.asarray(hamiltonian.value(p_shift, ys), dtype=float)
    barrier = float(np.max(np.abs(h_at_shift)))
    lip = float(np.max(hamiltonian.lipschitz_p(ys)))
    dt = cfl * dx / max(lip, 1e-12)
    if v_init is None:
        v = np.full(ys.shape, -float(np.mean(h_at_shift)) / delta)
    else:
        v = np.array(v_init, dtype=float)
        if v.shape != ys.shape:
            raise ValueError("v_init shape mismatch")
    tol = residual_scale * delta
    if max_steps is None:
        r0 = max(float(np.max(np.abs(delta * v + h_at_shift))), 1.0)
        horizon = math.log(r0 / tol) / delta
        max_steps = int(1.5 * horizon / dt) + 20000
    v_out, steps, resid, excess = _corrector_march(
        v, knots, vals, sl, sr, float(dx), float(dt), float(delta),
        float(p_shift), float(tol), int(max_steps), barrier, 16,
    )
    if resid >= tol:
        raise NonConvergence(
            "corrector marching stalled", delta=delta, cfl=cfl,
            residual=resid, steps=float(steps),
        )
    return CorrectorResult(
        ys=ys, values=v_out, delta=delta, p_shift=p_shift, residual=float(resid),
        steps=int(steps), barrier=barrier, barrier_excess=float(excess),
    )


# ---------------------------------------------------------------------------
# junction slopes of the rescaled corrector
# ---------------------------------------------------------------------------


def junction_slope_interval(
    eff: EffectiveHamiltonian, a_bar: float, side: Literal["left", "right"],
    tol: float = 1e-9,
) -> Tuple[float, float]:
    """Admissible one-sided slopes {p : Hbar(p) = a_bar} on the given side.

    Strict limitation (a_bar above the minimum) pins a single root; at the
    minimum the whole flat bottom on that side is admissible.
    """
    pm, pp = eff.level_set(a_bar)
    if a_bar > eff.min_value() + tol:
        return (pp, pp) if side == "right" else (pm, pm)
    if side == "right":
        return (max(pm, 0.0), pp)
    return (pm, min(pp, 0.0))


@dataclass(frozen=True)
class CorrectorSlopeReport:
    """Measured rescaled-corrector slopes versus the admissible intervals."""

    right_slope: float
    left_slope: float
    right_interval: Tuple[float, float]
    left_interval: Tuple[float, float]
    origin_error: float          # |delta*v(0) + a_bar|
    gamma: float
    lower_bound_constant: float  # fitted C in  v(y+h)-v(y) >= (p - gamma) h - C
    fit_window: Tuple[float, float]

    def within(self, tol: float = 0.05) -> bool:
        r_lo, r_hi = self.right_interval
        l_lo, l_hi = self.left_interval
        return (r_lo - tol <= self.right_slope <= r_hi + tol
                and l_lo - tol <= self.left_slope <= l_hi + tol)


def _ls_slope(ys: np.ndarray, vs: np.ndarray) -> float:
    yc = ys - ys.mean()
    return float(np.dot(yc, vs - vs.mean()) / np.dot(yc, yc))


def corrector_slopes(
    result: CorrectorResult,
    a_bar: float,
    eff_left: EffectiveHamiltonian,
    eff_right: EffectiveHamiltonian,
    fit_window: Tuple[float, float],
    gamma: float = 0.05,
) -> CorrectorSlopeReport:
    """Least-squares slopes of v over +-[fit_lo, fit_hi] against the targets.

    Also fits the additive constant of the one-sided lower bound
    v(y+h) - v(y) >= (p_target - gamma) h - C over the right window.
    """
    lo, hi = fit_window
    if not (0.0 <= lo < hi):
        raise ValueError("fit window must satisfy 0 <= lo < hi")
    ys, vs = result.ys, result.values
    right = (ys >= lo) & (ys <= hi)
    left = (ys <= -lo) & (ys >= -hi)
    if right.sum() < 4 or left.sum() < 4:
        raise ValueError("fit window contains too few grid points")
    right_slope = _ls_slope(ys[right], vs[right])
    left_slope = _ls_slope(ys[left], vs[left])
    r_int = junction_slope_interval(eff_right, a_bar, "right")
    l_int = junction_slope_interval(eff_left, a_bar, "left")
    target = r_int[0]
    g = (target - gamma) * ys[right] - vs[right]
    c_fit = float(np.max(g) - np.min(g))
    return CorrectorSlopeReport(
        right_slope=right_slope, left_slope=left_slope,
        right_interval=r_int, left_interval=l_int,
        origin_error=float(abs(result.delta_v_at(0.0) + a_bar)),
        gamma=gamma, lower_bound_constant=c_fit, fit_window=(lo, hi),
    )
