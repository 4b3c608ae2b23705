"""Monotone finite-difference solvers for the junction Hamilton-Jacobi models.

``solve_epsilon`` marches u_t + H(Du, x/eps, omega) = 0 with an explicit
Godunov (or Lax-Friedrichs) flux; ``solve_limit`` marches the deterministic
limit model with one effective Hamiltonian per half-line and the
flux-limited condition at the origin node:

    U0 <- U0 - dt * max(A, HbarL_plus((U0-U_-1)/dx), HbarR_minus((U1-U0)/dx)).

Both schemes are first-order monotone under the CFL restriction, so they
inherit a discrete comparison principle and non-increasing discrete
Lipschitz constants, which the solvers track step by step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .effective import EffectiveHamiltonian
from .environment import AssembledHamiltonian, PiecewiseLinearCore
from .errors import CFLViolation, ConfigError, InvalidLimiter, UnresolvedScale

__all__ = [
    "Grid1D",
    "SolutionField",
    "numerical_flux",
    "solve_epsilon",
    "solve_limit",
    "piecewise_linear_data",
]

MAX_CFL = 0.9


@dataclass(frozen=True)
class Grid1D:
    """Uniform spatial grid; carries the junction node index when x=0 is one."""

    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if self.nx < 3 or self.x_max <= self.x_min:
            raise ValueError("grid needs x_min < x_max and nx >= 3")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def xs(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def junction_index(self) -> Optional[int]:
        xs = self.xs
        i = int(np.argmin(np.abs(xs)))
        return i if abs(xs[i]) < 1e-9 * max(1.0, self.dx) else None

    @classmethod
    def make(cls, x_min: float, x_max: float, dx: float) -> "Grid1D":
        nx = int(round((x_max - x_min) / dx)) + 1
        return cls(x_min=x_min, x_max=x_max, nx=nx)

    @classmethod
    def symmetric(cls, half_width: float, dx: float) -> "Grid1D":
        """Grid on [-L, L] that always contains x = 0 as a node."""
        n = int(math.ceil(half_width / dx))
        return cls(x_min=-n * dx, x_max=n * dx, nx=2 * n + 1)


@dataclass(frozen=True)
class SolutionField:
    """Space-time values of one solve plus scheme diagnostics."""

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray
    cfl: float
    scheme: str
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def at_time(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.values[i]


def numerical_flux(core, p_left: float, p_right: float,
                   scheme: Literal["godunov", "lax_friedrichs"] = "godunov",
                   alpha: Optional[float] = None):
    """Numerical flux of a convex core minimised at 0.

    Godunov for this class is the max of the monotone parts,
    ``max(H+(p_left), H-(p_right))``: non-decreasing in the left slope,
    non-increasing in the right one, and consistent (flux(p, p) = H(p)).
    """
    if scheme == "godunov":
        return np.maximum(core.plus_part(p_left), core.minus_part(p_right))
    if scheme == "lax_friedrichs":
        a = core.lipschitz() if alpha is None else alpha
        p_left = np.asarray(p_left, dtype=float)
        p_right = np.asarray(p_right, dtype=float)
        return core.value(0.5 * (p_left + p_right)) - 0.5 * a * (p_right - p_left)
    raise ValueError(f"unknown scheme {scheme!r}")


def piecewise_linear_data(breakpoints: Sequence[Tuple[float, float]]) -> Callable:
    """Initial datum from sorted (x, u) breakpoints, linearly extended."""
    pts = sorted((float(x), float(u)) for x, u in breakpoints)
    xs = np.array([p[0] for p in pts])
    us = np.array([p[1] for p in pts])
    if len(xs) < 2:
        const = us[0] if len(us) else 0.0
        return lambda x: np.full_like(np.asarray(x, dtype=float), const)

    def u0(x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, xs, us)
        sl = (us[1] - us[0]) / (xs[1] - xs[0])
        sr = (us[-1] - us[-2]) / (xs[-1] - xs[-2])
        out = np.where(x < xs[0], us[0] + sl * (x - xs[0]), out)
        out = np.where(x > xs[-1], us[-1] + sr * (x - xs[-1]), out)
        return out

    return u0


def _one_sided_slopes(u: np.ndarray, dx: float) -> Tuple[np.ndarray, np.ndarray]:
    """Backward/forward slopes with linearly extrapolated ghost values."""
    d = np.diff(u) / dx
    a = np.concatenate(([d[0]], d))
    b = np.concatenate((d, [d[-1]]))
    return a, b


def _resolve_u0(u0, xs: np.ndarray) -> np.ndarray:
    if callable(u0):
        return np.asarray(u0(xs), dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != xs.shape:
        raise ValueError("initial data array does not match the grid")
    return u0.copy()


def _snapshot_times(T: float, store_times: Optional[Sequence[float]]) -> np.ndarray:
    if store_times is None:
        return np.linspace(0.0, T, 11)
    ts = np.asarray(sorted(set(float(t) for t in store_times)), dtype=float)
    if ts[0] > 0.0:
        ts = np.concatenate(([0.0], ts))
    if ts[-1] < T:
        ts = np.concatenate((ts, [T]))
    return ts


def _march(
    u: np.ndarray,
    dx: float,
    T: float,
    cfl: float,
    flux: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lipschitz_on_range: Callable[[float], float],
    snapshots: np.ndarray,
    barrier_constant: float,
) -> Tuple[np.ndarray, np.ndarray, Dict[str, float]]:
    """Shared explicit time loop; returns snapshot values and diagnostics."""
    u0 = u.copy()
    t = 0.0
    stored = [u.copy()]
    stored_t = [0.0]
    next_i = 1
    lip_prev = float(np.max(np.abs(np.diff(u)))) / dx if len(u) > 1 else 0.0
    max_lip_increase = 0.0
    max_barrier_ratio = 0.0
    while t < T - 1e-14:
        a, b = _one_sided_slopes(u, dx)
        pm = float(max(np.max(np.abs(a)), np.max(np.abs(b))))
        lip_h = max(lipschitz_on_range(pm), 1e-12)
        dt = cfl * dx / lip_h
        if next_i < len(snapshots):
            dt = min(dt, snapshots[next_i] - t)
        dt = min(dt, T - t)
        u = u - dt * flux(a, b)
        t += dt
        lip_now = float(np.max(np.abs(np.diff(u)))) / dx
        max_lip_increase = max(max_lip_increase, lip_now - lip_prev)
        lip_prev = lip_now
        if t > 0.0:
            ratio = float(np.max(np.abs(u - u0))) / t
            max_barrier_ratio = max(max_barrier_ratio, ratio)
        while next_i < len(snapshots) and t >= snapshots[next_i] - 1e-12:
            stored.append(u.copy())
            stored_t.append(t)
            next_i += 1
    diagnostics = {
        "barrier_constant": barrier_constant,
        "max_barrier_ratio": max_barrier_ratio,
        "max_lipschitz_increase": max_lip_increase,
    }
    return np.asarray(stored_t), np.stack(stored), diagnostics


def _range_lipschitz_pl(core: PiecewiseLinearCore, pm: float) -> float:
    slopes = core._slope_sequence()
    knots = core.knots
    lo = np.concatenate(([-np.inf], knots))
    hi = np.concatenate((knots, [np.inf]))
    mask = (hi >= -pm) & (lo <= pm)
    return float(np.max(np.abs(slopes[mask])))


def solve_epsilon(
    u0,
    eps: float,
    T: float,
    hamiltonian: AssembledHamiltonian,
    grid: Grid1D,
    cfl: float = MAX_CFL,
    scheme: Literal["godunov", "lax_friedrichs"] = "godunov",
    store_times: Optional[Sequence[float]] = None,
) -> SolutionField:
    """March the rescaled problem u_t + H(Du, x/eps, omega) = 0."""
    if cfl > MAX_CFL + 1e-12 or cfl <= 0.0:
        raise CFLViolation(f"cfl must lie in (0, {MAX_CFL}], got {cfl}")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if grid.dx > eps / 20.0 + 1e-15:
        raise UnresolvedScale(
            f"dx = {grid.dx:g} too coarse for the fast scale: need dx <= eps/20 = {eps / 20:g}"
        )
    xs = grid.xs
    ys = xs / eps
    u = _resolve_u0(u0, xs)
    lip0 = float(np.max(np.abs(np.diff(u)))) / grid.dx if grid.nx > 1 else 0.0
    lip_cap = float(np.max(hamiltonian.lipschitz_p(ys)))

    barrier_grid = np.linspace(-lip0 - 1e-9, lip0 + 1e-9, 33)
    barrier_constant = float(
        max(np.max(np.abs(hamiltonian.value(p, ys))) for p in barrier_grid)
    )

    if scheme == "godunov":
        def flux(a, b):
            return np.maximum(hamiltonian.plus_part(a, ys), hamiltonian.minus_part(b, ys))
    else:
        alpha = hamiltonian.lipschitz_p(ys)

        def flux(a, b):
            return hamiltonian.value(0.5 * (a + b), ys) - 0.5 * alpha * (b - a)

    def lip_range(pm: float) -> float:
        return min(lip_cap, _assembled_range_lip(hamiltonian, ys, pm))

    snapshots = _snapshot_times(T, store_times)
    times, values, diag = _march(u, grid.dx, T, cfl, flux, lip_range, snapshots, barrier_constant)
    return SolutionField(grid=grid, times=times, values=values, cfl=cfl,
                         scheme=scheme, diagnostics=diag)


def _assembled_range_lip(H: AssembledHamiltonian, ys: np.ndarray, pm: float) -> float:
    wmax_l = float(np.max(H.weights(ys)[0]))
    wmax_r = float(np.max(H.weights(ys)[1])) if H.junction_mode != "none" else 0.0

    def core_lip(core, pm):
        base = core.base if hasattr(core, "base") else core
        if isinstance(base, PiecewiseLinearCore):
            return _range_lipschitz_pl(base, pm)
        return 2.0 * pm + 1e-9  # quadratic
    lip = wmax_l * core_lip(H.core_left, pm)
    if H.junction_mode != "none":
        lip += wmax_r * core_lip(H.core_right, pm)
    return lip


def solve_limit(
    u0,
    eff_left: EffectiveHamiltonian,
    eff_right: EffectiveHamiltonian,
    a_bar: float,
    T: float,
    grid: Grid1D,
    cfl: float = MAX_CFL,
    scheme: Literal["godunov", "lax_friedrichs"] = "godunov",
    store_times: Optional[Sequence[float]] = None,
) -> SolutionField:
    """March the deterministic limit model with the flux-limited junction."""
    if cfl > MAX_CFL + 1e-12 or cfl <= 0.0:
        raise CFLViolation(f"cfl must lie in (0, {MAX_CFL}], got {cfl}")
    j0 = grid.junction_index
    if j0 is None:
        raise ConfigError("limit model requires the junction x = 0 to be a grid node")
    floor = max(eff_left.min_value(), eff_right.min_value())
    if a_bar < floor - 1e-9:
        raise InvalidLimiter(
            f"flux limiter {a_bar} below the admissible floor max of minima {floor}"
        )
    core_l = eff_left.as_core()
    core_r = eff_right.as_core()
    xs = grid.xs
    u = _resolve_u0(u0, xs)
    lip0 = float(np.max(np.abs(np.diff(u)))) / grid.dx
    ps = np.linspace(-lip0 - 1e-9, lip0 + 1e-9, 33)
    barrier_constant = float(max(
        np.max(np.abs(core_l.value(ps))), np.max(np.abs(core_r.value(ps))), abs(a_bar),
    ))
    left_mask = np.arange(grid.nx) <= j0
    right_mask = ~left_mask

    if scheme == "godunov":
        def interior(core, a, b):
            return np.maximum(core.plus_part(a), core.minus_part(b))
    else:
        def interior(core, a, b):
            return core.value(0.5 * (a + b)) - 0.5 * core.lipschitz() * (b - a)

    def flux(a, b):
        out = np.empty_like(a)
        out[left_mask] = interior(core_l, a[left_mask], b[left_mask])
        out[right_mask] = interior(core_r, a[right_mask], b[right_mask])
        out[j0] = max(a_bar,
                      float(core_l.plus_part(a[j0])),
                      float(core_r.minus_part(b[j0])))
        return out

    def lip_range(pm: float) -> float:
        return max(_range_lipschitz_pl(core_l, pm), _range_lipschitz_pl(core_r, pm))

    snapshots = _snapshot_times(T, store_times)
    times, values, diag = _march(u, grid.dx, T, cfl, flux, lip_range, snapshots, barrier_constant)
    return SolutionField(grid=grid, times=times, values=values, cfl=cfl,
                         scheme=scheme, diagnostics=diag)
