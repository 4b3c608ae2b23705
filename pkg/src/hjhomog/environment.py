"""Random media and Hamiltonians on the line with a junction perturbation.

The random environment is a lattice of i.i.d. marks (one mark per cell of
width ``lattice_spacing``), turned into a positive Lipschitz multiplier

    psi(y, omega) = 1 + bump(y - s*k) * X_k(omega)      on cell k,

with a compactly supported bump of negative depth.  Marks are realised
lazily through a counter-based hash of (seed, cell index), so evaluation is
O(1) at any cell, bit-reproducible, and the translation action is an exact
relabelling of indices.

Hamiltonians come in three flavours:

* convex piecewise-linear cores (the traffic family ``H*(p)`` built from a
  piecewise-linear velocity curve collapses to piecewise-linear in p, and
  ``|p|`` is a special case),
* an analytic quadratic core ``p**2 + c``,
* assembled junction Hamiltonians mixing a left and a right stationary
  piece through smooth cutoffs, either over a fixed transition zone (mode
  ``"wfl"``) or through a slowed-down middle Hamiltonian ``C*H_L`` over a
  zone of radius ``2/sqrt(eps)`` (mode ``"eps"``).

All evaluators are vectorised over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import LevelBelowMinimum

__all__ = [
    "BumpProfile",
    "MarkDistribution",
    "RandomMedium",
    "VelocityCurve",
    "PiecewiseLinearCore",
    "QuadraticCore",
    "traffic_core",
    "abs_core",
    "quadratic_core",
    "CutoffProfile",
    "AssembledHamiltonian",
    "assemble_wfl",
    "assemble_eps",
    "assemble_stationary",
    "FixedRadiusSlowdown",
    "sup_zero_level",
    "mu_star_exact",
]

_U64 = np.uint64


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; maps uint64 -> well-mixed uint64 (wraparound intended)."""
    with np.errstate(over="ignore"):
        z = (x + _U64(0x9E3779B97F4A7C15)).astype(_U64)
        z ^= z >> _U64(30)
        z = (z * _U64(0xBF58476D1CE4E5B9)).astype(_U64)
        z ^= z >> _U64(27)
        z = (z * _U64(0x94D049BB133111EB)).astype(_U64)
        z ^= z >> _U64(31)
    return z


def _hash_uniform(seed: int, k: np.ndarray) -> np.ndarray:
    """Uniform(0,1) variate addressed by lattice index k (vectorised)."""
    kk = np.asarray(k, dtype=np.int64).astype(_U64)
    base = _splitmix64(np.array(seed, dtype=np.uint64))
    bits = _splitmix64(kk ^ base)
    return (bits >> _U64(11)).astype(np.float64) * (1.0 / (1 << 53))


def smoothstep(t: np.ndarray, degree: int = 5) -> np.ndarray:
    """Polynomial smoothstep on [0,1], clamped outside; degree 3 or 5."""
    t = np.clip(t, 0.0, 1.0)
    if degree == 3:
        return t * t * (3.0 - 2.0 * t)
    if degree == 5:
        return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    raise ValueError(f"unsupported smoothstep degree {degree} (use 3 or 5)")


# ---------------------------------------------------------------------------
# Random medium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpProfile:
    """Compactly supported bump: depth on a plateau, smooth decay to zero.

    ``value(y) = depth`` for ``|y| <= plateau_half_width``, 0 for
    ``|y| >= support_half_width``, with a C^2 monotone transition between.
    """

    plateau_half_width: float = 0.25
    support_half_width: float = 0.45
    depth: float = -0.5
    smoothstep_degree: int = 5

    def __post_init__(self):
        if not (-1.0 < self.depth < 0.0):
            raise ValueError(f"bump depth must lie in (-1, 0), got {self.depth}")
        if not (0.0 < self.plateau_half_width < self.support_half_width):
            raise ValueError("bump requires 0 < plateau_half_width < support_half_width")

    def value(self, y):
        y = np.abs(np.asarray(y, dtype=float))
        t = (y - self.plateau_half_width) / (self.support_half_width - self.plateau_half_width)
        return self.depth * (1.0 - smoothstep(t, self.smoothstep_degree))


def paper_bump(depth: float = -0.5) -> BumpProfile:
    """Bump with plateau 1/2 and support 3/4 (wider than the strict default)."""
    return BumpProfile(plateau_half_width=0.5, support_half_width=0.75, depth=depth)


@dataclass(frozen=True)
class MarkDistribution:
    """Law of the i.i.d. cell marks X_k, either bernoulli(q) or uniform(lo, hi).

    For the Bernoulli law, ``q`` is the probability of mark 1 (bump active).
    """

    kind: Literal["bernoulli", "uniform"] = "bernoulli"
    q: float = 0.5
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "bernoulli":
            if not (0.0 <= self.q <= 1.0):
                raise ValueError(f"bernoulli probability must lie in [0,1], got {self.q}")
        elif self.kind == "uniform":
            if not (0.0 <= self.lo <= self.hi <= 1.0):
                raise ValueError("uniform marks require 0 <= lo <= hi <= 1")
        else:
            raise ValueError(f"unknown mark distribution {self.kind!r}")

    def sample(self, seed: int, k) -> np.ndarray:
        u = _hash_uniform(seed, k)
        if self.kind == "bernoulli":
            return (u < self.q).astype(float)
        return self.lo + (self.hi - self.lo) * u

    @property
    def max_mark(self) -> float:
        """Essential supremum of the mark (attained along the lattice a.s.)."""
        if self.kind == "bernoulli":
            return 1.0 if self.q > 0.0 else 0.0
        return self.hi


@dataclass(frozen=True)
class RandomMedium:
    """One realisation of the lattice-bump multiplier psi(., omega).

    Immutable; ``shifted(m)`` returns the medium seen from ``y + m*spacing``,
    which relabels marks exactly (``psi(y + m*s, self) == psi(y, shifted)``).
    """

    seed: int = 0
    distribution: MarkDistribution = field(default_factory=MarkDistribution)
    lattice_spacing: float = 2.0
    bump: BumpProfile = field(default_factory=BumpProfile)
    base_level: float = 1.0
    index_offset: int = 0

    def __post_init__(self):
        if self.bump.support_half_width >= self.lattice_spacing / 2.0:
            raise ValueError(
                "bump support overlaps adjacent cells: require "
                f"support_half_width < lattice_spacing/2 = {self.lattice_spacing / 2}"
            )
        worst = self.base_level + self.bump.depth * self.distribution.max_mark
        if worst <= 0.0:
            raise ValueError("psi must stay positive: base_level + depth*max_mark <= 0")

    # -- marks ---------------------------------------------------------

    def mark(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64) + self.index_offset
        return self.distribution.sample(self.seed, k)

    def cell_index(self, y) -> np.ndarray:
        s = self.lattice_spacing
        return np.floor(np.asarray(y, dtype=float) / s + 0.5).astype(np.int64)

    def cell_center(self, k) -> np.ndarray:
        return np.asarray(k, dtype=float) * self.lattice_spacing

    def shifted(self, m: int) -> "RandomMedium":
        return replace(self, index_offset=self.index_offset + m)

    # -- field ----------------------------------------------------------

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        k = self.cell_index(y)
        local = y - self.cell_center(k)
        return self.base_level + self.bump.value(local) * self.mark(k)

    def psi_extreme_in_cell(self, k) -> np.ndarray:
        """min over the cell of psi (depth < 0 puts the minimum on the plateau)."""
        return self.base_level + self.bump.depth * self.mark(k)

    def psi_bounds(self) -> Tuple[float, float]:
        lo = self.base_level + self.bump.depth * self.distribution.max_mark
        return lo, self.base_level

    def lipschitz_psi(self) -> float:
        width = self.bump.support_half_width - self.bump.plateau_half_width
        # quintic smoothstep has max slope 1.875 on [0,1]
        peak = 1.875 if self.bump.smoothstep_degree == 5 else 1.5
        return abs(self.bump.depth) * self.distribution.max_mark * peak / width


def sample_medium(
    seed: int,
    distribution: Optional[MarkDistribution] = None,
    lattice_spacing: float = 2.0,
    bump: Optional[BumpProfile] = None,
    base_level: float = 1.0,
) -> RandomMedium:
    """Construct a reproducible medium; validates all parameters."""
    return RandomMedium(
        seed=seed,
        distribution=distribution or MarkDistribution(),
        lattice_spacing=lattice_spacing,
        bump=bump or BumpProfile(),
        base_level=base_level,
    )


def constant_medium(seed: int = 0) -> RandomMedium:
    """Medium with psi identically equal to base_level (all marks zero)."""
    return sample_medium(seed, distribution=MarkDistribution(kind="bernoulli", q=0.0))


# ---------------------------------------------------------------------------
# Hamiltonian cores
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VelocityCurve:
    """Non-decreasing piecewise-linear velocity law V(h) with a jam threshold.

    V vanishes for h <= h0, rises along ``breakpoints`` and saturates at
    vmax.  The reference slope ``p_tilde`` is the minimiser of
    ``p * V(-1/p)`` on [-1/h0, 0) (computed on a grid and polished); the
    unimodality of that map is validated numerically at construction.
    """

    h0: float = 1.0
    vmax: float = 1.0
    breakpoints: Tuple[Tuple[float, float], ...] = ()
    p_tilde: float = field(default=math.nan)

    def __post_init__(self):
        if self.h0 <= 0.0 or self.vmax <= 0.0:
            raise ValueError("velocity curve requires h0 > 0 and vmax > 0")
        pts = self.breakpoints or ((self.h0, 0.0), (self.h0 + self.vmax, self.vmax))
        pts = tuple((float(h), float(v)) for h, v in pts)
        hs = [h for h, _ in pts]
        vs = [v for _, v in pts]
        if sorted(hs) != hs or any(b < a for a, b in zip(vs, vs[1:])):
            raise ValueError("velocity breakpoints must be sorted with non-decreasing speeds")
        if abs(pts[0][1]) > 1e-14 or abs(pts[0][0] - self.h0) > 1e-14:
            raise ValueError("first velocity breakpoint must be (h0, 0)")
        if abs(pts[-1][1] - self.vmax) > 1e-12:
            raise ValueError("last velocity breakpoint must reach vmax")
        object.__setattr__(self, "breakpoints", pts)
        if math.isnan(self.p_tilde):
            object.__setattr__(self, "p_tilde", self._minimize_profile())
        self._validate_unimodal()

    def value(self, h):
        h = np.asarray(h, dtype=float)
        hs = np.array([p[0] for p in self.breakpoints])
        vs = np.array([p[1] for p in self.breakpoints])
        return np.interp(h, hs, vs)

    def _profile(self, p):
        # p * V(-1/p) on [-1/h0, 0); continuous, -> 0 at both ends
        p = np.asarray(p, dtype=float)
        out = np.where(p < 0.0, p * self.value(-1.0 / np.where(p < 0.0, p, -1.0)), 0.0)
        return out

    def _minimize_profile(self) -> float:
        lo, hi = -1.0 / self.h0, -1e-9
        grid = np.linspace(lo, hi, 4001)
        vals = self._profile(grid)
        i = int(np.argmin(vals))
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, len(grid) - 1)]
        res = minimize_scalar(
            lambda p: float(self._profile(p)), bounds=(a, b), method="bounded",
            options={"xatol": 1e-13},
        )
        best = float(res.x)
        # the profile is piecewise affine in p, so the true minimiser is a
        # breakpoint -1/h_j; snap when one is at least as good nearby
        for h, _ in self.breakpoints:
            cand = -1.0 / h
            if lo <= cand < 0.0 and abs(cand - best) < 1e-5:
                if float(self._profile(cand)) <= float(self._profile(best)) + 1e-15:
                    best = cand
        return best

    def _validate_unimodal(self):
        grid = np.linspace(-1.0 / self.h0, -1e-9, 2001)
        vals = self._profile(grid)
        i = int(np.argmin(vals))
        tol = 1e-10
        if np.any(np.diff(vals[: i + 1]) > tol) or np.any(np.diff(vals[i:]) < -tol):
            raise ValueError("p * V(-1/p) is not non-increasing then non-decreasing")


@dataclass(frozen=True)
class PiecewiseLinearCore:
    """Convex piecewise-linear Hamiltonian core, coercive, minimised at p = 0.

    ``knots`` always contain 0.  Branch roots (largest/smallest p at a given
    level) are exact piecewise inversions, which keeps the metric machinery
    quadrature-exact on flat segments.
    """

    knots: np.ndarray
    values: np.ndarray
    slope_left: float
    slope_right: float
    label: str = "pl"

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        if knots.ndim != 1 or knots.shape != values.shape:
            raise ValueError("knots/values must be matching 1d arrays")
        if np.any(np.diff(knots) <= 0.0):
            raise ValueError("knots must be strictly increasing")
        slopes = self._slope_sequence()
        if np.any(np.diff(slopes) < -1e-11):
            raise ValueError("core is not convex: slopes must be non-decreasing")
        if not (self.slope_left < 0.0 < self.slope_right):
            raise ValueError("core is not coercive: end slopes must straddle 0")
        i0 = int(np.searchsorted(knots, 0.0))
        if i0 >= len(knots) or abs(knots[i0]) > 1e-12:
            raise ValueError("core must carry a knot at p = 0")
        object.__setattr__(self, "_i0", i0)
        if values[i0] - 1e-12 > float(np.min(values)):
            raise ValueError("core must attain its minimum at p = 0")

    def _slope_sequence(self) -> np.ndarray:
        interior = np.diff(self.values) / np.diff(self.knots) if len(self.knots) > 1 else np.empty(0)
        return np.concatenate(([self.slope_left], interior, [self.slope_right]))

    # -- evaluation ------------------------------------------------------

    def value(self, p):
        p = np.asarray(p, dtype=float)
        out = np.interp(p, self.knots, self.values)
        left = p < self.knots[0]
        right = p > self.knots[-1]
        out = np.where(left, self.values[0] + self.slope_left * (p - self.knots[0]), out)
        out = np.where(right, self.values[-1] + self.slope_right * (p - self.knots[-1]), out)
        return out

    def min_value(self) -> float:
        return float(self.values[self._i0])

    def value_at_zero(self) -> float:
        return self.min_value()

    def plus_part(self, p):
        return self.value(np.maximum(np.asarray(p, dtype=float), 0.0))

    def minus_part(self, p):
        return self.value(np.minimum(np.asarray(p, dtype=float), 0.0))

    def lipschitz(self) -> float:
        return float(np.max(np.abs(self._slope_sequence())))

    # -- branch roots -----------------------------------------------------

    def root_plus(self, level):
        """max{p : H(p) <= level}; exact piecewise inversion (vectorised)."""
        level = np.asarray(level, dtype=float)
        kp = self.knots[self._i0:]
        vp = self.values[self._i0:]
        if np.any(level < vp[0] - 1e-12):
            raise LevelBelowMinimum(f"level below min {vp[0]}")
        level = np.maximum(level, vp[0])
        out = kp[-1] + (level - vp[-1]) / self.slope_right
        for j in range(len(kp) - 1):
            lo, hi = vp[j], vp[j + 1]
            seg = (level >= lo) & (level < hi)
            if np.any(seg):
                slope = (hi - lo) / (kp[j + 1] - kp[j])
                out = np.where(seg, kp[j] + (level - lo) / slope, out)
        return out

    def root_minus(self, level):
        """min{p : H(p) <= level} (vectorised)."""
        level = np.asarray(level, dtype=float)
        km = self.knots[: self._i0 + 1][::-1]
        vm = self.values[: self._i0 + 1][::-1]
        if np.any(level < vm[0] - 1e-12):
            raise LevelBelowMinimum(f"level below min {vm[0]}")
        level = np.maximum(level, vm[0])
        out = km[-1] + (level - vm[-1]) / self.slope_left
        for j in range(len(km) - 1):
            lo, hi = vm[j], vm[j + 1]
            seg = (level >= lo) & (level < hi)
            if np.any(seg):
                slope = (hi - lo) / (km[j + 1] - km[j])
                out = np.where(seg, km[j] + (level - lo) / slope, out)
        return out

    def mirrored(self) -> "MirroredCore":
        return MirroredCore(self)

    def h2_constants(self) -> Tuple[float, float, float]:
        """(c0, C0, gamma) with -c0|p+gamma| <= H(p) <= C0|p+gamma| on the line."""
        a = self.lipschitz()
        vmax = float(np.max(np.abs(self.values)))
        pmax = float(np.max(np.abs(self.knots)))
        gamma = pmax + vmax / a + 1.0
        c0 = a + vmax
        C0 = a + vmax
        return c0, C0, gamma


class MirroredCore:
    """View of a core under p -> -p; roots are exact negations of the original."""

    def __init__(self, base):
        self.base = base
        self.label = f"mirror({getattr(base, 'label', '?')})"

    def value(self, p):
        return self.base.value(-np.asarray(p, dtype=float))

    def min_value(self) -> float:
        return self.base.min_value()

    def value_at_zero(self) -> float:
        return self.base.value_at_zero()

    def plus_part(self, p):
        return self.value(np.maximum(np.asarray(p, dtype=float), 0.0))

    def minus_part(self, p):
        return self.value(np.minimum(np.asarray(p, dtype=float), 0.0))

    def lipschitz(self) -> float:
        return self.base.lipschitz()

    def root_plus(self, level):
        return -self.base.root_minus(level)

    def root_minus(self, level):
        return -self.base.root_plus(level)

    def mirrored(self):
        return self.base

    def h2_constants(self):
        return self.base.h2_constants()


@dataclass(frozen=True)
class QuadraticCore:
    """Analytic core H(p) = p**2 + offset."""

    offset: float = 0.0
    label: str = "quadratic"

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return p * p + self.offset

    def min_value(self) -> float:
        return self.offset

    def value_at_zero(self) -> float:
        return self.offset

    def plus_part(self, p):
        return self.value(np.maximum(np.asarray(p, dtype=float), 0.0))

    def minus_part(self, p):
        return self.value(np.minimum(np.asarray(p, dtype=float), 0.0))

    def lipschitz(self, p_range: float = 10.0) -> float:
        return 2.0 * p_range

    def root_plus(self, level):
        level = np.asarray(level, dtype=float)
        if np.any(level < self.offset - 1e-12):
            raise LevelBelowMinimum(f"level below min {self.offset}")
        return np.sqrt(np.maximum(level - self.offset, 0.0))

    def root_minus(self, level):
        return -self.root_plus(level)

    def mirrored(self) -> "QuadraticCore":
        return self

    def h2_constants(self, p_range: float = 10.0) -> Tuple[float, float, float]:
        a = 2.0 * p_range
        gamma = 1.0 + abs(self.offset)
        return a + abs(self.offset), a + abs(self.offset), gamma


def abs_core() -> PiecewiseLinearCore:
    """H(p) = |p|."""
    return PiecewiseLinearCore(
        knots=np.array([0.0]), values=np.array([0.0]),
        slope_left=-1.0, slope_right=1.0, label="abs",
    )


def quadratic_core(offset: float = 0.0) -> QuadraticCore:
    return QuadraticCore(offset=offset)


def traffic_core(curve: Optional[VelocityCurve] = None) -> PiecewiseLinearCore:
    """Traffic-flow core built from a piecewise-linear velocity curve.

    With s = p + p_tilde the three branches are

        -s - k0                      for s < -k0,
        -|s| V(-1/s) = s V(-1/s)     for -k0 <= s <= 0,
        s                            for s > 0,

    and on each velocity segment V = alpha*h + beta the middle branch equals
    -alpha + beta*s, affine in s.  The core is therefore exactly piecewise
    linear; convexity of the assembled knot list is validated (it constrains
    the velocity curve, e.g. vmax <= 1 for the default single-kink law).
    """
    curve = curve or VelocityCurve()
    k0 = 1.0 / curve.h0
    pt = curve.p_tilde
    s_knots = [-k0]
    for h, _ in curve.breakpoints:
        s = -1.0 / h
        if -k0 < s < 0.0:
            s_knots.append(s)
    s_knots.append(0.0)
    s_knots = sorted(set(s_knots))

    def middle(s):
        if s >= 0.0:
            return 0.0
        return float(s * curve.value(-1.0 / s))

    knots = []
    values = []
    for s in s_knots:
        knots.append(s - pt)
        values.append(middle(s))
    # the minimiser s = p_tilde becomes the knot p = 0
    knots.append(0.0)
    values.append(middle(pt))
    order = np.argsort(knots)
    knots = np.asarray(knots, dtype=float)[order]
    values = np.asarray(values, dtype=float)[order]
    keep = np.concatenate(([True], np.diff(knots) > 1e-9))
    knots, values = knots[keep], values[keep]
    if np.min(np.abs(knots)) > 0.0:  # p = 0 was deduplicated away; re-pin it
        i = int(np.argmin(np.abs(knots)))
        knots[i] = 0.0
        values[i] = middle(pt)
    return PiecewiseLinearCore(
        knots=knots, values=values, slope_left=-1.0, slope_right=1.0, label="traffic",
    )


# ---------------------------------------------------------------------------
# Cutoffs and assembled Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffProfile:
    """C^2 cutoffs used to splice the stationary pieces together.

    ``wfl_phi``: non-increasing, 1 on (-inf,-1], 0 on [1, inf).
    ``eps_psi1(eps)``: non-decreasing, 0 below 1/sqrt(eps), 1 above 2/sqrt(eps).
    """

    kind: Literal["wfl_phi", "eps_psi1"] = "wfl_phi"
    eps: float = 0.1
    smoothstep_degree: int = 5

    def __post_init__(self):
        if self.kind == "eps_psi1" and self.eps <= 0.0:
            raise ValueError("eps cutoff requires eps > 0")

    def phi(self, y):
        if self.kind != "wfl_phi":
            raise ValueError("phi is only defined for the wfl cutoff")
        y = np.asarray(y, dtype=float)
        return 1.0 - smoothstep((y + 1.0) / 2.0, self.smoothstep_degree)

    def psi1(self, y):
        if self.kind != "eps_psi1":
            raise ValueError("psi1 is only defined for the eps cutoff")
        y = np.asarray(y, dtype=float)
        a = 1.0 / math.sqrt(self.eps)
        return smoothstep((y - a) / a, self.smoothstep_degree)

    def transition_interval(self) -> Tuple[float, float]:
        if self.kind == "wfl_phi":
            return (-1.0, 1.0)
        a = 1.0 / math.sqrt(self.eps)
        return (a, 2.0 * a)


Core = Union[PiecewiseLinearCore, QuadraticCore, MirroredCore]


@dataclass(frozen=True)
class AssembledHamiltonian:
    """Evaluable H(p, y, omega) = wL(y) * HL(p) + wR(y) * HR(p).

    The weight functions encode the junction geometry:

    * ``none``:  wL = psi_L, wR = 0 (pure stationary Hamiltonian),
    * ``wfl``:   wL = phi * psi_L, wR = (1 - phi) * psi_R,
    * ``eps``:   shared core and medium, wL = psi * (psi1(-y)
                 + C (1-psi1(-y))(1-psi1(y))), wR = psi * psi1(y);
                 the middle piece is H0 = C * HL with C in (0,1).

    Both weights are nonnegative, so convexity, coercivity and the common
    minimum at p = 0 are inherited pointwise from the cores.
    """

    core_left: Core
    medium_left: RandomMedium
    core_right: Optional[Core] = None
    medium_right: Optional[RandomMedium] = None
    junction_mode: Literal["none", "wfl", "eps"] = "none"
    middle_scale: Optional[float] = None
    eps: Optional[float] = None
    cutoff_degree: int = 5

    def __post_init__(self):
        if self.junction_mode == "none":
            return
        if self.core_right is None or self.medium_right is None:
            raise ValueError("junction modes need both a left and a right piece")
        if self.junction_mode == "eps":
            if self.eps is None or self.eps <= 0.0:
                raise ValueError("eps mode requires eps > 0")
            if self.middle_scale is None or not (0.0 < self.middle_scale < 1.0):
                raise ValueError("eps mode requires a middle scale C in (0,1)")
            if self.core_left is not self.core_right or self.medium_left is not self.medium_right:
                raise ValueError("eps mode with H0 = C*HL requires identical left/right pieces")
            self._validate_middle_dominates()

    def _validate_middle_dominates(self):
        """Check H0 >= max(HL, HR) on the congested p-range, where HL <= 0.

        A coercive Hamiltonian cannot be dominated by C*HL globally; the
        slowdown interpretation lives on the range where the flux is
        negative, and the junction-level identities only use p = 0.
        """
        core = self.core_left
        if core.min_value() >= 0.0:
            return  # nothing to dominate; H0 coincides at the minimum
        p_lo = float(core.root_minus(0.0))
        p_hi = float(core.root_plus(0.0))
        ps = np.linspace(p_lo, p_hi, 101)
        base = core.value(ps)
        if np.any(self.middle_scale * base < base - 1e-12):
            raise ValueError("middle Hamiltonian fails H0 >= max(HL, HR) on the congested range")

    # -- weights ----------------------------------------------------------

    def _cutoff(self) -> CutoffProfile:
        if self.junction_mode == "wfl":
            return CutoffProfile(kind="wfl_phi", smoothstep_degree=self.cutoff_degree)
        return CutoffProfile(kind="eps_psi1", eps=float(self.eps), smoothstep_degree=self.cutoff_degree)

    def weights(self, y) -> Tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        if self.junction_mode == "none":
            return self.medium_left.psi(y), np.zeros_like(y)
        if self.junction_mode == "wfl":
            phi = self._cutoff().phi(y)
            return phi * self.medium_left.psi(y), (1.0 - phi) * self.medium_right.psi(y)
        cut = self._cutoff()
        s_neg = cut.psi1(-y)
        s_pos = cut.psi1(y)
        psi = self.medium_left.psi(y)
        w_left = psi * (s_neg + self.middle_scale * (1.0 - s_neg) * (1.0 - s_pos))
        w_right = psi * s_pos
        return w_left, w_right

    # -- evaluation ---------------------------------------------------------

    def value(self, p, y):
        p = np.asarray(p, dtype=float)
        w_l, w_r = self.weights(y)
        out = w_l * self.core_left.value(p)
        if self.junction_mode != "none":
            out = out + w_r * self.core_right.value(p)
        return out

    def value_at_zero(self, y):
        w_l, w_r = self.weights(y)
        out = w_l * self.core_left.value_at_zero()
        if self.junction_mode != "none":
            out = out + w_r * self.core_right.value_at_zero()
        return out

    def plus_part(self, p, y):
        return self.value(np.maximum(np.asarray(p, dtype=float), 0.0), y)

    def minus_part(self, p, y):
        return self.value(np.minimum(np.asarray(p, dtype=float), 0.0), y)

    def lipschitz_p(self, y) -> np.ndarray:
        w_l, w_r = self.weights(y)
        lip = w_l * self.core_left.lipschitz()
        if self.junction_mode != "none":
            lip = lip + w_r * self.core_right.lipschitz()
        return lip

    # -- branch roots ---------------------------------------------------------

    def _pl_cores(self) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, float, float]]:
        cores = [self.core_left] + ([self.core_right] if self.junction_mode != "none" else [])
        resolved = []
        for c in cores:
            base = c.base if isinstance(c, MirroredCore) else c
            if not isinstance(base, PiecewiseLinearCore):
                return None
            resolved.append(c)
        knots = np.unique(np.concatenate([
            (-(c.base.knots)[::-1] if isinstance(c, MirroredCore) else c.knots) for c in resolved
        ]))
        vals_l = np.asarray(self.core_left.value(knots), dtype=float)
        vals_r = (np.asarray(self.core_right.value(knots), dtype=float)
                  if self.junction_mode != "none" else np.zeros_like(knots))
        sl = min(-c.lipschitz() for c in resolved)
        sr = max(c.lipschitz() for c in resolved)
        return knots, vals_l, vals_r, sl, sr

    def root_plus(self, mu, y):
        return self._root(mu, y, side=+1)

    def root_minus(self, mu, y):
        return self._root(mu, y, side=-1)

    def _root(self, mu, y, side: int):
        mu_a, y_a = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(y, dtype=float))
        shape = mu_a.shape
        mu_f = mu_a.ravel()
        y_f = y_a.ravel()
        w_l, w_r = self.weights(y_f)
        minv = self.value_at_zero(y_f)
        if np.any(mu_f < minv - 1e-12):
            raise LevelBelowMinimum("mu below the pointwise minimum H(0, y, omega)")
        mu_f = np.maximum(mu_f, minv)
        pl = self._pl_cores()
        if pl is not None:
            out = self._root_pl(mu_f, w_l, w_r, pl, side)
        elif (isinstance(self.core_left, QuadraticCore)
              and (self.junction_mode == "none" or isinstance(self.core_right, QuadraticCore))):
            ww = w_l + (w_r if self.junction_mode != "none" else 0.0)
            cc = w_l * self.core_left.min_value()
            if self.junction_mode != "none":
                cc = cc + w_r * self.core_right.min_value()
            out = side * np.sqrt(np.maximum(mu_f - cc, 0.0) / ww)
        else:
            out = self._root_bisect(mu_f, y_f, side)
        return out.reshape(shape) if shape else float(out)

    def _root_pl(self, mu, w_l, w_r, pl, side: int):
        knots, vals_l, vals_r, _, _ = pl
        i0 = int(np.searchsorted(knots, 0.0))
        vals = w_l[:, None] * vals_l[None, :] + w_r[:, None] * vals_r[None, :]
        if side > 0:
            kp = knots[i0:]
            vp = vals[:, i0:]
        else:
            kp = knots[: i0 + 1][::-1]
            vp = vals[:, : i0 + 1][:, ::-1]
        # values are non-decreasing along kp when walking away from the minimum
        idx = np.sum(vp <= mu[:, None], axis=1) - 1
        idx = np.clip(idx, 0, len(kp) - 1)
        out = np.empty_like(mu)
        last = idx == len(kp) - 1
        if np.any(last):
            out[last] = kp[-1] + (mu[last] - vp[last, -1]) / self._end_slope(w_l, w_r, side)[last]
        mid = ~last
        if np.any(mid):
            j = idx[mid]
            rows = np.nonzero(mid)[0]
            v0 = vp[rows, j]
            v1 = vp[rows, j + 1]
            slope = (v1 - v0) / (kp[j + 1] - kp[j])
            out[mid] = kp[j] + (mu[mid] - v0) / slope
        return out

    def _end_slope(self, w_l, w_r, side: int) -> np.ndarray:
        """Signed slope of the combined core beyond the outermost knot."""
        def end(core, s):
            if isinstance(core, MirroredCore):
                return -core.base.slope_left if s > 0 else -core.base.slope_right
            return core.slope_right if s > 0 else core.slope_left
        sl = w_l * end(self.core_left, side)
        if self.junction_mode != "none":
            sl = sl + w_r * end(self.core_right, side)
        return sl

    def _root_bisect(self, mu, y, side: int, tol: float = 1e-10):
        out = np.empty_like(mu)
        for i, (m, yy) in enumerate(zip(mu, y)):
            lo, hi = 0.0, float(side)
            while float(self.value(hi, yy)) <= m:
                hi *= 2.0
                if abs(hi) > 1e9:
                    raise LevelBelowMinimum("root bracket expansion failed; H not coercive?")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if float(self.value(mid, yy)) <= m:
                    lo = mid
                else:
                    hi = mid
                if abs(hi - lo) < tol:
                    break
            out[i] = lo
        return out

    # -- structure helpers ---------------------------------------------------

    def reversed_in_p(self) -> "AssembledHamiltonian":
        """G(p, y) = H(-p, y); same weights, mirrored cores (roots negate exactly)."""
        if self.junction_mode == "none":
            return replace(self, core_left=self.core_left.mirrored())
        if self.junction_mode == "eps":
            mirrored = self.core_left.mirrored()
            return replace(self, core_left=mirrored, core_right=mirrored)
        return replace(
            self, core_left=self.core_left.mirrored(), core_right=self.core_right.mirrored(),
        )

    def media(self) -> Sequence[RandomMedium]:
        if self.junction_mode == "none" or self.medium_right is self.medium_left:
            return (self.medium_left,)
        return (self.medium_left, self.medium_right)

    def transition_interval(self) -> Optional[Tuple[float, float]]:
        """Smallest interval outside of which H equals a pure stationary piece."""
        if self.junction_mode == "none":
            return None
        if self.junction_mode == "wfl":
            return (-1.0, 1.0)
        a = 1.0 / math.sqrt(float(self.eps))
        return (-2.0 * a, 2.0 * a)

    def stationary_piece(self, side: Literal["left", "right"]) -> "AssembledHamiltonian":
        if side == "left":
            return AssembledHamiltonian(core_left=self.core_left, medium_left=self.medium_left)
        return AssembledHamiltonian(core_left=self.core_right, medium_left=self.medium_right)

    def middle_piece(self) -> "AssembledHamiltonian":
        if self.junction_mode != "eps":
            raise ValueError("middle piece only exists in eps mode")
        core = self.core_left
        scaled = _scale_core(core, float(self.middle_scale))
        return AssembledHamiltonian(core_left=scaled, medium_left=self.medium_left)


def _scale_core(core: Core, c: float) -> Core:
    if isinstance(core, PiecewiseLinearCore):
        return PiecewiseLinearCore(
            knots=core.knots.copy(), values=c * core.values,
            slope_left=c * core.slope_left, slope_right=c * core.slope_right,
            label=f"{c}*{core.label}",
        )
    if isinstance(core, QuadraticCore):
        raise ValueError("scaled quadratic middle is not in the quadratic family")
    raise ValueError("cannot scale this core")


def assemble_stationary(core: Core, medium: RandomMedium) -> AssembledHamiltonian:
    return AssembledHamiltonian(core_left=core, medium_left=medium)


def assemble_wfl(
    core_left: Core, medium_left: RandomMedium,
    core_right: Core, medium_right: RandomMedium,
    cutoff_degree: int = 5,
) -> AssembledHamiltonian:
    return AssembledHamiltonian(
        core_left=core_left, medium_left=medium_left,
        core_right=core_right, medium_right=medium_right,
        junction_mode="wfl", cutoff_degree=cutoff_degree,
    )


def assemble_eps(
    core: Core, medium: RandomMedium, middle_scale: float, eps: float,
    cutoff_degree: int = 5,
) -> AssembledHamiltonian:
    return AssembledHamiltonian(
        core_left=core, medium_left=medium,
        core_right=core, medium_right=medium,
        junction_mode="eps", middle_scale=middle_scale, eps=eps,
        cutoff_degree=cutoff_degree,
    )


# ---------------------------------------------------------------------------
# Fixed-radius slowdown (non-scaling perturbation; stochastic limiter)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedRadiusSlowdown:
    """Junction Hamiltonian H = envelope(y) * H_core(p) * psi(y, omega).

    The envelope is a fixed bump that does not scale away, so the smallest
    admissible level sup_y H(0, y, omega) stays random: it takes one value
    per state of the origin mark.  The envelope factor is nonpositive, which
    leaves the convex-in-p framework; this object only exposes what the
    flux-limiter study needs.
    """

    core: Core
    medium: RandomMedium
    envelope: BumpProfile = field(default_factory=paper_bump)

    def value_at_zero(self, y):
        y = np.asarray(y, dtype=float)
        return self.envelope.value(y) * self.core.value_at_zero() * self.medium.psi(y)

    def a_tilde(self) -> float:
        """sup over y of H(0, y, omega), exact at the plateau candidates."""
        sup_w = self.envelope.support_half_width
        ys = np.concatenate([
            np.linspace(-sup_w, sup_w, 4001),
            np.array([0.0, -self.envelope.plateau_half_width, self.envelope.plateau_half_width]),
        ])
        return float(np.max(self.value_at_zero(ys)))

    def closed_form_values(self) -> Tuple[float, float]:
        """Level sup for origin mark 0 and origin mark 1 (depth >= -1/2)."""
        h0 = float(self.core.value_at_zero())
        d = self.envelope.depth
        return (h0 * d, h0 * (d * d + d))


# ---------------------------------------------------------------------------
# Window suprema of H(0, . , omega)
# ---------------------------------------------------------------------------


def sup_zero_level(hamiltonian: AssembledHamiltonian, lo: float, hi: float) -> float:
    """sup over [lo, hi] of H(0, y, omega).

    Pure stationary zones are handled cell-by-cell in closed form (the
    extremum of psi over a cell sits on the bump plateau); junction zones
    are scanned on a fine grid augmented with the exact candidate points
    (cell centers, plateau edges, cutoff boundaries).
    """
    if lo >= hi:
        raise ValueError("window must satisfy lo < hi")
    trans = hamiltonian.transition_interval()
    best = -np.inf

    def stationary_sup(piece: AssembledHamiltonian, a: float, b: float) -> float:
        if a >= b:
            return -np.inf
        med = piece.medium_left
        h0 = float(piece.core_left.value_at_zero())
        s = med.lattice_spacing
        ks = np.arange(int(np.floor(a / s + 0.5)), int(np.floor(b / s + 0.5)) + 1)
        centers = med.cell_center(ks)
        nearest = np.clip(centers, a, b)
        if h0 < 0.0:
            # max of h0*psi = h0 * (min psi over the covered part of each cell);
            # psi decreases toward the cell center, so the min sits at `nearest`.
            return float(np.max(h0 * med.psi(nearest)))
        # h0 >= 0: max of h0*psi = h0 * (max psi over the window)
        cands = [med.psi(np.array([a, b]))]
        far = np.concatenate([centers - s / 2.0, centers + s / 2.0])
        far = far[(far >= a) & (far <= b)]
        if far.size:
            cands.append(med.psi(far))
        return h0 * float(np.max(np.concatenate(cands)))

    if trans is None:
        return stationary_sup(hamiltonian, lo, hi)

    t_lo, t_hi = trans
    left = hamiltonian.stationary_piece("left")
    right = hamiltonian.stationary_piece("right")
    if lo < t_lo:
        best = max(best, stationary_sup(left, lo, min(hi, t_lo)))
    if hi > t_hi:
        best = max(best, stationary_sup(right, max(lo, t_hi), hi))
    a, b = max(lo, t_lo), min(hi, t_hi)
    if a < b:
        media = hamiltonian.media()
        cands = [np.linspace(a, b, max(1024, int((b - a) / 0.01) + 1))]
        for med in media:
            ks = np.arange(int(np.floor(a / med.lattice_spacing - 0.5)),
                           int(np.ceil(b / med.lattice_spacing + 0.5)) + 1)
            centers = med.cell_center(ks)
            for off in (0.0, -med.bump.plateau_half_width, med.bump.plateau_half_width):
                cands.append(centers + off)
        cands.append(np.array([a, b, t_lo, t_hi]))
        ys = np.clip(np.concatenate(cands), a, b)
        best = max(best, float(np.max(hamiltonian.value_at_zero(ys))))
    return best


def mu_star_exact(core: Core, medium: RandomMedium) -> float:
    """Almost-sure value of sup_y H_core(p=0) * psi(y): the window limit.

    For a negative core minimum the sup selects the deepest attainable psi
    (some cell carries the maximal mark almost surely); for a nonnegative
    minimum it selects psi = base_level.
    """
    h0 = float(core.value_at_zero())
    if h0 < 0.0:
        return h0 * (medium.base_level + medium.bump.depth * medium.distribution.max_mark)
    return h0 * medium.base_level
