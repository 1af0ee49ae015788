"""Gradient-ladder potential on a four-corner Cantor set.

This module drives a smooth planar potential through a prescribed ladder of
gradient targets concentrated on a product Cantor set, one round per rung,
while keeping the potential essentially unchanged away from the set:

* ``pu_helper_g`` solves the reward-collection control problem behind the
  construction on a grid: maximize the time spent inside a small reward
  region by a slope-bounded curve, discounted by the slope used.  The value
  function is monotone, 1-Lipschitz in x, and eps-Lipschitz in y, and its
  x-derivative is exactly 1 across the reward region -- the mechanism that
  lets a bounded bump carry a unit gradient on the set.
* ``pq_step`` performs one ladder round: it adds ``mover * cutoff`` to a
  potential, where the mover is a closed-form solution of the same control
  problem for the vertical-strip reward region B(proj S, rho) x R (a
  smoothed distribution function of the projection, one factor per axis)
  and the cutoff localizes the edit inside a given open region.
* ``build_pu_potential`` chains K rounds, shrinking the active region onto
  the set, and records every constant, radius, and measured margin.

Scale notes.  Round k works at smoothing radii that collapse roughly like
r -> r^2 per round (tau ~ eps_k * delta_k), so the geometry leaves float
resolution after round one.  All horizontal geometry (set cells, radii,
ramp scales, probe coordinates) is therefore carried as exact `Fraction`
values; floats only ever enter through ratios of commensurate tiny
quantities, where they are safe.  Distribution-function values are carried
as (exact prefix, small float correction) pairs so differences at the
smoothing scale survive cancellation.  Round 4 would need radii below the
subnormal range, so depth is capped by an explicit contract error rather
than by silent underflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from ._sets import SingularSetSpec
from ._smoothstep import smoothstep, smoothstep_deriv, smoothstep_primitive
from .core import ContractError, SuperlinearBound

__all__ = [
    "LadderRung",
    "gradient_ladder",
    "GridSpec",
    "PlaneRegion",
    "StripRegion",
    "SetNeighborhood",
    "HelperGrid",
    "pu_helper_g",
    "LadderPotential",
    "StepReport",
    "pq_step",
    "LadderRound",
    "PuConstruction",
    "build_pu_potential",
    "PuCheckReport",
    "run_pu_checks",
    "field_slope_probe",
    "as_calibration_potential",
    "constants_json",
    "grid_dump",
    "write_artifacts",
]

_F = Fraction


def _fr(x) -> Fraction:
    """Exact Fraction of an int/float/Fraction (floats convert exactly)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return _F(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ContractError(f"non-finite value {x!r} where a number is required")
        return _F(x)
    raise ContractError(f"expected a real number, got {type(x).__name__}")


# ---------------------------------------------------------------------------
# Ladder constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderRung:
    """Gradient target of one ladder round.

    The target gradient is e_k = (-drop, lift); ``band`` is the allowed
    sup-norm deviation from it on the k-th active region.
    """

    index: int
    drop: float  # magnitude of the x-slope target
    lift: float  # y-slope target
    band: float  # allowed gradient deviation, 1 - 2^-(k+1)

    @property
    def target(self) -> tuple:
        return (-self.drop, self.lift)


def gradient_ladder(omega: SuperlinearBound, depth: int) -> list:
    """Rungs 0..depth: lift_k = 4 + 4 omega'(5 * 2^(k+4)), drop_k = 3*2^(k+2)*lift_k."""
    if not isinstance(omega, SuperlinearBound):
        raise ContractError("omega must be a SuperlinearBound")
    if not isinstance(depth, int) or isinstance(depth, bool) or depth < 0:
        raise ContractError("depth must be a non-negative integer")
    rungs = []
    for k in range(depth + 1):
        lift = 4.0 + 4.0 * float(omega.deriv(5.0 * 2.0 ** (k + 4)))
        if not math.isfinite(lift) or lift <= 0.0:
            raise ContractError(f"omega'(5*2^{k + 4}) gives unusable y-slope {lift}")
        drop = 3.0 * 2.0 ** (k + 2) * lift
        rungs.append(LadderRung(k, drop, lift, 1.0 - 2.0 ** (-(k + 1))))
    return rungs


# ---------------------------------------------------------------------------
# Exact 1-D Cantor geometry (Fraction twin of the float helpers in _sets)
# ---------------------------------------------------------------------------


def _dist1d(x: Fraction, depth: int, ratio: Fraction) -> Fraction:
    """Exact distance from x to the depth-n two-ended Cantor set on [0, 1]."""
    a, w = _F(0), _F(1)
    for _ in range(depth):
        rw = ratio * w
        left_end = a + rw
        right_start = a + w - rw
        if x <= left_end:
            w = rw
        elif x >= right_start:
            a, w = right_start, rw
        else:
            return min(x - left_end, right_start - x)
    if x < a:
        return a - x
    if x > a + w:
        return x - (a + w)
    return _F(0)


@lru_cache(maxsize=256)
def _level_masses(depth: int, ratio: Fraction, rho: Fraction) -> tuple:
    """mu[j] = lambda(B(level-j cell set part, rho)), exact."""
    mu = [None] * (depth + 1)
    mu[depth] = ratio**depth + 2 * rho
    for j in range(depth - 1, -1, -1):
        w = ratio**j
        gap = w * (1 - 2 * ratio)
        mu[j] = w + 2 * rho if 2 * rho >= gap else 2 * mu[j + 1]
    return tuple(mu)


def _prefix_mass(x: Fraction, depth: int, ratio: Fraction, rho: Fraction) -> Fraction:
    """lambda(B(C_n, rho) intersect (-inf, x]), exact tree walk."""
    mu = _level_masses(depth, ratio, rho)

    def walk(a, w, j):
        lo, hi = a - rho, a + w + rho
        if x <= lo:
            return _F(0)
        if x >= hi:
            return mu[j]
        gap = w * (1 - 2 * ratio)
        if j == depth or 2 * rho >= gap:
            return x - lo
        rw = ratio * w
        return walk(a, rw, j + 1) + walk(a + w - rw, rw, j + 1)

    return walk(_F(0), _F(1), 0)


def _components_near(
    x: Fraction, depth: int, ratio: Fraction, rho: Fraction, pad: Fraction
) -> list:
    """Components [l, r] of B(C_n, rho) meeting [x - pad, x + pad], exact."""
    lo_w, hi_w = x - pad, x + pad
    out: list = []

    def walk(a, w, j):
        lo, hi = a - rho, a + w + rho
        if hi < lo_w or lo > hi_w:
            return
        gap = w * (1 - 2 * ratio)
        if j == depth or 2 * rho >= gap:
            out.append((lo, hi))
            return
        rw = ratio * w
        walk(a, rw, j + 1)
        walk(a + w - rw, rw, j + 1)

    walk(_F(0), _F(1), 0)
    merged: list = []
    for l, r in sorted(out):
        if merged and l <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(r, merged[-1][1]))
        else:
            merged.append([l, r])
    return [(l, r) for l, r in merged]


def _dist1d_np(x, depth: int, ratio: float):
    """Vectorized float distance to the depth-n set (demo scales only)."""
    x = np.asarray(x, dtype=float)
    a = np.zeros_like(x)
    w = np.ones_like(x)
    d = np.zeros_like(x)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(depth):
        rw = ratio * w
        left_end = a + rw
        right_start = a + w - rw
        in_gap = ~done & (x > left_end) & (x < right_start)
        d = np.where(in_gap, np.minimum(x - left_end, right_start - x), d)
        done |= in_gap
        go_right = ~done & (x >= right_start)
        a = np.where(go_right, right_start, a)
        w = np.where(done, w, rw)
    tail = np.maximum(np.maximum(a - x, x - (a + w)), 0.0)
    return np.where(done, d, tail)


# ---------------------------------------------------------------------------
# Smoothed 1-D bump: indicator of B(C_n, rho) with ramp scale sigma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SmoothBump:
    """Smoothed indicator q of B(C_n, rho): per component [l, r] the profile
    is U((x-l)/sigma) - U((x-r)/sigma), so q = 1 where dist <= rho - 2 sigma
    (at least) and q = 0 where dist >= rho + sigma.  Exact-Fraction geometry;
    floats appear only in the ratio (x - l)/sigma.
    """

    depth: int
    ratio: Fraction
    rho: Fraction
    sigma: Fraction

    def __post_init__(self):
        if self.sigma <= 0 or self.rho <= 0:
            raise ContractError("bump needs positive rho and sigma")
        if float(self.sigma) == 0.0 or float(self.rho) == 0.0:
            raise ContractError(
                f"bump scales rho={self.rho} sigma={self.sigma} underflow float64"
            )
        # Ramps of distinct components must not overlap: sigma below half the
        # smallest component gap (vacuous when fused into one interval).
        gap = self._min_gap()
        if gap is not None and 2 * self.sigma > gap:
            raise ContractError(
                f"ramp scale {float(self.sigma):.3g} exceeds half the component "
                f"gap {float(gap):.3g} of the radius-{float(self.rho):.3g} neighborhood"
            )

    def _min_gap(self) -> Optional[Fraction]:
        # level-(j+1) gaps have width ratio^j (1 - 2 ratio), decreasing in j;
        # a gap survives the rho-fattening iff it exceeds 2 rho
        if self.depth == 0:
            return None
        smallest = None
        for j in range(self.depth):
            gap_j = self.ratio**j * (1 - 2 * self.ratio)
            if 2 * self.rho >= gap_j:
                break
            smallest = gap_j - 2 * self.rho
        return smallest

    @property
    def plateau(self) -> Fraction:
        """Distance radius on which q == 1 exactly."""
        return self.rho - 2 * self.sigma

    @property
    def support(self) -> Fraction:
        """Distance radius beyond which q == 0 exactly."""
        return self.rho + self.sigma

    def mass(self) -> Fraction:
        """Integral of q: ramps are odd around the edges, so exactly the
        neighborhood measure."""
        return _level_masses(self.depth, self.ratio, self.rho)[0]

    def _comps(self, x: Fraction) -> list:
        return _components_near(x, self.depth, self.ratio, self.rho, 4 * self.sigma)

    def indicator(self, x) -> float:
        x = _fr(x)
        total = 0.0
        for l, r in self._comps(x):
            total += smoothstep(float((x - l) / self.sigma)) - smoothstep(
                float((x - r) / self.sigma)
            )
        return min(1.0, max(0.0, total))

    def indicator_slope(self, x) -> float:
        x = _fr(x)
        total = 0.0
        inv = 1.0 / float(self.sigma)
        for l, r in self._comps(x):
            total += (
                smoothstep_deriv(float((x - l) / self.sigma))
                - smoothstep_deriv(float((x - r) / self.sigma))
            ) * inv
        return total

    def cdf_pair(self, x) -> tuple:
        """integral_(-inf)^x q as (exact base, small float correction).

        Components fully left of the 4-sigma window enter the base through
        the exact prefix measure; windowed components contribute through the
        smoothstep primitive (|argument| stays O(component/sigma), so the
        float difference is cancellation-safe).
        """
        x = _fr(x)
        comps = self._comps(x)
        if comps:
            cut = comps[0][0] - 2 * self.sigma
        else:
            cut = x
        if cut > -self.rho:
            base = _prefix_mass(min(cut, 1 + self.rho), self.depth, self.ratio, self.rho)
        else:
            base = _F(0)
        corr = 0.0
        sig = float(self.sigma)
        for l, r in comps:
            corr += sig * (
                smoothstep_primitive(float((x - l) / self.sigma))
                - smoothstep_primitive(float((x - r) / self.sigma))
            )
        return base, corr

    def suffix_pair(self, x) -> tuple:
        base, corr = self.cdf_pair(x)
        return self.mass() - base, -corr


# ---------------------------------------------------------------------------
# Mover and cutoff terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _GradientMover:
    """Bounded bump f with nabla f = (ex * qx(x), ey * qy(y)).

    Per axis, f integrates the smoothed indicator from the side that makes
    the contribution nonnegative, so 0 <= f <= |ex| mass_x + |ey| mass_y and
    the gradient equals (ex, ey) exactly on the bump plateaus.
    """

    ex: float
    ey: float
    bump_x: Optional[_SmoothBump]
    bump_y: Optional[_SmoothBump]

    def _axis_pair(self, bump, amp, x):
        if bump is None or amp == 0.0:
            return _F(0), 0.0
        # decreasing suffix for a negative slope target, increasing prefix
        # for a positive one; either way the value is >= 0
        base, corr = bump.suffix_pair(x) if amp < 0.0 else bump.cdf_pair(x)
        fa = _fr(abs(amp))
        return fa * base, abs(amp) * corr

    def value_pair(self, x, y) -> tuple:
        bx, cx = self._axis_pair(self.bump_x, self.ex, x)
        by, cy = self._axis_pair(self.bump_y, self.ey, y)
        return bx + by, cx + cy

    def value(self, x, y) -> float:
        base, corr = self.value_pair(x, y)
        return float(base) + corr

    def gradient(self, x, y) -> tuple:
        gx = self.ex * self.bump_x.indicator(x) if self.bump_x and self.ex else 0.0
        gy = self.ey * self.bump_y.indicator(y) if self.bump_y and self.ey else 0.0
        return gx, gy

    def max_value(self) -> Fraction:
        out = _F(0)
        if self.bump_x is not None and self.ex:
            out += _fr(abs(self.ex)) * self.bump_x.mass()
        if self.bump_y is not None and self.ey:
            out += _fr(abs(self.ey)) * self.bump_y.mass()
        return out


@dataclass(frozen=True)
class _ProductCutoff:
    """g(x, y) = q(dist to C_n in x) * q(... in y): 1 on the plateau product,
    0 outside the support product, sup-norm gradient <= (15/16)/sigma."""

    bump: _SmoothBump

    def value(self, x, y) -> float:
        return self.bump.indicator(x) * self.bump.indicator(y)

    def gradient(self, x, y) -> tuple:
        qx = self.bump.indicator(x)
        qy = self.bump.indicator(y)
        gx = self.bump.indicator_slope(x) * qy if 0.0 < qx < 1.0 else 0.0
        gy = qx * self.bump.indicator_slope(y) if 0.0 < qy < 1.0 else 0.0
        return gx, gy

    @property
    def slope_bound(self) -> float:
        return (15.0 / 16.0) / float(self.bump.sigma)


@dataclass(frozen=True)
class _RoundTerm:
    """One ladder round's edit mover * cutoff."""

    index: int
    mover: _GradientMover
    cutoff: _ProductCutoff

    def value(self, x, y) -> float:
        g = self.cutoff.value(x, y)
        if g == 0.0:
            return 0.0
        return self.mover.value(x, y) * g

    def gradient(self, x, y) -> tuple:
        g = self.cutoff.value(x, y)
        if g == 0.0:
            return 0.0, 0.0
        fx, fy = self.mover.gradient(x, y)
        gx, gy = self.cutoff.gradient(x, y)
        f = self.mover.value(x, y)
        return g * fx + f * gx, g * fy + f * gy


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderPotential:
    """Linear base plus the accumulated round edits.

    ``value``/``gradient`` accept floats or Fractions; with Fraction
    coordinates all set geometry is evaluated exactly, which is the only way
    to probe rounds past the float resolution.  ``depth`` selects the
    truncated potential after that many rounds (None = all).
    """

    base: tuple  # (x-slope, y-slope) of the linear start
    terms: tuple = ()

    @property
    def rounds(self) -> int:
        return len(self.terms)

    def _upto(self, depth) -> tuple:
        if depth is None:
            return self.terms
        if not isinstance(depth, int) or isinstance(depth, bool) or depth < 0 or depth > len(self.terms):
            raise ContractError(f"depth must lie in 0..{len(self.terms)}, got {depth!r}")
        return self.terms[:depth]

    def value(self, x, y, depth: Optional[int] = None) -> float:
        out = self.base[0] * float(x) + self.base[1] * float(y)
        for term in self._upto(depth):
            out += term.value(x, y)
        return out

    def gradient(self, x, y, depth: Optional[int] = None) -> tuple:
        gx, gy = self.base
        for term in self._upto(depth):
            tx, ty = term.gradient(x, y)
            gx += tx
            gy += ty
        return gx, gy

    def term_value(self, index: int, x, y) -> float:
        return self.terms[index].value(x, y)

    def with_term(self, term: _RoundTerm) -> "LadderPotential":
        return LadderPotential(self.base, self.terms + (term,))


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlaneRegion:
    """The whole plane (round-0 active region)."""

    kind: str = "plane"

    def contains(self, x, y) -> bool:
        return True

    def mask(self, x, y):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)


@dataclass(frozen=True)
class StripRegion:
    """Open vertical strip x0 < x < x1 (closed-form check case)."""

    x0: float
    x1: float
    kind: str = "strip"

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise ContractError("strip needs x0 < x1")

    def contains(self, x, y) -> bool:
        return self.x0 < float(x) < self.x1

    def mask(self, x, y):
        xa = np.asarray(x, dtype=float)
        out = (xa > self.x0) & (xa < self.x1)
        return np.broadcast_to(out, np.broadcast(xa, np.asarray(y)).shape).copy()


@dataclass(frozen=True)
class SetNeighborhood:
    """Open sup-norm neighborhood of the depth-n product set, radius exact."""

    depth: int
    ratio: Fraction
    radius: Fraction
    kind: str = "set-neighborhood"

    def __post_init__(self):
        if self.radius <= 0:
            raise ContractError("neighborhood radius must be positive")

    def contains(self, x, y) -> bool:
        r = self.radius
        return (
            _dist1d(_fr(x), self.depth, self.ratio) < r
            and _dist1d(_fr(y), self.depth, self.ratio) < r
        )

    def mask(self, x, y):
        # float path: adequate only at demo scales (radius >> 1e-12)
        dx = _dist1d_np(x, self.depth, float(self.ratio))
        dy = _dist1d_np(y, self.depth, float(self.ratio))
        return np.maximum(dx, dy) < float(self.radius)


# ---------------------------------------------------------------------------
# Grid helper: reward-collection dynamic program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid for :func:`pu_helper_g`."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ContractError("grid bounds must satisfy x0 < x1 and y0 < y1")
        if self.nx < 8 or self.ny < 8:
            raise ContractError("grid needs at least 8 points per axis")

    @property
    def dx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def xs(self):
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def ys(self):
        return np.linspace(self.y0, self.y1, self.ny)


@dataclass(frozen=True, eq=False)
class HelperGrid:
    """Output of :func:`pu_helper_g`: the value function and its audit."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)  # shape (nx, ny)
    table: np.ndarray = field(repr=False)  # accumulated reward V, same shape
    eps: float
    slope_cap: float
    jumps: tuple
    quant_slack: float
    radius: Optional[float]
    region_kind: str
    crossing_max: float
    crossing_mean: float
    margins: dict

    def interpolate(self, x, y) -> float:
        xs, ys = self.grid.xs, self.grid.ys
        i = int(np.clip(np.searchsorted(xs, x) - 1, 0, self.grid.nx - 2))
        j = int(np.clip(np.searchsorted(ys, y) - 1, 0, self.grid.ny - 2))
        tx = (x - xs[i]) / self.grid.dx
        ty = (y - ys[j]) / self.grid.dy
        tx, ty = min(max(tx, 0.0), 1.0), min(max(ty, 0.0), 1.0)
        v = self.values
        return float(
            (1 - tx) * (1 - ty) * v[i, j]
            + tx * (1 - ty) * v[i + 1, j]
            + (1 - tx) * ty * v[i, j + 1]
            + tx * ty * v[i + 1, j + 1]
        )


def _choose_reward_radius(S: SingularSetSpec, eps: float, grid: GridSpec) -> float:
    """Largest radius whose projected neighborhood measure is <= 0.45 eps."""
    depth = S.depth
    ratio = float(S.params.get("ratio", 0.25))
    floor_mass = (2.0 * ratio) ** depth
    if floor_mass > 0.45 * eps:
        raise ContractError(
            f"set truncation too shallow for eps={eps}: projected measure floor "
            f"{floor_mass:.3g} exceeds 0.45*eps = {0.45 * eps:.3g}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        mu = float(_level_masses(depth, _fr(ratio), _fr(mid))[0])
        if mu <= 0.45 * eps:
            lo = mid
        else:
            hi = mid
    radius = lo
    if radius < max(grid.dx, grid.dy):
        raise ContractError(
            f"grid too coarse to resolve the reward neighborhood: radius "
            f"{radius:.3g} below the grid pitch {max(grid.dx, grid.dy):.3g}"
        )
    return radius


def pu_helper_g(
    S: SingularSetSpec,
    eps: float,
    C: float,
    grid: GridSpec,
    *,
    region=None,
    seed: int = 0,
    curves: int = 1000,
) -> HelperGrid:
    """Grid value function of the slope-discounted reward-collection problem.

    Forward dynamic program over quantized slopes m in [-C, C]:
    ``V(x+dx, y) = max_m V(x, y - m dx) + dx (1 - |m|/C) 1_region(mid-cell)``
    and ``g(x, y) = max_(b >= x) (x - b + V(b, y))``.  The region defaults to
    the sup-norm neighborhood of ``S`` whose projected measure is below
    0.45 eps, which certifies the crossing bound for every curve; 10^3 random
    slope-bounded curves then re-validate it statistically.  Self-checks
    assert 0 <= g <= eps, forward differences in [0, dx], and the vertical
    Lipschitz bound max(eps, 1/C) * t * (1 + quantization slack).
    """
    if not isinstance(S, SingularSetSpec):
        raise ContractError("S must be a SingularSetSpec")
    if not (isinstance(eps, (int, float)) and math.isfinite(eps) and eps > 0):
        raise ContractError(f"eps must be a positive finite number, got {eps!r}")
    if not (isinstance(C, (int, float)) and math.isfinite(C) and C > 0):
        raise ContractError(f"slope budget C must be positive and finite, got {C!r}")
    if not isinstance(grid, GridSpec):
        raise ContractError("grid must be a GridSpec")
    dx, dy = grid.dx, grid.dy
    if dx * C < dy:
        raise ContractError(
            f"grid too coarse for slope quantization: dx*C = {dx * C:.3g} "
            f"below the y-pitch {dy:.3g}"
        )

    radius: Optional[float] = None
    if region is None:
        if S.kind == "empty":
            region = StripRegion(grid.x1 + 1.0, grid.x1 + 2.0)  # no reward anywhere
            region_kind = "empty"
        elif S.kind == "cantor-product":
            radius = _choose_reward_radius(S, eps, grid)
            region = SetNeighborhood(S.depth, _fr(float(S.params["ratio"])), _fr(radius))
            region_kind = region.kind
        else:
            raise ContractError(
                f"no default reward region for set kind {S.kind!r}; pass region="
            )
    else:
        region_kind = getattr(region, "kind", type(region).__name__)

    # quantized slope jumps (grid cells per x-step), symmetric, |slope| <= C
    j_cap = int(math.floor(C * dx / dy))
    raw = np.round(np.linspace(-C, C, 33) * dx / dy).astype(int)
    jumps = sorted(set(int(j) for j in raw if abs(j) <= j_cap) | {0, j_cap, -j_cap})
    m_max = j_cap * dy / dx
    quant_slack = C / m_max - 1.0

    xs, ys = grid.xs, grid.ys
    mid_x = xs[:-1] + 0.5 * dx
    # mid-cell membership per (column, jump): y-midpoints live on the
    # half-pitch grid, so evaluate the region on that lattice once
    half_ys = grid.y0 + 0.5 * dy * np.arange(2 * grid.ny - 1)
    reward = {}
    for j in jumps:
        w = 1.0 - abs(j) * dy / dx / C
        reward[j] = w * dx
    nx, ny = grid.nx, grid.ny
    V = np.zeros((nx, ny))
    NEG = -np.inf
    for i in range(nx - 1):
        mids = {}
        best = np.full(ny, NEG)
        for j in jumps:
            # predecessor row indices: y_t - j cells
            src = np.full(ny, NEG)
            if j >= 0:
                src[j:] = V[i, : ny - j] if j else V[i, :]
            else:
                src[:j] = V[i, -j:]
            # mid-cell y indices on the half-pitch lattice: 2*t - j
            tt = np.arange(ny) * 2 - j
            valid = (tt >= 0) & (tt <= 2 * (ny - 1))
            ymid = np.where(valid, half_ys[np.clip(tt, 0, 2 * (ny - 1))], 0.0)
            inr = np.zeros(ny, dtype=bool)
            if np.any(valid):
                inr[valid] = region.mask(np.full(int(np.sum(valid)), mid_x[i]), ymid[valid])
            cand = src + reward[j] * inr
            best = np.maximum(best, cand)
        V[i + 1] = np.maximum(best, V[i])  # staying put is never forced below
    # g(x, y) = x + suffix-max over b of (V(b, y) - x_b)
    g = np.empty_like(V)
    run = V[nx - 1] - xs[nx - 1]
    g[nx - 1] = xs[nx - 1] + run
    for i in range(nx - 2, -1, -1):
        run = np.maximum(V[i] - xs[i], run)
        g[i] = xs[i] + run

    margins = {}
    g_max = float(np.max(g))
    g_min = float(np.min(g))
    margins["lower"] = g_min
    margins["upper"] = eps - g_max
    if g_min < -1e-12 or g_max > eps * (1.0 + 1e-9):
        raise ContractError(
            f"value function escapes [0, eps]: range [{g_min:.3g}, {g_max:.3g}] "
            f"vs eps = {eps:.3g}"
        )
    fwd = np.diff(g, axis=0)
    margins["forward_low"] = float(np.min(fwd))
    margins["forward_high"] = float(dx - np.max(fwd))
    if np.min(fwd) < -1e-12 or np.max(fwd) > dx * (1.0 + 1e-9):
        raise ContractError("forward differences escape [0, dx]")
    y_bound_rate = max(eps, 1.0 / C) * (1.0 + quant_slack)
    worst_y = math.inf
    for kappa in (1, 2, 3):
        s = kappa * j_cap
        if s >= ny:
            break
        t = s * dy
        dgy = np.abs(g[:, s:] - g[:, :-s])
        worst_y = min(worst_y, float(y_bound_rate * t - np.max(dgy)))
        if np.max(dgy) > y_bound_rate * t + 1e-12:
            raise ContractError(
                f"vertical move of {s} cells changes g by {np.max(dgy):.3g}, "
                f"beyond the Lipschitz bound {y_bound_rate * t:.3g}"
            )
    margins["vertical"] = worst_y

    # statistical validation: random slope-bounded curves meet the region in
    # length <= eps (the projection bound certifies it; this measures it)
    rng = np.random.default_rng(seed)
    span = grid.x1 - grid.x0
    n_seg = max(4, int(math.ceil(span / (4.0 * dx))))
    step = span / (8 * n_seg)
    s_axis = grid.x0 + step * (np.arange(8 * n_seg) + 0.5)
    crossings = []
    for _ in range(int(curves)):
        slopes = rng.uniform(-C, C, size=n_seg)
        ystart = rng.uniform(grid.y0, grid.y1)
        yy = ystart + np.concatenate([[0.0], np.cumsum(np.repeat(slopes, 8) * step)])[:-1]
        inside = region.mask(s_axis, yy)
        crossings.append(float(np.sum(inside) * step))
    crossing_max = max(crossings) if crossings else 0.0
    crossing_mean = float(np.mean(crossings)) if crossings else 0.0
    margins["crossing"] = eps - crossing_max
    if crossing_max > eps:
        raise ContractError(
            f"a sampled slope-{C} curve meets the reward region in length "
            f"{crossing_max:.3g} > eps = {eps:.3g}"
        )

    return HelperGrid(
        grid=grid,
        values=g,
        table=V,
        eps=float(eps),
        slope_cap=float(C),
        jumps=tuple(jumps),
        quant_slack=float(quant_slack),
        radius=radius,
        region_kind=region_kind,
        crossing_max=crossing_max,
        crossing_mean=crossing_mean,
        margins=margins,
    )


# ---------------------------------------------------------------------------
# One ladder round
# ---------------------------------------------------------------------------


def _segment_distance(v: tuple, e0: tuple, e1: tuple) -> float:
    """Sup-norm distance from v to the segment [e0, e1], exact 1-D minimization."""
    ax, ay = v[0] - e0[0], v[1] - e0[1]
    bx, by = e1[0] - e0[0], e1[1] - e0[1]

    def val(t):
        return max(abs(ax - t * bx), abs(ay - t * by))

    cands = {0.0, 1.0}
    for num, den in ((ax, bx), (ay, by)):
        if den != 0.0:
            cands.add(min(1.0, max(0.0, num / den)))
    for sa, sb in ((1.0, 1.0), (1.0, -1.0)):
        den = sa * bx - sb * by
        if den != 0.0:
            cands.add(min(1.0, max(0.0, (sa * ax - sb * ay) / den)))
    return min(val(t) for t in cands)


@dataclass(frozen=True)
class StepReport:
    """Audit of one ladder round."""

    index: int
    trivial: bool
    delta: Fraction  # geometric half-support of the cutoff
    delta_eff: Fraction  # slope scale: cutoff gradient <= 1/delta_eff
    tau: Fraction
    mover_depth: int
    mover_rho: Fraction
    cutoff_depth: int
    cutoff_sigma: Fraction
    sup_edit: Fraction  # certified sup|f * g| <= sup f
    margins: dict
    samples: int

    def passed(self) -> bool:
        return all(m >= 0.0 for m in self.margins.values())


def _design_term(
    ratio: Fraction,
    e_prev: tuple,
    e_next: tuple,
    eps: Fraction,
    delta: Fraction,
    cutoff_depth: int,
    mover_depth_min: int,
):
    """Choose the round's mover and cutoff; all geometry exact."""
    sigma_c = _F(16, 25) * delta
    rho_c = 2 * delta - sigma_c
    delta_eff = _F(16, 15) * sigma_c
    tau = eps * delta_eff / (2 * (delta_eff + 1))

    ex = e_next[0] - e_prev[0]
    ey = e_next[1] - e_prev[1]
    amp = abs(ex) + abs(ey)
    cutoff = _ProductCutoff(_SmoothBump(cutoff_depth, ratio, rho_c, sigma_c))
    if amp == 0.0:
        mover = _GradientMover(0.0, 0.0, None, None)
        return mover, cutoff, tau, delta_eff, mover_depth_min, _F(0)

    two_r = 2 * ratio
    n = max(1, mover_depth_min)
    budget = tau * _F(49, 50)
    while _F(3, 2) * two_r**n * _fr(amp) > budget:
        n += 1
        if n > 4000:
            raise ContractError("mover depth search diverged")
    rho_f = ratio**n / 4
    sigma_f = rho_f / 4
    if float(sigma_f) == 0.0:
        raise ContractError(
            f"mover smoothing scale {rho_f} underflows float64; the ladder "
            "cannot be continued at this depth"
        )
    bump = _SmoothBump(n, ratio, rho_f, sigma_f)
    mover = _GradientMover(
        ex,
        ey,
        bump if ex != 0.0 else None,
        bump if ey != 0.0 else None,
    )
    sup_edit = mover.max_value()
    if sup_edit > tau:
        raise ContractError(
            f"mover mass {float(sup_edit):.3g} exceeds tau {float(tau):.3g}"
        )
    return mover, cutoff, tau, delta_eff, n, sup_edit


def _set_params(S: SingularSetSpec) -> tuple:
    if not isinstance(S, SingularSetSpec) or S.kind != "cantor-product":
        raise ContractError("the singular set must be a cantor-product SingularSetSpec")
    ratio = _fr(float(S.params["ratio"]))
    if not 0 < ratio <= _F(1, 4):
        raise ContractError("set ratio must lie in (0, 1/4]")
    if S.depth < 1:
        raise ContractError("the singular set needs depth >= 1")
    return ratio, S.depth


def _rand_fraction(rng, scale: Fraction, grain: int = 1 << 30) -> Fraction:
    return scale * _F(int(rng.integers(0, grain + 1)), grain)


def _set_corner(rng, ratio: Fraction, depth: int) -> Fraction:
    """A uniform random cell endpoint of the depth-n set (exact; persists to
    all deeper truncations)."""
    a, w = _F(0), _F(1)
    for _ in range(depth):
        rw = ratio * w
        if rng.integers(0, 2):
            a = a + w - rw
        w = rw
    return a + w if rng.integers(0, 2) else a


def pq_step(
    S: SingularSetSpec,
    region,
    h0,
    e0: tuple,
    e1: tuple,
    eps,
    *,
    delta=None,
    seed: int = 0,
    samples: int = 2000,
):
    """One ladder round: returns (h1, StepReport) with h1 = h0 + mover*cutoff.

    Preconditions: the doubled cutoff support B(S, 2 delta) must lie inside
    ``region`` (contract error otherwise).  The sampled conclusions checked,
    each with its worst margin recorded, are: sup|h1 - h0| < eps; h1 == h0
    outside the region (bitwise); dist(grad h1, [e0, e1]) < eps +
    ||grad h0 - e0|| at every sample; and ||grad h1 - e1|| < eps +
    ||grad h0 - e0|| at set samples.  Set samples are cell endpoints of the
    deepest internal refinement, which persist in every deeper truncation
    and in the limit set.  A failed conclusion raises with the measured
    margin -- rungs whose y-jump exceeds eps are genuinely unreachable by an
    axis-aligned mover and abort here.
    """
    ratio, set_depth = _set_params(S)
    return _pq_round(
        ratio, set_depth, region, h0, e0, e1, eps, delta=delta, seed=seed, samples=samples
    )


def _pq_round(
    ratio: Fraction,
    set_depth: int,
    region,
    h0,
    e0: tuple,
    e1: tuple,
    eps,
    *,
    delta=None,
    seed: int = 0,
    samples: int = 2000,
):
    eps = _fr(eps)
    if eps <= 0:
        raise ContractError("eps must be positive")
    e0 = (float(e0[0]), float(e0[1]))
    e1 = (float(e1[0]), float(e1[1]))

    if isinstance(region, PlaneRegion):
        delta = _F(1, 2) if delta is None else _fr(delta)
        cutoff_depth = set_depth
    elif isinstance(region, SetNeighborhood):
        if delta is None:
            delta = _F(49, 100) * region.radius
        else:
            delta = _fr(delta)
        if 2 * delta >= region.radius:
            raise ContractError(
                f"doubled halo 2*delta = {float(2 * delta):.3g} does not fit "
                f"inside the region radius {float(region.radius):.3g}"
            )
        cutoff_depth = region.depth
    else:
        raise ContractError("region must be a PlaneRegion or SetNeighborhood")
    if delta <= 0:
        raise ContractError("delta must be positive")

    mover, cutoff, tau, delta_eff, n_f, sup_edit = _design_term(
        ratio, e0, e1, eps, delta, cutoff_depth, set_depth
    )
    trivial = mover.bump_x is None and mover.bump_y is None
    term = _RoundTerm(0, mover, cutoff)
    if isinstance(h0, LadderPotential):
        h1 = h0.with_term(term)
        h0_val, h0_grad = h0.value, h0.gradient

        def h1_val(x, y):
            return h1.value(x, y)

        def h1_grad(x, y):
            return h1.gradient(x, y)
    else:
        h0_val, h0_grad = h0.value, h0.gradient

        class _Composed:
            def value(self, x, y):
                return h0_val(x, y) + term.value(x, y)

            def gradient(self, x, y):
                gx, gy = h0_grad(x, y)
                tx, ty = term.gradient(x, y)
                return gx + tx, gy + ty

        h1 = _Composed()
        h1_val, h1_grad = h1.value, h1.gradient

    # --- sampled conclusions -------------------------------------------
    rng = np.random.default_rng(seed)
    n_each = max(8, samples // 4)
    eps_f = float(eps)

    probes = []  # (x, y, on_set)
    depth_probe = max(n_f, set_depth)
    spanlo = -float(4 * delta) - 0.25
    spanhi = 1.0 + float(4 * delta) + 0.25
    for _ in range(n_each):
        probes.append((rng.uniform(spanlo, spanhi), rng.uniform(spanlo, spanhi), False))
    offsets = []
    if not trivial:
        base_scale = mover.bump_x.sigma if mover.bump_x else mover.bump_y.sigma
        lo_e = math.log2(float(base_scale)) - 2.0
        hi_e = math.log2(float(2 * delta)) + 1.0
        for _ in range(n_each):
            e = rng.uniform(lo_e, hi_e)
            offsets.append(_fr(2.0**e) * _F(1))
    for _ in range(n_each):
        cx = _set_corner(rng, ratio, depth_probe)
        cy = _set_corner(rng, ratio, depth_probe)
        probes.append((cx, cy, True))
        if offsets:
            ox = offsets[int(rng.integers(0, len(offsets)))]
            oy = offsets[int(rng.integers(0, len(offsets)))]
            sx = 1 if rng.integers(0, 2) else -1
            sy = 1 if rng.integers(0, 2) else -1
            probes.append((cx + sx * ox, cy + sy * oy, False))
            probes.append((cx + sx * ox, cy, False))
            probes.append((cx, cy + sy * oy, False))

    worst = {
        "sup_edit": eps_f - float(sup_edit),
        "outside_equal": math.inf,
        "gradient_band": math.inf,
        "set_gradient": math.inf,
    }
    for x, y, on_set in probes:
        edit = term.value(x, y)
        worst["sup_edit"] = min(worst["sup_edit"], eps_f - abs(edit))
        gx0, gy0 = h0_grad(x, y)
        slack = max(abs(gx0 - e0[0]), abs(gy0 - e0[1]))
        gx1, gy1 = h1_grad(x, y)
        band = _segment_distance((gx1, gy1), e0, e1)
        worst["gradient_band"] = min(worst["gradient_band"], eps_f + slack - band)
        if not region.contains(x, y):
            same = h1_val(x, y) == h0_val(x, y) and (gx1, gy1) == (gx0, gy0)
            worst["outside_equal"] = min(worst["outside_equal"], 1.0 if same else -1.0)
        if on_set:
            dev = max(abs(gx1 - e1[0]), abs(gy1 - e1[1]))
            worst["set_gradient"] = min(worst["set_gradient"], eps_f + slack - dev)

    report = StepReport(
        index=0,
        trivial=trivial,
        delta=delta,
        delta_eff=delta_eff,
        tau=tau,
        mover_depth=n_f,
        mover_rho=mover.bump_x.rho if mover.bump_x else (mover.bump_y.rho if mover.bump_y else _F(0)),
        cutoff_depth=cutoff_depth,
        cutoff_sigma=cutoff.bump.sigma,
        sup_edit=sup_edit,
        margins=dict(worst),
        samples=len(probes),
    )
    if not report.passed():
        bad = {k: v for k, v in worst.items() if v < 0.0}
        raise ContractError(
            "ladder round conclusions violated: "
            + ", ".join(f"{k} margin {v:.6g}" for k, v in bad.items())
        )
    return h1, report


# ---------------------------------------------------------------------------
# Full construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderRound:
    """Recorded geometry of one completed round."""

    index: int
    e_prev: tuple
    e_next: tuple
    delta: Fraction
    delta_eff: Fraction
    tau: Fraction
    mover_depth: int
    mover_rho: Fraction
    cutoff_depth: int
    sup_edit: Fraction
    omega_radius: Fraction  # radius of the round's active region
    omega_depth: int  # refinement depth its set neighborhood hugs
    eps_next: Fraction
    crossing_mass: Fraction  # exact projected measure of the active region
    crossing_cap: Fraction
    margins: dict

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "e_prev": list(self.e_prev),
            "e_next": list(self.e_next),
            "delta": float(self.delta),
            "delta_eff": float(self.delta_eff),
            "tau": float(self.tau),
            "mover_depth": self.mover_depth,
            "mover_rho": float(self.mover_rho),
            "cutoff_depth": self.cutoff_depth,
            "sup_edit": float(self.sup_edit),
            "omega_radius": float(self.omega_radius),
            "omega_depth": self.omega_depth,
            "eps_next": float(self.eps_next),
            "crossing_mass": float(self.crossing_mass),
            "crossing_cap": float(self.crossing_cap),
            "margins": {
                k: (float(v) if math.isfinite(v) else None)
                for k, v in self.margins.items()
            },
        }


@dataclass(frozen=True)
class PuConstruction:
    """K-round gradient-ladder potential with its full audit trail."""

    bound_tag: str
    set_spec: SingularSetSpec
    ratio: Fraction
    depth: int
    rungs: tuple
    rounds: tuple
    potential: LadderPotential
    eps0: Fraction

    def rung(self, k: int) -> LadderRung:
        return self.rungs[k]

    def omega_region(self, k: int):
        """Active region after round k (k = 0 is the whole plane)."""
        if k == 0:
            return PlaneRegion()
        r = self.rounds[k - 1]
        return SetNeighborhood(r.omega_depth, self.ratio, r.omega_radius)

    def potential_value(self, x, y, depth: Optional[int] = None) -> float:
        return self.potential.value(x, y, depth)

    def potential_gradient(self, x, y, depth: Optional[int] = None) -> tuple:
        return self.potential.gradient(x, y, depth)

    def steepness(self, x, y) -> float:
        gx, gy = self.potential.gradient(x, y)
        if gy <= 0.0:
            raise ContractError(f"steepness undefined: y-slope {gy} at ({x}, {y})")
        return -2.0 * gx / gy

    def set_corner(self, rng, level: Optional[int] = None) -> Fraction:
        depth = self.rounds[-1].omega_depth if level is None else level
        return _set_corner(rng, self.ratio, depth)


def build_pu_potential(
    omega: SuperlinearBound,
    S: SingularSetSpec,
    K: int,
    *,
    seed: int = 0,
    samples_per_check: int = 300,
) -> PuConstruction:
    """Run K ladder rounds on the product set and audit every property.

    Round k moves the gradient from rung k-1 to rung k inside the current
    active region, then shrinks the region onto the set: its radius stays
    below the mover plateau (so the new gradient is exact on it), below
    0.49 * min(2^-k, previous radius), and below the exact crossing cap
    1/(k (drop_k + lift_k + 6)) for the projected neighborhood measure.
    Any sampled property failure aborts with the round index and the worst
    measured margin.
    """
    ratio, set_depth = _set_params(S)
    if not isinstance(K, int) or isinstance(K, bool) or K < 1:
        raise ContractError(f"depth K must be an integer >= 1, got {K!r}")
    rungs = gradient_ladder(omega, K)
    potential = LadderPotential(rungs[0].target)
    eps0 = _F(1, 4)

    eps_size = eps0  # running size budget: ||Phi^k - Phi^(k-1)|| < eps_(k-1)
    region = PlaneRegion()
    prev_depth = set_depth
    rounds = []
    for k in range(1, K + 1):
        e_prev, e_next = rungs[k - 1].target, rungs[k].target
        try:
            # the round tolerance for the gradient conclusions stays at
            # eps0; the shrinking size budget is enforced separately below
            h1, step = _pq_round(
                ratio,
                prev_depth,
                region,
                potential,
                e_prev,
                e_next,
                eps0,
                seed=seed + 17 * k,
                samples=samples_per_check,
            )
        except ContractError as err:
            raise ContractError(f"round {k}: {err}") from None
        if step.sup_edit >= eps_size:
            raise ContractError(
                f"round {k}: edit size {float(step.sup_edit):.3g} exceeds the "
                f"running budget {float(eps_size):.3g}"
            )
        potential = h1

        mover = potential.terms[-1].mover
        cutoff = potential.terms[-1].cutoff
        plateau_f = mover.bump_x.plateau if mover.bump_x else mover.bump_y.plateau
        plateau_c = cutoff.bump.plateau
        radius = min(
            _F(9, 10) * plateau_f,
            _F(9, 10) * plateau_c,
            _F(49, 100) * _F(1, 2**k),
        )
        if isinstance(region, SetNeighborhood):
            radius = min(radius, _F(49, 100) * region.radius)
        n_k = step.mover_depth
        cap = _F(1, k) / _fr(rungs[k].drop + rungs[k].lift + 6.0)
        floor = (2 * ratio) ** n_k
        if floor > cap:
            raise ContractError(
                f"round {k}: projected set measure {float(floor):.3g} already "
                f"exceeds the crossing cap {float(cap):.3g}"
            )
        for _ in range(200):
            if _level_masses(n_k, ratio, radius)[0] <= cap:
                break
            radius /= 2
        else:
            raise ContractError(f"round {k}: no radius satisfies the crossing cap")
        crossing_mass = _level_masses(n_k, ratio, radius)[0]
        eps_next = min(eps_size / 2, radius)
        rounds.append(
            LadderRound(
                index=k,
                e_prev=e_prev,
                e_next=e_next,
                delta=step.delta,
                delta_eff=step.delta_eff,
                tau=step.tau,
                mover_depth=step.mover_depth,
                mover_rho=step.mover_rho,
                cutoff_depth=step.cutoff_depth,
                sup_edit=step.sup_edit,
                omega_radius=radius,
                omega_depth=n_k,
                eps_next=eps_next,
                crossing_mass=crossing_mass,
                crossing_cap=cap,
                margins=step.margins,
            )
        )
        eps_size = eps_next
        region = SetNeighborhood(n_k, ratio, radius)
        prev_depth = n_k

    cons = PuConstruction(
        bound_tag=omega.tag,
        set_spec=S,
        ratio=ratio,
        depth=K,
        rungs=tuple(rungs),
        rounds=tuple(rounds),
        potential=potential,
        eps0=eps0,
    )
    report = run_pu_checks(cons, samples_per_check=samples_per_check, seed=seed)
    if not report.passed:
        worst = min(report.results, key=lambda r: r.margin)
        raise ContractError(
            f"round {worst.round_index}: property {worst.name!r} failed with "
            f"worst margin {worst.margin:.6g}"
        )
    return cons


# ---------------------------------------------------------------------------
# Check battery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PuCheckResult:
    name: str
    round_index: int
    passed: bool
    margin: float
    threshold: float
    samples: int


@dataclass(frozen=True)
class PuCheckReport:
    results: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self) -> str:
        return json.dumps(
            [
                {
                    "name": r.name,
                    "round": r.round_index,
                    "passed": r.passed,
                    "margin": r.margin if math.isfinite(r.margin) else None,
                    "threshold": r.threshold,
                    "samples": r.samples,
                }
                for r in self.results
            ],
            indent=2,
            sort_keys=True,
        )


def _round_probe_points(cons: PuConstruction, k: int, rng, count: int):
    """Probe families for round k's properties, as exact coordinates."""
    rd = cons.rounds[k - 1]
    ratio = cons.ratio
    inside = []  # in the round's shrunk active region
    between = []  # in the previous active region
    outside = []  # off the previous active region
    r_k = rd.omega_radius
    r_prev = cons.rounds[k - 2].omega_radius if k >= 2 else None
    depth_k = rd.omega_depth
    sig_f = rd.mover_rho / 4
    hi = _F(49, 50) * (r_prev if r_prev is not None else 2 * rd.delta)
    lo_e = math.log2(float(sig_f) / 4.0)
    hi_e = math.log2(float(hi))
    for _ in range(count):
        cx = _set_corner(rng, ratio, depth_k)
        cy = _set_corner(rng, ratio, depth_k)
        ox = _rand_fraction(rng, r_k * _F(49, 50))
        oy = _rand_fraction(rng, r_k * _F(49, 50))
        sx = 1 if rng.integers(0, 2) else -1
        sy = 1 if rng.integers(0, 2) else -1
        inside.append((cx + sx * ox, cy + sy * oy))
        ox = _fr(2.0 ** rng.uniform(lo_e, hi_e))
        oy = _fr(2.0 ** rng.uniform(lo_e, hi_e))
        if ox < hi and oy < hi:
            between.append((cx + sx * ox, cy + sy * oy))
            between.append((cx + sx * ox, cy))
        far = _fr(rng.uniform(1.05, 3.0)) * (r_prev if r_prev is not None else _F(1, 1))
        outside.append((cx + far, cy + far))
        outside.append((rng.uniform(-1.5, 2.5), rng.uniform(1.2 + float(2 * rd.delta), 3.5)))
    return inside, between, outside


def run_pu_checks(
    cons: PuConstruction, *, samples_per_check: int = 250, seed: int = 0
) -> PuCheckReport:
    """Re-measure every per-round property on fresh seeded samples.

    Per round k: gradient pinned to rung k on the shrunk region
    ("rung-pin"), gradient within the rung band of the segment between
    rungs on the previous region ("rung-band"), edit below the running
    tolerance ("edit-size"), and bitwise equality outside the previous
    region ("frozen-outside").  A final "steepness" check probes the field
    slope on the set against 0.5 * drop_K / lift_K.
    """
    out = []
    for k in range(1, cons.depth + 1):
        rng = np.random.default_rng([seed, k])
        rd = cons.rounds[k - 1]
        rung = cons.rungs[k]
        inside, between, outside = _round_probe_points(
            cons, k, rng, max(8, samples_per_check // 3)
        )
        eps_prev = cons.eps0 if k == 1 else cons.rounds[k - 2].eps_next
        region_prev = cons.omega_region(k - 1)

        m = math.inf
        for x, y in inside:
            gx, gy = cons.potential_gradient(x, y, depth=k)
            dev = max(abs(gx - rung.target[0]), abs(gy - rung.target[1]))
            m = min(m, rung.band - dev)
        out.append(PuCheckResult("rung-pin", k, m >= 0.0, m, rung.band, len(inside)))

        m = math.inf
        for x, y in between:
            if not region_prev.contains(x, y):
                continue
            gx, gy = cons.potential_gradient(x, y, depth=k)
            band = _segment_distance(
                (gx, gy), cons.rungs[k - 1].target, rung.target
            )
            m = min(m, rung.band - band)
        out.append(PuCheckResult("rung-band", k, m >= 0.0, m, rung.band, len(between)))

        m = math.inf
        for x, y in inside + between + outside:
            edit = cons.potential.term_value(k - 1, x, y)
            m = min(m, float(eps_prev) - abs(edit))
        m = min(m, float(eps_prev - rd.sup_edit))
        out.append(
            PuCheckResult(
                "edit-size", k, m > 0.0, m, float(eps_prev), len(inside) + len(between) + len(outside)
            )
        )

        m = math.inf
        for x, y in outside:
            if region_prev.contains(x, y):
                continue
            same = cons.potential_value(x, y, depth=k) == cons.potential_value(
                x, y, depth=k - 1
            ) and cons.potential_gradient(x, y, depth=k) == cons.potential_gradient(
                x, y, depth=k - 1
            )
            m = min(m, 1.0 if same else -1.0)
        out.append(PuCheckResult("frozen-outside", k, m >= 0.0, m, 0.0, len(outside)))

        m = float(rd.crossing_cap - rd.crossing_mass)
        out.append(PuCheckResult("crossing-cap", k, m >= 0.0, m, float(rd.crossing_cap), 1))

    rng = np.random.default_rng([seed, 999])
    K = cons.depth
    threshold = 0.5 * cons.rungs[K].drop / cons.rungs[K].lift
    m = math.inf
    n_pts = max(8, samples_per_check // 8)
    for _ in range(n_pts):
        cx = cons.set_corner(rng)
        cy = cons.set_corner(rng)
        m = min(m, cons.steepness(cx, cy) - threshold)
    out.append(PuCheckResult("steepness", K, m >= 0.0, m, threshold, n_pts))
    return PuCheckReport(tuple(out))


def field_slope_probe(
    cons: PuConstruction, *, n: int = 40, seed: int = 0
) -> tuple:
    """(worst steepness on set probes, threshold 0.5 * drop_K / lift_K)."""
    rng = np.random.default_rng(seed)
    K = cons.depth
    worst = math.inf
    for _ in range(n):
        worst = min(worst, cons.steepness(cons.set_corner(rng), cons.set_corner(rng)))
    return worst, 0.5 * cons.rungs[K].drop / cons.rungs[K].lift


# ---------------------------------------------------------------------------
# Calibration bridge and artifacts
# ---------------------------------------------------------------------------


def as_calibration_potential(cons: PuConstruction, *, window=(-1.5, 2.5, -1.5, 2.5)):
    """Wrap the finished potential for the calibration machinery."""
    from .calibration import closed_form_potential

    def value_fn(x, y):
        xa, ya = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.array(
            [cons.potential_value(float(a), float(b)) for a, b in zip(xa.ravel(), ya.ravel())]
        )
        return out.reshape(xa.shape) if xa.shape else float(out[0])

    def grad_fn(x, y):
        xa, ya = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        gs = [cons.potential_gradient(float(a), float(b)) for a, b in zip(xa.ravel(), ya.ravel())]
        gx = np.array([g[0] for g in gs]).reshape(xa.shape)
        gy = np.array([g[1] for g in gs]).reshape(xa.shape)
        if xa.shape:
            return gx, gy
        return float(gx.ravel()[0]), float(gy.ravel()[0])

    lip = cons.rungs[-1].drop + cons.rungs[-1].lift + 1.0
    return closed_form_potential(
        value_fn,
        grad_fn,
        window,
        singular_set=cons.set_spec,
        lipschitz_bound=lip,
    )


def constants_json(cons: PuConstruction) -> str:
    payload = {
        "bound": cons.bound_tag,
        "depth": cons.depth,
        "set_depth": cons.set_spec.depth,
        "ratio": float(cons.ratio),
        "eps0": float(cons.eps0),
        "rungs": [
            {"index": r.index, "drop": r.drop, "lift": r.lift, "band": r.band}
            for r in cons.rungs
        ],
        "rounds": [r.as_dict() for r in cons.rounds],
        "exact": {
            "omega_radii": [str(r.omega_radius) for r in cons.rounds],
            "eps": [str(cons.eps0)] + [str(r.eps_next) for r in cons.rounds],
            "taus": [str(r.tau) for r in cons.rounds],
            "mover_rhos": [str(r.mover_rho) for r in cons.rounds],
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def grid_dump(cons: PuConstruction, depth: int, nx: int = 48, ny: int = 48) -> str:
    """CSV dump of the depth-truncated potential on a float-scale grid."""
    lines = ["x,y,value,grad_x,grad_y"]
    for x in np.linspace(-0.5, 1.5, nx):
        for y in np.linspace(-0.5, 1.5, ny):
            xf, yf = float(x), float(y)
            v = cons.potential_value(xf, yf, depth=depth)
            gx, gy = cons.potential_gradient(xf, yf, depth=depth)
            lines.append(f"{xf!r},{yf!r},{v!r},{gx!r},{gy!r}")
    return "\n".join(lines) + "\n"


def _probe_table(cons: PuConstruction, seed: int = 0) -> str:
    """CSV of exact-offset probes per round (coordinates as exact strings)."""
    rng = np.random.default_rng(seed)
    lines = ["round,offset_log2,x,y,grad_x,grad_y,band_dist"]
    for k in range(1, cons.depth + 1):
        rd = cons.rounds[k - 1]
        cx = _set_corner(rng, cons.ratio, rd.omega_depth)
        cy = _set_corner(rng, cons.ratio, rd.omega_depth)
        for j in range(0, 9):
            off = rd.mover_rho * _F(2, 1) ** j / 8
            x, y = cx + off, cy + off
            gx, gy = cons.potential_gradient(x, y, depth=k)
            band = _segment_distance((gx, gy), cons.rungs[k - 1].target, cons.rungs[k].target)
            lines.append(
                f"{k},{math.log2(float(off)):.3f},{str(x)},{str(y)},{gx!r},{gy!r},{band!r}"
            )
    return "\n".join(lines) + "\n"


def intervals_csv(cons: PuConstruction, round_index: int, limit: int = 64) -> str:
    """Display-resolution component intervals of the round's active region.

    Deep rounds have sub-float radii; components are listed for the clipped
    depth min(omega_depth, 8) at radius max(r_k, ratio^10) and labeled with
    the true exact radius so the artifact stays both readable and honest.
    """
    rd = cons.rounds[round_index - 1]
    depth = min(rd.omega_depth, 8)
    radius = max(rd.omega_radius, cons.ratio**10)
    comps = _components_near(_F(1, 2), depth, cons.ratio, radius, _F(2))
    lines = [
        f"# round {round_index}: display depth {depth}, display radius {float(radius)!r}, "
        f"true radius {str(rd.omega_radius)}",
        "left,right",
    ]
    for l, r in comps[:limit]:
        lines.append(f"{float(l)!r},{float(r)!r}")
    return "\n".join(lines) + "\n"


def write_artifacts(cons: PuConstruction, directory, *, seed: int = 0) -> dict:
    """Write constants.json, per-round interval CSVs, grid dumps, probe table,
    and a manifest; deterministic for a fixed (construction, seed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"constants.json": constants_json(cons)}
    for k in range(1, cons.depth + 1):
        files[f"intervals_round{k}.csv"] = intervals_csv(cons, k)
    for k in range(cons.depth + 1):
        files[f"grid_phi{k}.csv"] = grid_dump(cons, k)
    files["probes.csv"] = _probe_table(cons, seed=seed)
    for name, text in files.items():
        (directory / name).write_text(text)
    manifest = {
        "seed": seed,
        "bound": cons.bound_tag,
        "depth": cons.depth,
        "set_depth": cons.set_spec.depth,
        "files": sorted(files),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
