"""Singular-set geometry: Cantor families, distances, and neighborhood measure.

The 1-D building block is the two-ended Cantor set on [0, 1] with contraction
``ratio`` r: each interval keeps its two end subintervals of relative width
r.  Both endpoints of every interval survive to all depths, so the distance
from a point to the depth-n set is computed exactly by a single O(n) digit
descent: land in a child and recurse, or land in the middle gap and take the
nearer facing endpoint.

The planar four-corner set is the product C_n x C_n, whose distance is the
Euclidean combination of the two 1-D distances (exact, by the product
structure).  For the mollified construction potentials we also need the
Lebesgue measure of the rho-neighborhood B(C_n, rho), its prefix function
x -> lambda(B intersect (-inf, x]), the list of neighborhood components near
a window, and smoothed (C-infinity) versions of the indicator and its
primitive built from the package's smoothstep primitives.

Everything here is scalar and purely functional; depth is never materialized
as 2^n intervals (digit descent only), so deep truncations stay O(depth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from ._smoothstep import smoothstep, smoothstep_primitive
from .core import ContractError

__all__ = [
    "SingularSetSpec",
    "empty_set",
    "point_list_set",
    "cantor_product_set",
    "cantor1d_distance",
    "cantor1d_contains",
    "cantor1d_neighborhood_measure",
    "cantor1d_min_component_gap",
    "cantor1d_prefix_measure",
    "cantor1d_local_components",
    "smoothed_indicator_1d",
    "smoothed_cdf_1d",
]


# ---------------------------------------------------------------------------
# SingularSetSpec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingularSetSpec:
    """Geometric description of a target singular set.

    ``membership`` and ``dist`` are scalar queries; ``dist`` returns a lower
    bound on the Euclidean distance to the set (exact for the built-in
    families) and is 0 exactly where membership holds.
    """

    kind: str
    depth: int
    membership: Callable = field(repr=False)
    dist: Callable = field(repr=False)
    params: dict = field(default_factory=dict)


def empty_set() -> SingularSetSpec:
    return SingularSetSpec(
        kind="empty",
        depth=0,
        membership=lambda x, y: False,
        dist=lambda x, y: math.inf,
    )


def point_list_set(points) -> SingularSetSpec:
    pts = tuple((float(x), float(y)) for x, y in points)
    if not pts:
        return empty_set()

    def dist(x, y):
        return min(math.hypot(x - px, y - py) for px, py in pts)

    return SingularSetSpec(
        kind="point-list",
        depth=0,
        membership=lambda x, y: dist(x, y) == 0.0,
        dist=dist,
        params={"count": len(pts)},
    )


# ---------------------------------------------------------------------------
# 1-D two-ended Cantor set on [0, 1]
# ---------------------------------------------------------------------------


def _check_cantor_args(depth: int, ratio: float):
    if depth < 0:
        raise ContractError("depth must be non-negative")
    if not 0.0 < ratio <= 0.25:
        raise ContractError("ratio must lie in (0, 1/4]")


def cantor1d_distance(x: float, depth: int, ratio: float) -> float:
    """Exact distance from x to the depth-n Cantor set on [0, 1]."""
    _check_cantor_args(depth, ratio)
    x = float(x)
    a, w = 0.0, 1.0
    for _ in range(depth):
        rw = ratio * w
        left_end = a + rw
        right_start = a + w - rw
        if x <= left_end:
            w = rw  # descend into the left child
        elif x >= right_start:
            a, w = right_start, rw  # descend into the right child
        else:
            # In the middle gap: both facing endpoints persist to all depths.
            return min(x - left_end, right_start - x)
    if x < a:
        return a - x
    if x > a + w:
        return x - (a + w)
    return 0.0


def cantor1d_contains(x: float, depth: int, ratio: float) -> bool:
    return cantor1d_distance(x, depth, ratio) == 0.0


def cantor_product_set(depth: int, ratio: float = 0.25) -> SingularSetSpec:
    """Four-corner product set C_n x C_n in [0, 1]^2; exact queries."""
    _check_cantor_args(depth, ratio)

    def dist(x, y):
        return math.hypot(
            cantor1d_distance(x, depth, ratio), cantor1d_distance(y, depth, ratio)
        )

    def membership(x, y):
        return cantor1d_contains(x, depth, ratio) and cantor1d_contains(y, depth, ratio)

    return SingularSetSpec(
        kind="cantor-product",
        depth=depth,
        membership=membership,
        dist=dist,
        params={"ratio": ratio},
    )


# ---------------------------------------------------------------------------
# rho-neighborhood measure of the 1-D set
# ---------------------------------------------------------------------------


def _level_measures(depth: int, ratio: float, rho: float) -> list:
    """mu[j] = measure of B(C-part of one level-j cell, rho), j = 0..depth.

    All level-j cells are congruent; the neighborhood either fuses across the
    middle gap (then it is one interval of length w + 2 rho) or splits into
    the two children's neighborhoods.
    """
    mu = [0.0] * (depth + 1)
    w = ratio**depth
    mu[depth] = w + 2.0 * rho
    for j in range(depth - 1, -1, -1):
        w = ratio**j
        gap = w * (1.0 - 2.0 * ratio)
        if 2.0 * rho >= gap:
            mu[j] = w + 2.0 * rho
        else:
            mu[j] = 2.0 * mu[j + 1]
    return mu


def cantor1d_neighborhood_measure(depth: int, ratio: float, rho: float) -> float:
    """lambda(B(C_n, rho)) for the depth-n set on [0, 1].

    With rho = 0 this is the set's own length (2 ratio)^depth.
    """
    _check_cantor_args(depth, ratio)
    if rho < 0:
        raise ContractError("rho must be non-negative")
    return _level_measures(depth, ratio, rho)[0]


def cantor1d_min_component_gap(depth: int, ratio: float, rho: float) -> float:
    """Smallest gap between distinct components of B(C_n, rho).

    Fusing is monotone in level, so components are the neighborhoods of the
    cells at the first fused level j_f, and the tightest gap is between
    sibling cells one level up.  Returns +inf when the neighborhood is a
    single interval.
    """
    _check_cantor_args(depth, ratio)
    if rho <= 0.0:
        raise ContractError("component gap needs rho > 0")
    fused_level = depth
    for j in range(depth):
        if 2.0 * rho >= ratio**j * (1.0 - 2.0 * ratio):
            fused_level = j
            break
    if fused_level == 0:
        return math.inf
    return ratio ** (fused_level - 1) * (1.0 - 2.0 * ratio) - 2.0 * rho


def cantor1d_prefix_measure(x: float, depth: int, ratio: float, rho: float) -> float:
    """lambda(B(C_n, rho) intersect (-inf, x]), exact tree walk."""
    _check_cantor_args(depth, ratio)
    if rho <= 0.0:
        raise ContractError("prefix measure needs rho > 0")
    mu = _level_measures(depth, ratio, rho)

    def walk(x, a, w, j):
        lo, hi = a - rho, a + w + rho
        if x <= lo:
            return 0.0
        if x >= hi:
            return mu[j]
        gap = w * (1.0 - 2.0 * ratio)
        if j == depth or 2.0 * rho >= gap:
            # Fused: one solid interval [a - rho, a + w + rho].
            return x - lo
        rw = ratio * w
        return walk(x, a, rw, j + 1) + walk(x, a + w - rw, rw, j + 1)

    return walk(float(x), 0.0, 1.0, 0)


def cantor1d_local_components(
    x0: float, x1: float, depth: int, ratio: float, rho: float
) -> list:
    """Components [l, r] of B(C_n, rho) meeting the window [x0, x1].

    Components are maximal intervals of the neighborhood; the list is sorted
    and includes components only partially inside the window (with their true
    endpoints, which may lie outside it).
    """
    _check_cantor_args(depth, ratio)
    if rho <= 0.0:
        raise ContractError("components need rho > 0")
    out: list = []

    def walk(a, w, j):
        lo, hi = a - rho, a + w + rho
        if hi < x0 or lo > x1:
            return
        gap = w * (1.0 - 2.0 * ratio)
        if j == depth or 2.0 * rho >= gap:
            out.append((lo, hi))
            return
        rw = ratio * w
        walk(a, rw, j + 1)
        walk(a + w - rw, rw, j + 1)

    walk(0.0, 1.0, 0)
    # Merge any touching components (possible when rho exactly bridges a gap).
    merged: list = []
    for l, r in sorted(out):
        if merged and l <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(r, merged[-1][1]))
        else:
            merged.append((l, r))
    return [(l, r) for l, r in merged if r >= x0 and l <= x1]


# ---------------------------------------------------------------------------
# Smoothed indicator and its primitive
# ---------------------------------------------------------------------------


def _window_components(x, depth, ratio, rho, sigma):
    pad = 4.0 * sigma
    return cantor1d_local_components(x - pad, x + pad, depth, ratio, rho)


def smoothed_indicator_1d(
    x: float, depth: int, ratio: float, rho: float, sigma: float
) -> float:
    """C-infinity indicator of B(C_n, rho): 1 at distance <= rho - 2 sigma
    from the set, 0 outside B(C_n, rho + sigma).

    Per neighborhood component [l, r], the profile is
    step((x-l)/sigma) - step((x-r)/sigma); component supports must not
    overlap, which requires sigma <= (minimal component gap) / 2.
    """
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    total = 0.0
    for l, r in _window_components(x, depth, ratio, rho, sigma):
        total += smoothstep((x - l) / sigma) - smoothstep((x - r) / sigma)
    return min(1.0, max(0.0, total))


def smoothed_cdf_1d(x: float, depth: int, ratio: float, rho: float, sigma: float) -> float:
    """Primitive of :func:`smoothed_indicator_1d` vanishing at -infinity.

    Components fully left of the smoothing window contribute their exact
    length (the smoothed profile integrates to r - l); the boundary
    components contribute through the smoothstep primitive.
    """
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    comps = _window_components(x, depth, ratio, rho, sigma)
    if comps:
        cut = comps[0][0] - 2.0 * sigma
    else:
        cut = x
    left = cantor1d_prefix_measure(min(cut, 1.0 + rho), depth, ratio, rho) if cut > -rho else 0.0
    total = left
    for l, r in comps:
        total += sigma * (
            smoothstep_primitive((x - l) / sigma) - smoothstep_primitive((x - r) / sigma)
        )
    return total
