"""Finite-depth tower construction of a potential steep along a fractal curve.

Overview
--------
The construction refines the unit interval through ``depth`` rounds.  Round
``k`` writes every component of the previous round's set ``T_{k-1}`` as a
union of equal cells, each shorter than ``band[k-1] / a_slope[k]``, and keeps
a concentric middle portion of each cell; the kept fraction is
``(a_slope[k-1] - b_slope[k]) / a_slope[k]``.  On the tower sits a family of
increasingly steep monotone curves: curve ``k`` climbs with slope
``a_slope[k]`` exactly on ``T_k``, agrees with curve ``k-1`` at every cell
boundary and outside ``T_{k-1}``, and keeps its slope within
``[b_slope[k], a_slope[k]]`` on ``T_{k-1}``.  A scalar potential is the sum of
vertical riser profiles centered on slightly shifted carrier copies of the
curves, attenuated away from the deeper curve graphs by smooth cutoffs.
Every stated inequality of the recursion (slope agreement, carrier drift,
vanishing on the deepest graph, and the two-sided gradient bands on each
neighbourhood shell) is checked numerically with certified enclosures.

Numerics
--------
Cell geometry collapses far below float resolution after two rounds (cell
widths reach ~1e-22 at round 2 and ~1e-44 at round 3), so horizontal
positions are exact `fractions.Fraction` values and curve values are carried
as an exact rational base plus a small float offset.  Differences of such
pairs are computed by exact rational subtraction of the bases, so vertical
gaps of order 1e-43 remain meaningful even though the absolute coordinates
are of order one.  All smooth blending uses the compactly supported bump
primitives from ``_smoothstep``, whose unit step has an exactly linear tail;
plateau values of the curve profiles are therefore exact rationals.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from ._smoothstep import smoothstep, smoothstep_deriv, smoothstep_primitive
from .core import ContractError, SuperlinearBound

__all__ = [
    "TowerLevel",
    "TowerPoint",
    "NonPuConstruction",
    "CheckResult",
    "NonPuCheckReport",
    "build_nonpu_construction",
    "run_level_checks",
    "field_slope_probe",
]


# Largest slope of the unit step; 2x this bounds the cutoff gradient factor.
_STEP_SLOPE = float(smoothstep_deriv(0.0))

# Fractional guard bands used when a float comparison certifies a strict
# containment (inside / outside a halo, inside a riser band).
_IN_GUARD = 0.999
_OUT_GUARD = 1.001


def _unit_cut(t: float) -> float:
    """Smooth cut: 1 for t <= 0, 0 for t >= 1, strictly monotone between."""
    return 1.0 - float(smoothstep(2.0 * t - 1.0))


def _unit_cut_slope(t: float) -> float:
    return -2.0 * float(smoothstep_deriv(2.0 * t - 1.0))


# ---------------------------------------------------------------------------
# Level constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TowerLevel:
    """Exact constants describing one refinement round.

    ``width`` is the cell width of the round (level 0: the unit interval),
    ``margin`` the kept-out border of each cell, ``middle`` the kept
    fraction, ``length`` the component length of ``T_k``, ``halo`` the radius
    of the graph neighbourhood of round ``k`` (None at level 0, where it is
    unbounded), and ``band`` the vertical half-width on which the round-k
    riser climbs at full gain.  ``count`` is the total number of components
    of ``T_k``.
    """

    k: int
    a_slope: int
    b_slope: int
    c_gain: int
    cells: int | None
    width: Fraction
    margin: Fraction
    middle: Fraction
    length: Fraction
    halo: Fraction | None
    band: Fraction
    count: int
    # normalized profile constants (per-cell coordinates)
    collar: Fraction  # collar + ramp width, as a fraction of the cell
    low_slope: Fraction  # flat slope on the margin between the two ramps

    @property
    def margin_fraction(self) -> Fraction:
        return self.margin / self.width

    def as_dict(self) -> dict:
        halo = self.halo
        return {
            "level": self.k,
            "a_slope": self.a_slope,
            "b_slope": self.b_slope,
            "c_gain": self.c_gain,
            "cells": self.cells,
            "width": str(self.width),
            "width_float": float(self.width),
            "margin": str(self.margin),
            "middle": str(self.middle),
            "component_length": str(self.length),
            "component_length_float": float(self.length),
            "halo": None if halo is None else str(halo),
            "halo_float": None if halo is None else float(halo),
            "band": str(self.band),
            "band_float": float(self.band),
            "count": self.count,
            "collar": str(self.collar),
            "low_slope": str(self.low_slope),
            "low_slope_float": float(self.low_slope),
        }


@dataclass(frozen=True)
class TowerPoint:
    """Exact location of an abscissa within the interval tower.

    ``idx[j-1]`` and ``w[j-1]`` give the cell index and the normalized
    in-cell coordinate at level ``j`` (1-based), for every level whose cell
    grid contains the point; ``home`` is the deepest level ``k`` with
    ``x in T_k`` (-1 if the point lies outside the unit interval).
    ``cell_x`` and ``cell_chi`` are the exact abscissa and curve value at the
    left endpoint of each level's cell (curves ``j-1`` and ``j`` agree
    there).
    """

    x: Fraction
    idx: tuple[int, ...]
    w: tuple[Fraction, ...]
    home: int
    cell_x: tuple[Fraction, ...]
    cell_chi: tuple[Fraction, ...]

    @property
    def reach(self) -> int:
        return len(self.idx)


@dataclass
class _LevelEval:
    """Per-level data of the carrier chain at a fixed abscissa."""

    chi_base: Fraction
    chi_off: float
    chi_slope: float
    corr: float  # carrier shift: potential of the previous round / gain
    dcorr: float  # x-derivative of the shift


@dataclass
class _Dist:
    """Certified enclosure of the distance to a round's curve graph."""

    lo: float
    hi: float
    ux: float  # unit vector from the nearest graph point to the query
    uy: float


@dataclass
class _TermBox:
    """Interval data for one riser term at a sample point."""

    j: int
    t_lo: float  # cutoff * riser slope, lower bound
    t_hi: float
    z_lo: float  # carrier slope bounds
    z_hi: float
    crumb: float  # |grad cutoff| * |riser value| bound (0 when certified)


# ---------------------------------------------------------------------------
# Main construction
# ---------------------------------------------------------------------------


class NonPuConstruction:
    """Depth-truncated steep-curve construction over the unit interval.

    Parameters
    ----------
    omega:
        Superlinear bound; its derivative enters the gain budget
        (``c_gain``) of every round.  Must vanish at 0.
    depth:
        Number of refinement rounds K >= 1.
    ck_multiplier:
        Scale factor applied to the gain budget before flooring.  Values
        below 1 violate the budget inequality and raise ``ContractError``;
        values above 1 build a construction with extra headroom.
    """

    def __init__(
        self,
        omega: SuperlinearBound,
        depth: int,
        *,
        ck_multiplier: float = 1.0,
    ):
        if not isinstance(omega, SuperlinearBound):
            raise ContractError("omega must be a SuperlinearBound")
        if not isinstance(depth, int) or depth < 1:
            raise ContractError(f"depth must be an integer >= 1, got {depth!r}")
        if abs(float(omega(0.0))) > 1e-300:
            raise ContractError("omega must vanish at 0")
        if not math.isfinite(float(ck_multiplier)) or ck_multiplier <= 0:
            raise ContractError("ck_multiplier must be a positive finite number")
        self.omega = omega
        self.depth = depth
        self.ck_multiplier = float(ck_multiplier)

        top = depth + 2
        self.a = [4 ** (k + 5) for k in range(top + 1)]
        self.b = [2 ** (k + 4) for k in range(top + 1)]
        self.c = [0]
        self._omega_caps = []  # ceil(omega'(6 a_slope[k+2])) per round
        for k in range(1, top + 1):
            w = float(omega.deriv(6 * 4 ** (k + 7)))
            if not math.isfinite(w) or w < 0:
                raise ContractError("omega.deriv must be finite and >= 0 on the budget points")
            wc = int(math.ceil(w))
            self._omega_caps.append(wc)
            csum = sum(self.c)
            load = sum(cj * (1 + aj) for cj, aj in zip(self.c, self.a)) + (1 + csum) * self.a[k]
            base = 8 * (wc + 1 + load)
            if self.ck_multiplier == 1.0:
                ck = base + 1
            else:
                ck = int(math.floor(self.ck_multiplier * float(base))) + 1
            # budget check, in exact arithmetic: the gain must strictly
            # dominate eight times the accumulated load
            if ck <= 8 * (Fraction(w) + 1 + load):
                raise ContractError(
                    f"gain budget violated at round {k}: "
                    f"c_gain={ck} <= 8*(omega'+1+load)={float(8 * (w + 1 + load)):.6g}"
                )
            self.c.append(ck)

        # geometric rounds 0..depth
        levels: list[TowerLevel] = [
            TowerLevel(
                k=0,
                a_slope=self.a[0],
                b_slope=self.b[0],
                c_gain=0,
                cells=None,
                width=Fraction(1),
                margin=Fraction(0),
                middle=Fraction(1),
                length=Fraction(1),
                halo=None,
                band=Fraction(1),
                count=1,
                collar=Fraction(0),
                low_slope=Fraction(self.a[0]),
            )
        ]
        for k in range(1, depth + 1):
            prev = levels[k - 1]
            cells = int(prev.length * self.a[k] / prev.band) + 1
            width = prev.length / cells
            if not width * self.a[k] < prev.band:
                raise ContractError(f"cell width escaped its band at round {k}")
            middle = Fraction(self.a[k - 1] - self.b[k], self.a[k])
            margin = width * (1 - middle) / 2
            length = middle * width
            halo = min(margin, prev.band) / 2
            band = Fraction(1, 2 ** (k + 4)) * halo / self.c[k + 1]
            collar = Fraction(self.b[k], 32 * self.a[k])
            mn = (1 - middle) / 2
            low = (Fraction(self.b[k], 2) - collar * Fraction(3 * self.a[k - 1] + self.a[k], 2)) / (
                mn - 2 * collar
            )
            if not (self.b[k] <= low <= self.a[k - 1]):
                raise ContractError(
                    f"margin profile slope {float(low):.6g} escapes "
                    f"[{self.b[k]}, {self.a[k - 1]}] at round {k}"
                )
            # exact climb identity over one margin: collar + two ramps + flat
            climb = (
                self.a[k - 1] * collar
                + collar * (self.a[k - 1] + low) / 2
                + low * (mn - 3 * collar)
                + collar * (low + self.a[k]) / 2
            )
            if climb != Fraction(self.b[k], 2):
                raise ContractError(f"margin climb identity failed at round {k}")
            levels.append(
                TowerLevel(
                    k=k,
                    a_slope=self.a[k],
                    b_slope=self.b[k],
                    c_gain=self.c[k],
                    cells=cells,
                    width=width,
                    margin=margin,
                    middle=middle,
                    length=length,
                    halo=halo,
                    band=band,
                    count=prev.count * cells,
                    collar=collar,
                    low_slope=low,
                )
            )
        self.levels: tuple[TowerLevel, ...] = tuple(levels)

        # float mirrors for hot paths
        self._wf = [float(lv.width) for lv in levels]
        self._mf = [float(lv.margin) for lv in levels]
        self._lf = [float(lv.length) for lv in levels]
        self._hf = [math.inf] + [float(lv.halo) for lv in levels[1:]]
        self._ef = [float(lv.band) for lv in levels]
        self._mnf = [float(lv.margin_fraction) for lv in levels]
        self._tnf = [float(lv.collar) for lv in levels]
        self._btf = [float(lv.low_slope) for lv in levels]
        self._diag = [math.hypot(1.0, a) for a in self.a]
        # carrier slope drift bound per round (0 for round 1, where the
        # carrier coincides with the curve)
        self._zslack = [0.0, 0.0]
        for j in range(2, depth + 1):
            csum = sum(self.c[:j])
            load = sum(cj * (1 + aj) for cj, aj in zip(self.c[:j], self.a[:j]))
            self._zslack.append(float(Fraction(1 + load + (1 + csum) * self.a[j], self.c[j])))

    # -- basic geometry ----------------------------------------------------

    def level(self, k: int) -> TowerLevel:
        return self.levels[k]

    def locate(self, x) -> TowerPoint:
        """Resolve an abscissa into exact tower coordinates."""
        x = Fraction(x)
        if x < 0 or x > 1:
            return TowerPoint(x, (), (), -1, (), ())
        idx: list[int] = []
        ws: list[Fraction] = []
        cxs: list[Fraction] = []
        cchis: list[Fraction] = []
        home = 0
        comp_x = Fraction(0)
        comp_chi = Fraction(0)
        c = x
        for j in range(1, self.depth + 1):
            lv = self.levels[j]
            t = c * lv.cells
            i = min(int(t), lv.cells - 1)
            wj = t - i
            cell_x = comp_x + i * lv.width
            cell_chi = comp_chi + i * lv.width * self.a[j - 1]
            idx.append(i)
            ws.append(wj)
            cxs.append(cell_x)
            cchis.append(cell_chi)
            mn = lv.margin_fraction
            if mn <= wj <= 1 - mn:
                home = j
                comp_x = cell_x + lv.margin
                comp_chi = cell_chi + lv.width * lv.b_slope / 2
                c = (wj - mn) / lv.middle
            else:
                break
        return TowerPoint(x, tuple(idx), tuple(ws), home, tuple(cxs), tuple(cchis))

    def fiber_point(self, address: Sequence[int], position=Fraction(1, 2)) -> TowerPoint:
        """Exact point of the ``T_len(address)`` component named by ``address``.

        ``position`` in [0, 1] places the point within the component.
        """
        lo, hi = self.component_interval(address)
        pos = Fraction(position)
        if not 0 <= pos <= 1:
            raise ContractError("position must lie in [0, 1]")
        return self.locate(lo + pos * (hi - lo))

    def component_interval(self, address: Sequence[int]) -> tuple[Fraction, Fraction]:
        """Exact endpoints of the ``T_k`` component with the given address."""
        k = len(address)
        if k > self.depth:
            raise ContractError(f"address longer than depth {self.depth}")
        left = Fraction(0)
        for j, i in enumerate(address, start=1):
            lv = self.levels[j]
            if not 0 <= i < lv.cells:
                raise ContractError(f"cell index {i} out of range at level {j}")
            left += i * lv.width + lv.margin
        return left, left + self.levels[k].length

    def components(self, k: int, limit: int | None = None) -> Iterable[tuple[tuple[int, ...], Fraction, Fraction]]:
        """Yield (address, left, right) for T_k components in address order."""
        if not 0 <= k <= self.depth:
            raise ContractError(f"level {k} outside 0..{self.depth}")
        counts = [self.levels[j].cells for j in range(1, k + 1)]
        total = self.levels[k].count if limit is None else min(limit, self.levels[k].count)
        address = [0] * k
        for n in range(total):
            lo, hi = self.component_interval(address)
            yield tuple(address), lo, hi
            for j in reversed(range(k)):
                address[j] += 1
                if address[j] < counts[j]:
                    break
                address[j] = 0

    # -- curves ------------------------------------------------------------

    def curve_parts(self, pt: TowerPoint, k: int) -> tuple[Fraction, float]:
        """Curve k at the point, as (exact base, float offset)."""
        if k < 0 or k > self.depth:
            raise ContractError(f"curve level {k} outside 0..{self.depth}")
        if k == 0 or pt.reach == 0:
            return self.a[0] * pt.x, 0.0
        j = min(k, pt.reach)
        lv = self.levels[j]
        w = pt.w[j - 1]
        base = pt.cell_chi[j - 1]
        mn = lv.margin_fraction
        if mn <= w <= 1 - mn:
            return base + lv.width * (Fraction(lv.b_slope, 2) + lv.a_slope * (w - mn)), 0.0
        return base, self._wf[j] * self._profile_climb(j, float(w))

    def curve_value(self, k: int, x) -> float:
        base, off = self.curve_parts(self.locate(x), k)
        return float(base) + off

    def curve_slope_at(self, pt: TowerPoint, k: int) -> float:
        if k < 0 or k > self.depth:
            raise ContractError(f"curve level {k} outside 0..{self.depth}")
        if k == 0 or pt.reach == 0:
            return float(self.a[0])
        j = min(k, pt.reach)
        w = pt.w[j - 1]
        mn = self.levels[j].margin_fraction
        if mn <= w <= 1 - mn:
            return float(self.a[j])
        return self._profile_slope(j, float(w))

    def curve_slope(self, k: int, x) -> float:
        return self.curve_slope_at(self.locate(x), k)

    def _profile_slope(self, j: int, w: float) -> float:
        """Slope of curve j within a level-j cell, per unit abscissa."""
        if w > 0.5:
            w = 1.0 - w
        mn = self._mnf[j]
        tn = self._tnf[j]
        if w >= mn:
            return float(self.a[j])
        a_prev = float(self.a[j - 1])
        bt = self._btf[j]
        if w <= tn:
            return a_prev
        if w <= 2.0 * tn:
            return a_prev + (bt - a_prev) * float(smoothstep(2.0 * (w - tn) / tn - 1.0))
        if w <= mn - tn:
            return bt
        return bt + (float(self.a[j]) - bt) * float(smoothstep(2.0 * (w - (mn - tn)) / tn - 1.0))

    def _profile_climb(self, j: int, w: float) -> float:
        """Climb of curve j from the cell's left edge, in slope*cell units."""
        a_prev = float(self.a[j - 1])
        if w > 0.5:
            return a_prev - self._profile_climb(j, 1.0 - w)
        mn = self._mnf[j]
        tn = self._tnf[j]
        b_half = 0.5 * float(self.b[j])
        if w >= mn:
            return b_half + float(self.a[j]) * (w - mn)
        bt = self._btf[j]
        if w <= tn:
            return a_prev * w
        p1 = a_prev * tn
        if w <= 2.0 * tn:
            h = float(smoothstep_primitive(2.0 * (w - tn) / tn - 1.0))
            return p1 + a_prev * (w - tn) + (bt - a_prev) * 0.5 * tn * h
        p2 = p1 + 0.5 * tn * (a_prev + bt)
        if w <= mn - tn:
            return p2 + bt * (w - 2.0 * tn)
        p3 = p2 + bt * (mn - 3.0 * tn)
        h = float(smoothstep_primitive(2.0 * (w - (mn - tn)) / tn - 1.0))
        return p3 + bt * (w - (mn - tn)) + (float(self.a[j]) - bt) * 0.5 * tn * h

    # -- risers ------------------------------------------------------------

    def riser_slope(self, k: int, t):
        """Derivative of the round-k riser: full gain inside the band,
        smoothly zero outside twice the band."""
        if k < 1:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        band = self._ef[k - 1]
        gain = float(self.c[k])
        s = np.abs(np.asarray(t, dtype=float)) / band
        out = gain * (1.0 - smoothstep(2.0 * (s - 1.0) - 1.0))
        return out if np.ndim(t) else float(out)

    def riser_value(self, k: int, t):
        if k < 1:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        band = self._ef[k - 1]
        gain = float(self.c[k])
        tt = np.asarray(t, dtype=float)
        s = np.abs(tt) / band
        # the middle branch equals 1.5 exactly for s >= 2 (the primitive has
        # an exact linear tail), but loses that identity to rounding once
        # 2s - 3 stops being representable; saturate explicitly instead
        g = np.where(
            s <= 1.0,
            s,
            np.where(s >= 2.0, 1.5, s - 0.5 * smoothstep_primitive(2.0 * s - 3.0)),
        )
        out = np.sign(tt) * gain * band * g
        return out if np.ndim(t) else float(out)

    # -- cutoffs and graph distance -----------------------------------------

    def _segment_dist(self, j: int, dx: float, dy: float) -> tuple[float, float, float]:
        """Distance from (dx, dy) to the segment from (0,0) along slope
        a_slope[j] with horizontal extent length[j]; returns (d, nx, ny)."""
        aj = float(self.a[j])
        t = (dx + aj * dy) / (1.0 + aj * aj)
        t = min(max(t, 0.0), self._lf[j])
        rx = dx - t
        ry = dy - aj * t
        d = math.hypot(rx, ry)
        if d <= 0.0:
            return 0.0, 0.0, 1.0
        return d, rx / d, ry / d

    def _component_candidates(
        self,
        j: int,
        comp_chi: Fraction,
        hx_int: int,
        hx_frac: float,
        ybase: Fraction,
        yoff: float,
        edges: bool,
    ) -> list[tuple[float, float, float]]:
        """Segment distances from a query to the round-j graph pieces inside
        one T_{j-1} component.

        ``hx_int + hx_frac`` is the query abscissa in cell units from the
        component's left end (hx_int exact, possibly negative for queries
        left of the component); ``edges`` adds the component's outermost
        cells to the candidate set."""
        lv = self.levels[j]
        n = lv.cells
        wf = self._wf[j]
        rise = wf * float(self.a[j - 1])
        vy = float(ybase - comp_chi) + yoff
        cands: set[int] = set()
        for di in range(-2, 3):
            ii = hx_int + di
            if 0 <= ii < n:
                cands.add(ii)
        base_off = 0.5 * wf * float(self.b[j])
        if rise > 0.0:
            iy = int(math.floor((vy - base_off) / rise))
            for di in range(-2, 3):
                ii = iy + di
                if 0 <= ii < n:
                    cands.add(ii)
        if edges:
            cands.add(0)
            cands.add(n - 1)
        out = []
        mf = self._mf[j]
        for i in cands:
            di = hx_int - i
            if abs(di) <= 4:
                # exact local reduction for near cells
                dx = float(di * lv.width - lv.margin) + hx_frac * wf
                dy = float(ybase - comp_chi - i * lv.width * self.a[j - 1] - lv.width * self.b[j] / 2) + yoff
            else:
                dx = (di + hx_frac) * wf - mf
                dy = vy - i * rise - base_off
            out.append(self._segment_dist(j, dx, dy))
        return out

    def graph_distance(self, pt: TowerPoint, ybase: Fraction, yoff: float, j: int) -> _Dist:
        """Certified enclosure of dist((x, y), graph of curve j over T_j)."""
        if j < 1 or j > self.depth:
            raise ContractError(f"graph level {j} outside 1..{self.depth}")
        lv = self.levels[j]
        far = 2.0 * self._hf[j - 1] if j >= 2 else math.inf
        reach = pt.reach
        if reach < j - 1:
            # the abscissa already left the tower two rounds up: the whole
            # graph is at least two previous-round halos away
            return _Dist(far * _IN_GUARD, math.inf, 0.0, 0.0)
        results: list[tuple[float, float, float]] = []
        floor = math.inf
        if reach >= j:
            comp_chi = pt.cell_chi[j - 1] - pt.idx[j - 1] * lv.width * self.a[j - 1]
            results += self._component_candidates(
                j, comp_chi, pt.idx[j - 1], float(pt.w[j - 1]), ybase, yoff, edges=False
            )
            floor = 2.0 * self._wf[j]  # non-candidate cells of this component
            # neighbouring components across the parent margins
            if j >= 2:
                pw = float(pt.w[j - 2])
                up = self.levels[j - 1]
                for step in (-1, 1):
                    i2 = pt.idx[j - 2] + step
                    if not 0 <= i2 < up.cells:
                        continue
                    edge = pw if step < 0 else 1.0 - pw
                    gap = (edge + self._mnf[j - 1]) * self._wf[j - 1]
                    if gap > far:
                        floor = min(floor, max(gap, 0.0))
                        continue
                    comp2_chi = (
                        pt.cell_chi[j - 2]
                        + step * up.width * self.a[j - 2]
                        + up.width * self.b[j - 1] / 2
                    )
                    # express the query in the neighbour's cell units
                    offs = (pt.w[j - 2] - step) * up.width - up.margin
                    hx_units = offs / lv.width
                    hxi = int(math.floor(hx_units))
                    results += self._component_candidates(
                        j, comp2_chi, hxi, float(hx_units - hxi), ybase, yoff, edges=True
                    )
        else:
            # reach == j-1: the point sits in a level-(j-1) cell margin (or
            # outside the unit interval when j == 1); the nearest graphs
            # live in the flanking middles
            up = self.levels[j - 1]
            w_up = pt.w[j - 2] if j >= 2 else pt.x
            cell_chi = pt.cell_chi[j - 2] if j >= 2 else Fraction(0)
            width_up = up.width
            # own cell's middle
            comp_chi = cell_chi + width_up * up.b_slope / 2 if j >= 2 else Fraction(0)
            mn = up.margin_fraction
            offs = (w_up - mn) * width_up
            hx_units = offs / lv.width
            hxi = int(math.floor(hx_units))
            results += self._component_candidates(
                j, comp_chi, hxi, float(hx_units - hxi), ybase, yoff, edges=True
            )
            floor = 2.0 * self._wf[j]
            # adjacent cell's middle on the near side
            if j >= 2:
                step = -1 if w_up < Fraction(1, 2) else 1
                i2 = pt.idx[j - 2] + step
                if 0 <= i2 < up.cells:
                    comp2_chi = (
                        cell_chi + step * width_up * self.a[j - 2] + width_up * up.b_slope / 2
                    )
                    offs2 = (w_up - step - mn) * width_up
                    hx2 = offs2 / lv.width
                    hxi2 = int(math.floor(hx2))
                    results += self._component_candidates(
                        j, comp2_chi, hxi2, float(hx2 - hxi2), ybase, yoff, edges=True
                    )
        if not results:
            return _Dist(far * _IN_GUARD, math.inf, 0.0, 0.0)
        d, ux, uy = min(results, key=lambda r: r[0])
        lo = min(d, floor * _IN_GUARD)
        return _Dist(lo, d, ux, uy)

    def cutoff_value(self, k: int, x, y) -> float:
        """Cutoff factor of round k at a float point (1 near the graph)."""
        if k < 2:
            return 1.0
        pt = self.locate(x)
        dist = self.graph_distance(pt, Fraction(y), 0.0, k)
        return _unit_cut((dist.hi - self._hf[k]) / self._hf[k - 1])

    # -- carrier chain and potential ----------------------------------------

    def _chain(self, pt: TowerPoint, upto: int) -> list[_LevelEval]:
        recs: list[_LevelEval] = []
        for j in range(1, upto + 1):
            cb, co = self.curve_parts(pt, j)
            cs = self.curve_slope_at(pt, j)
            if j == 1:
                corr = dcorr = 0.0
            else:
                val, fx, fy = self._phi_terms(pt, cb, co, j - 1, recs, need_grad=True)
                corr = val / self.c[j]
                dcorr = (fx + fy * cs) / self.c[j]
            recs.append(_LevelEval(cb, co, cs, corr, dcorr))
        return recs

    def _phi_terms(
        self,
        pt: TowerPoint,
        ybase: Fraction,
        yoff: float,
        upto: int,
        chain: list[_LevelEval],
        need_grad: bool,
    ) -> tuple[float, float, float]:
        val = 0.0
        fx = 0.0
        fy = 0.0
        for j in range(1, upto + 1):
            lev = chain[j - 1]
            arg = float(ybase - lev.chi_base) + (yoff - lev.chi_off - lev.corr)
            b = self.riser_value(j, arg)
            bp = self.riser_slope(j, arg)
            if j >= 2:
                halo_in = self._hf[j]
                halo_out = self._hf[j - 1]
                # cheap two-sided vertical bounds on the graph distance
                # saturate the cutoff at most points, skipping segment search
                voff = abs(arg + lev.corr)
                a = ax = ay = None
                if _unit_cut((voff / self._diag[j] - halo_in) / halo_out) == 0.0:
                    continue
                if pt.home >= j and _unit_cut((voff - halo_in) / halo_out) == 1.0:
                    a, ax, ay = 1.0, 0.0, 0.0
                if a is None:
                    dist = self.graph_distance(pt, ybase, yoff, j)
                    t = (dist.hi - halo_in) / halo_out
                    a = _unit_cut(t)
                    if need_grad and 0.0 < a < 1.0:
                        qs = _unit_cut_slope(t) / halo_out
                        ax = qs * dist.ux
                        ay = qs * dist.uy
                    else:
                        ax = ay = 0.0
            else:
                a = 1.0
                ax = ay = 0.0
            if a == 0.0:
                continue
            zslope = lev.chi_slope + lev.dcorr
            val += a * b
            if need_grad:
                fx += ax * b - a * bp * zslope
                fy += ay * b + a * bp
        return val, fx, fy

    def potential_value(self, x, y, depth: int | None = None) -> float:
        """Potential of round ``depth`` (default: the full construction)."""
        k = self.depth if depth is None else depth
        if k < 0 or k > self.depth:
            raise ContractError(f"potential depth {k} outside 0..{self.depth}")
        pt = self.locate(x)
        chain = self._chain(pt, k)
        val, _, _ = self._phi_terms(pt, Fraction(y), 0.0, k, chain, need_grad=False)
        return val

    def potential_gradient(self, x, y, depth: int | None = None) -> tuple[float, float]:
        k = self.depth if depth is None else depth
        if k < 0 or k > self.depth:
            raise ContractError(f"potential depth {k} outside 0..{self.depth}")
        pt = self.locate(x)
        chain = self._chain(pt, k)
        _, fx, fy = self._phi_terms(pt, Fraction(y), 0.0, k, chain, need_grad=True)
        return fx, fy

    def steepness(self, x, y) -> float:
        """Field slope -2 phi_x / phi_y of the assembled potential."""
        fx, fy = self.potential_gradient(x, y)
        if fy == 0.0:
            raise ContractError(f"field slope undefined where phi_y = 0 (x={x}, y={y})")
        return -2.0 * fx / fy

    # -- structured evaluation (exact vertical offsets) ----------------------

    def offset_point(self, pt: TowerPoint, ref_level: int, v: float) -> tuple[Fraction, float]:
        """(base, offset) pair for y = curve_{ref_level}(x) + v."""
        cb, co = self.curve_parts(pt, ref_level)
        return cb, co + v

    def value_at_offset(self, pt: TowerPoint, ref_level: int, v: float, depth: int | None = None):
        k = self.depth if depth is None else depth
        chain = self._chain(pt, k)
        ybase, yoff = self.offset_point(pt, ref_level, v)
        return self._phi_terms(pt, ybase, yoff, k, chain, need_grad=True)

    # -- certified shell boxes ----------------------------------------------

    def shell_boxes(
        self, pt: TowerPoint, q: int, v: float
    ) -> tuple[list[_TermBox], dict]:
        """Interval data for every riser term at y = curve_q(x) + v.

        Returns the per-term boxes and a certification record.  The caller
        must have placed the point inside the round-q neighbourhood and (for
        q < depth) outside the round-(q+1) neighbourhood; the record reports
        the certified bounds actually achieved.
        """
        K = self.depth
        if not 0 <= q <= K:
            raise ContractError(f"shell index {q} outside 0..{K}")
        chain = self._chain(pt, K)
        ref_level = max(q, 1)  # shell 0 offsets are measured from curve 1
        ybase, yoff = self.offset_point(pt, ref_level, v)
        cert: dict = {"q": q, "v": v, "in_q": None, "out_q1": None}
        if q >= 1:
            if pt.home < q:
                raise ContractError("shell sample abscissa must lie in T_q")
            cert["in_q"] = abs(v) <= _IN_GUARD * self._hf[q]
        if q < K:
            cb1, co1 = self.curve_parts(pt, q + 1)
            v_next = float(ybase - cb1) + (yoff - co1)
            dlo = abs(v_next) / self._diag[q + 1]
            cert["out_q1"] = dlo >= _OUT_GUARD * self._hf[q + 1]
        boxes: list[_TermBox] = []
        for j in range(1, K + 1):
            lev = chain[j - 1]
            arg = float(ybase - lev.chi_base) + (yoff - lev.chi_off - lev.corr)
            band = self._ef[j - 1]
            gain = float(self.c[j])
            voff = float(ybase - lev.chi_base) + (yoff - lev.chi_off)
            if j == 1:
                # the first cutoff is identically 1 and the first carrier is
                # the first curve itself: the term value is exact
                bp = float(self.riser_slope(1, arg))
                boxes.append(_TermBox(1, bp, bp, lev.chi_slope, lev.chi_slope, 0.0))
                continue
            zs = self._zslack[j]
            z_lo = lev.chi_slope - zs
            z_hi = lev.chi_slope + zs
            halo_in = self._hf[j]
            halo_out = self._hf[j - 1]
            if j <= q:
                # certified full term: the point rides inside the round-j
                # halo and the round-j riser band
                if abs(arg) > 0.998 * band:
                    raise ContractError(
                        f"shell sample drifted out of the round-{j} riser band"
                    )
                if abs(voff) > _IN_GUARD * halo_in:
                    raise ContractError(
                        f"shell sample drifted out of the round-{j} halo"
                    )
                boxes.append(_TermBox(j, gain, gain, z_lo, z_hi, 0.0))
                continue
            # vertical offset from curve j bounds the graph distance below
            d_lo = abs(voff) / self._diag[j]
            if pt.reach < j - 1:
                d_lo = max(d_lo, 2.0 * self._hf[j - 1] * _IN_GUARD)
            if d_lo >= _OUT_GUARD * (halo_in + halo_out):
                # cutoff certified zero: the term vanishes entirely
                boxes.append(_TermBox(j, 0.0, 0.0, z_lo, z_hi, 0.0))
                continue
            # riser slope interval from the exact argument
            s = abs(arg) / band
            bp_hi = gain if s < 2.002 else 0.0
            bp_lo = gain if s <= 0.998 else 0.0
            a_hi = 1.0
            a_lo = 1.0 if (pt.home >= j and abs(voff) <= _IN_GUARD * halo_in) else 0.0
            crumb = 0.0
            if a_hi > a_lo:
                cap = gain * min(abs(arg) * 1.001 + 1e-300, 1.5 * band)
                crumb = 2.0 * _STEP_SLOPE * cap / halo_out
            boxes.append(
                _TermBox(j, a_lo * bp_lo, a_hi * bp_hi, z_lo, z_hi, crumb)
            )
        return boxes, cert


# ---------------------------------------------------------------------------
# Check battery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    level: int
    samples: int
    worst_margin: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (
            f"{state}  {self.name:<12} level {self.level}  n={self.samples:<6d} "
            f"worst margin {self.worst_margin:.6g}  {self.note}"
        )


@dataclass
class NonPuCheckReport:
    results: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> str:
        return "\n".join(r.line() for r in self.results)

    def to_json(self) -> str:
        return json.dumps(
            [r.__dict__ for r in self.results], indent=2, sort_keys=True
        )


def _sample_abscissae(cons: NonPuConstruction, level: int, n: int, rr: random.Random):
    """Exact sample points of T_level (uniform over components x position)."""
    pts = []
    for _ in range(n):
        address = [rr.randrange(cons.levels[j].cells) for j in range(1, level + 1)]
        pos = Fraction(rr.randrange(1 << 32), 1 << 32)
        pts.append(cons.fiber_point(address, pos))
    return pts


def _sample_mixed(cons: NonPuConstruction, n: int, rr: random.Random):
    """Sample points of the whole line biased toward tower structure."""
    pts = []
    for _ in range(n):
        mode = rr.random()
        if mode < 0.15:
            pts.append(cons.locate(Fraction(rr.randrange(-(1 << 30), 1 << 31), 1 << 30)))
        else:
            level = rr.randrange(0, cons.depth) if mode < 0.7 else cons.depth
            address = [rr.randrange(cons.levels[j].cells) for j in range(1, level + 1)]
            pos = Fraction(rr.randrange(1 << 32), 1 << 32)
            pts.append(cons.fiber_point(address, pos))
    return pts


def _check_carrier_slope(cons, k, n, rr) -> CheckResult:
    """|carrier slope - curve slope| <= 1, everywhere."""
    worst = math.inf
    for pt in _sample_mixed(cons, n, rr):
        chain = cons._chain(pt, k)
        drift = abs(chain[k - 1].dcorr)
        worst = min(worst, 1.0 - drift)
    return CheckResult("slope-drift", k, n, worst, worst >= 0.0)


def _check_carrier_gap(cons, k, n, rr) -> CheckResult:
    """|carrier_k - curve_k| <= band[k-1]/2 on T_{k-1} (normalized margin)."""
    worst = math.inf
    half = 0.5 * cons._ef[k - 1]
    for pt in _sample_abscissae(cons, k - 1, n, rr):
        chain = cons._chain(pt, k)
        gap = abs(chain[k - 1].corr)
        worst = min(worst, (half - gap) / half)
    return CheckResult("carrier-gap", k, n, worst, worst >= 0.0)


def _check_vanishing(cons, k, n, rr) -> CheckResult:
    """Potential of round k vanishes on the round-k graph (float slop)."""
    scale = sum(float(cons.c[j]) * cons._ef[j - 1] for j in range(1, k + 1))
    tol = 1e-13 * scale
    worst = math.inf
    for pt in _sample_abscissae(cons, k, n, rr):
        chain = cons._chain(pt, k)
        cb, co = cons.curve_parts(pt, k)
        val, _, _ = cons._phi_terms(pt, cb, co, k, chain, need_grad=False)
        worst = min(worst, tol - abs(val))
    return CheckResult(
        "graph-zero", k, n, worst, worst >= 0.0, note=f"tol={tol:.3g}"
    )


def _shell_offsets(cons, q, n, rr) -> list[float]:
    """Certified vertical offsets for the shell between rounds q and q+1."""
    K = cons.depth
    if q == 0:
        lo = _OUT_GUARD * 1.05 * cons._hf[1] * cons._diag[1]
        hi = 3.0
    elif q == K:
        lo = 0.0
        hi = 0.9 * cons._hf[K]
    else:
        lo = _OUT_GUARD * 1.05 * (cons._ef[q] + cons._hf[q + 1] * cons._diag[q + 1])
        hi = 0.9 * cons._hf[q]
    out = []
    for _ in range(n):
        if lo == 0.0:
            mag = hi * rr.random()
        else:
            mag = lo * (hi / lo) ** rr.random()
        out.append(mag if rr.random() < 0.5 else -mag)
    return out


def _check_shell(cons, q, n, rr) -> list[CheckResult]:
    """Gradient band inequalities on the shell between rounds q and q+1."""
    K = cons.depth
    r = min(q, K)
    a_r2 = float(cons.a[r + 2])
    b_r = float(cons.b[r])
    c_r = float(cons.c[r])
    c_r2 = float(cons.c[r + 2])
    worst = {
        "fy-low": math.inf,
        "fy-high": math.inf,
        "fx-low": math.inf,
        "fx-high": math.inf,
        "ratio-low": math.inf,
        "ratio-high": math.inf,
    }
    offsets = _shell_offsets(cons, q, n, rr)
    if q == 0:
        pts = _sample_mixed(cons, n, rr)
    else:
        pts = _sample_abscissae(cons, q, n, rr)
    for pt, v in zip(pts, offsets):
        boxes, cert = cons.shell_boxes(pt, q, v)
        if cert["in_q"] is False or cert["out_q1"] is False:
            raise ContractError("shell sample failed its own certification")
        crumb = sum(bx.crumb for bx in boxes)
        fy_lo = sum(bx.t_lo for bx in boxes) - crumb
        fy_hi = sum(bx.t_hi for bx in boxes) + crumb
        fx_lo = sum(bx.t_lo * bx.z_lo for bx in boxes) - crumb
        fx_hi = sum(bx.t_hi * bx.z_hi for bx in boxes) + crumb
        scale = 1.0 + fy_hi
        worst["fy-low"] = min(worst["fy-low"], (fy_lo - 0.875 * c_r) / scale)
        worst["fy-high"] = min(worst["fy-high"], (4.0 * c_r2 - fy_hi) / scale)
        worst["fx-low"] = min(worst["fx-low"], (fx_lo - 0.25 * b_r * c_r) / scale)
        worst["fx-high"] = min(
            worst["fx-high"], (7.0 * a_r2 * c_r2 - fx_hi) / (scale * a_r2)
        )
        cb = 2.0 * b_r / 7.0
        lo_dir = -crumb * (1.0 + cb)
        for bx in boxes:
            coeff = bx.z_lo - cb
            lo_dir += (bx.t_lo if coeff >= 0.0 else bx.t_hi) * coeff
        worst["ratio-low"] = min(worst["ratio-low"], lo_dir / scale)
        ca = 3.0 * a_r2
        hi_dir = -crumb * (1.0 + ca)
        for bx in boxes:
            coeff = ca - bx.z_hi
            hi_dir += (bx.t_lo if coeff >= 0.0 else bx.t_hi) * coeff
        worst["ratio-high"] = min(worst["ratio-high"], hi_dir / (scale * ca))
    tol = -1e-12
    return [
        CheckResult(f"shell-{name}", q, n, margin, margin >= tol)
        for name, margin in worst.items()
    ]


def run_level_checks(
    cons: NonPuConstruction,
    *,
    samples_per_check: int = 250,
    seed: int = 0,
    shells: Sequence[int] | None = None,
) -> NonPuCheckReport:
    """Run the full per-level inequality battery and log margins.

    Checks per round k: the carrier slope stays within 1 of the curve slope
    (everywhere), the carrier drifts from the curve by at most half the
    previous band (on T_{k-1}), and the round-k potential vanishes on the
    round-k graph.  Checks per shell q: the assembled gradient obeys the
    two-sided component bands and the two-sided ratio band, via certified
    interval enclosures (worst corner is logged).
    """
    rr = random.Random(seed)
    results: list[CheckResult] = []
    for k in range(1, cons.depth + 1):
        results.append(_check_carrier_slope(cons, k, samples_per_check, rr))
        results.append(_check_carrier_gap(cons, k, samples_per_check, rr))
        results.append(_check_vanishing(cons, k, samples_per_check, rr))
    shell_list = list(range(cons.depth + 1)) if shells is None else list(shells)
    for q in shell_list:
        results.extend(_check_shell(cons, q, samples_per_check, rr))
    results.append(field_slope_probe(cons, n=min(samples_per_check, 40), seed=seed + 1))
    return NonPuCheckReport(results)


def field_slope_probe(
    cons: NonPuConstruction, *, n: int = 40, seed: int = 0
) -> CheckResult:
    """Field slope near the deepest graph exceeds half the slope ratio.

    Samples points of the deepest curve graph and evaluates the field slope
    -2 phi_x / phi_y at small certified offsets inside the deepest
    neighbourhood; the threshold is 0.5 * a_slope[K] / b_slope[K].
    """
    K = cons.depth
    rr = random.Random(seed)
    threshold = 0.5 * cons.a[K] / cons.b[K]
    worst = math.inf
    pts = _sample_abscissae(cons, K, n, rr)
    for pt in pts:
        best = 0.0
        for frac in (0.0, 0.35, -0.35):
            v = frac * cons._hf[K]
            val, fx, fy = cons.value_at_offset(pt, K, v)
            if fy != 0.0:
                best = max(best, abs(-2.0 * fx / fy))
        worst = min(worst, best / threshold - 1.0)
    return CheckResult("field-slope", K, n, worst, worst >= 0.0)


# ---------------------------------------------------------------------------
# Measures, samples, dumps
# ---------------------------------------------------------------------------


def tower_measures(cons: NonPuConstruction) -> tuple[Fraction, Fraction]:
    """Exact (length of T_K, length of curve_K image of T_K).

    Also validates the per-round recursion
    a_k * len(T_k) = (a_{k-1} - b_k) * len(T_{k-1}) and the positive floor
    on the image-length ratios.
    """
    t_len = Fraction(1)
    floor = Fraction(1)
    for k in range(1, cons.depth + 1):
        nxt = t_len * cons.levels[k].middle
        if cons.a[k] * nxt != (cons.a[k - 1] - cons.b[k]) * t_len:
            raise ContractError(f"measure recursion failed at round {k}")
        floor *= Fraction(cons.a[k - 1] - cons.b[k], cons.a[k - 1])
        t_len = nxt
    if floor < Fraction(15, 16):
        raise ContractError("image-length ratio product fell below its floor")
    return t_len, cons.a[cons.depth] * t_len


def sample_curve(cons: NonPuConstruction, n: int, seed: int = 0) -> np.ndarray:
    """(n, 2) float array of points on the deepest curve graph."""
    rr = random.Random(seed)
    pts = _sample_abscissae(cons, cons.depth, n, rr)
    out = np.empty((n, 2))
    for i, pt in enumerate(pts):
        cb, co = cons.curve_parts(pt, cons.depth)
        out[i, 0] = float(pt.x)
        out[i, 1] = float(cb) + co
    return out


def constants_json(cons: NonPuConstruction) -> str:
    payload = {
        "depth": cons.depth,
        "ck_multiplier": cons.ck_multiplier,
        "omega": {"tag": cons.omega.tag, "params": dict(cons.omega.params)},
        "a_slope": cons.a,
        "b_slope": cons.b,
        "c_gain": cons.c,
        "levels": [lv.as_dict() for lv in cons.levels],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def intervals_csv(cons: NonPuConstruction, level: int, limit: int = 64) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["address", "left", "right", "left_float", "right_float"])
    for address, lo, hi in cons.components(level, limit=limit):
        writer.writerow(
            [
                ".".join(map(str, address)) or "-",
                str(lo),
                str(hi),
                repr(float(lo)),
                repr(float(hi)),
            ]
        )
    return buf.getvalue()


def grid_dump(
    cons: NonPuConstruction,
    depth: int,
    nx: int = 48,
    nv: int = 17,
    v_span: float = 2.0,
) -> str:
    """Deterministic text dump of the round-``depth`` potential on a tube
    grid (x uniform over the unit interval, offsets from the first curve)."""
    lines = [f"# potential round {depth}; rows: x, offset, value"]
    for ix in range(nx):
        pt = cons.locate(Fraction(2 * ix + 1, 2 * nx))
        chain = cons._chain(pt, depth)
        cb, co = cons.curve_parts(pt, 1)
        for iv in range(nv):
            v = -v_span + 2.0 * v_span * iv / (nv - 1)
            val, _, _ = cons._phi_terms(pt, cb, co + v, depth, chain, need_grad=False)
            lines.append(f"{float(pt.x):.12g} {v:.12g} {val:.17g}")
    return "\n".join(lines) + "\n"


def write_artifacts(cons: NonPuConstruction, directory, *, seed: int = 0) -> list[str]:
    """Write constants, interval lists, grids, and a manifest; returns paths."""
    import pathlib

    root = pathlib.Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []

    def _put(name: str, text: str):
        path = root / name
        path.write_text(text)
        written.append(str(path))

    _put("constants.json", constants_json(cons))
    for k in range(cons.depth + 1):
        _put(f"intervals_level{k}.csv", intervals_csv(cons, k))
    for k in range(cons.depth + 1):
        _put(f"potential_round{k}.txt", grid_dump(cons, k))
    manifest = {
        "kind": "steep-curve tower",
        "depth": cons.depth,
        "omega": cons.omega.tag,
        "omega_params": dict(cons.omega.params),
        "ck_multiplier": cons.ck_multiplier,
        "seed": seed,
        "files": sorted(p.rsplit("/", 1)[-1] for p in written),
    }
    _put("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return written


def build_nonpu_construction(
    omega: SuperlinearBound, depth: int, *, ck_multiplier: float = 1.0
) -> NonPuConstruction:
    """Build the depth-truncated steep-curve construction for ``omega``.

    Raises ``ContractError`` when the gain budget of any round is violated
    (possible when ``ck_multiplier`` < 1) or when a profile feasibility
    invariant fails.
    """
    return NonPuConstruction(omega, depth, ck_multiplier=ck_multiplier)
