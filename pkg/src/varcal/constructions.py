"""Explicit constructions: singular sets, pathological Lagrangians, towers.

This module is the public face of the two construction pipelines:

* the **partition-of-unity route** (:func:`pu_helper_g`, :func:`pq_step`,
  :func:`build_pu_potential`), which edits a potential round by round so its
  gradient climbs a prescribed ladder on shrinking neighbourhoods of a
  four-corner Cantor product set, and
* the **direct tower route** (:func:`build_nonpu_construction`), which nests
  steep risers along a hierarchy of curve graphs and keeps exact interval
  bookkeeping for every level.

It also provides the classical one-dimensional pathologies used throughout
the test batteries: the four-corner set itself (:func:`cantor_set`), the
Mania-type Lagrangian with its certified superlinear bound
(:func:`mania_lagrangian`), and the exact measure bookkeeping for the curve
images of a tower (:func:`singular_curve_measure`).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ._nonpu import (
    NonPuCheckReport,
    NonPuConstruction,
    build_nonpu_construction,
    run_level_checks,
    tower_measures,
)
from ._nonpu import field_slope_probe as _nonpu_field_slope_probe
from ._pu import (
    GridSpec,
    HelperGrid,
    LadderPotential,
    LadderRung,
    PlaneRegion,
    PuCheckReport,
    PuConstruction,
    SetNeighborhood,
    StepReport,
    StripRegion,
    build_pu_potential,
    gradient_ladder,
    pq_step,
    pu_helper_g,
    run_pu_checks,
)
from ._pu import field_slope_probe as _pu_field_slope_probe
from ._sets import SingularSetSpec, cantor_product_set
from .core import ContractError, Lagrangian, register_lagrangian, superlinear_bound

__all__ = [
    "cantor_set",
    "mania_lagrangian",
    "singular_curve_measure",
    "field_slope_probe",
    # re-exported pipeline entry points
    "pu_helper_g",
    "pq_step",
    "build_pu_potential",
    "run_pu_checks",
    "build_nonpu_construction",
    "run_level_checks",
    "gradient_ladder",
    # re-exported supporting types
    "SingularSetSpec",
    "GridSpec",
    "PlaneRegion",
    "StripRegion",
    "SetNeighborhood",
    "HelperGrid",
    "LadderPotential",
    "LadderRung",
    "StepReport",
    "PuConstruction",
    "PuCheckReport",
    "NonPuConstruction",
    "NonPuCheckReport",
]


# ---------------------------------------------------------------------------
# Singular sets
# ---------------------------------------------------------------------------


def cantor_set(depth: int, ratio: float | Fraction = 0.25) -> SingularSetSpec:
    """Four-corner Cantor product set, truncated at ``depth`` generations.

    Each generation keeps the four corner sub-squares of side ``ratio`` times
    the parent, so depth ``K`` leaves ``4**K`` squares of side ``ratio**K``
    and total area ``(4 * ratio**2) ** K``.  Depth 0 is the unit square;
    ``ratio=0.25`` with ``depth=1`` gives the four corner squares of side
    1/4.  The returned spec carries a vectorised membership test and the
    exact distance function used by the construction pipelines.

    Requires ``depth >= 0`` and ``0 < ratio <= 1/4`` (so the four corners
    never overlap and a gap survives at every generation).
    """
    return cantor_product_set(depth, ratio)


# ---------------------------------------------------------------------------
# Pathological Lagrangians
# ---------------------------------------------------------------------------


def _convex_in_p_sweep(ev, *, samples: int = 400, seed: int = 0) -> bool:
    """Midpoint-convexity sweep of ``ev`` in its slope argument.

    Draws base points and slope pairs, then checks
    ``L(x, y, (p1+p2)/2) <= (L(x,y,p1) + L(x,y,p2)) / 2`` up to a relative
    float allowance.  A genuine non-convexity shows up as an O(1) relative
    violation, far above the allowance.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=samples)
    y = rng.uniform(-2.0, 2.0, size=samples)
    p1 = rng.uniform(-3.0, 3.0, size=samples)
    p2 = rng.uniform(-3.0, 3.0, size=samples)
    lhs = np.asarray(ev(x, y, 0.5 * (p1 + p2)), dtype=float)
    rhs = 0.5 * (np.asarray(ev(x, y, p1), dtype=float) + np.asarray(ev(x, y, p2), dtype=float))
    return bool(np.all(lhs <= rhs + 1e-9 * (1.0 + np.abs(rhs))))


def mania_lagrangian(eps0: float = 1e-3) -> Lagrangian:
    """Regularised Mania Lagrangian ``(x^3 - y^5)^2 p^20 + eps0 p^2``.

    The degenerate well sits on the curve ``y = x**(3/5)``, where the
    twentieth-power term switches off and only the quadratic regularisation
    penalises slope; minimising sequences funnel into the cusp at the left
    endpoint and the problem exhibits a Lavrentiev gap for small ``eps0``.
    The certified superlinear bound is the regularisation itself,
    ``omega(p) = eps0 * p**2``, since the well term is nonnegative.

    Requires ``eps0 > 0``.  The factory is registered under the key
    ``"mania"`` with parameter ``eps0``, so specs round-trip through the
    registry.  Convexity in the slope is re-verified by a sample sweep each
    time the factory runs rather than asserted a priori.
    """
    eps = float(eps0)
    if not (np.isfinite(eps) and eps > 0.0):
        raise ContractError(f"mania_lagrangian requires eps0 > 0, got {eps0!r}")

    def ev(x, y, p):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        p = np.asarray(p, dtype=float)
        well = (x**3 - y**5) ** 2
        return well * p**20 + eps * p * p

    # |d/dy (x^3 - y^5)^2| <= 2 (R^3 + R^5) * 5 R^4 on the box of radius R,
    # and the slope factor contributes at most R^20.
    def lip_y(radius: float) -> float:
        r = float(radius)
        return 10.0 * (r**3 + r**5) * r**4 * r**20

    return Lagrangian(
        name="mania",
        eval_fn=ev,
        bound=superlinear_bound("scaled_p2", coeff=eps),
        convex_in_p=_convex_in_p_sweep(ev),
        lipschitz_y=lip_y,
        params={"eps0": eps},
    )


register_lagrangian("mania", mania_lagrangian)


# ---------------------------------------------------------------------------
# Exact tower bookkeeping
# ---------------------------------------------------------------------------


def singular_curve_measure(cons: NonPuConstruction) -> tuple[Fraction, Fraction]:
    """Exact ``(length of T_K, length of the deepest curve image of T_K)``.

    ``T_K`` is the surviving parameter set after ``K`` rounds of middle
    removal and the image length is the total variation the deepest curve
    accumulates over it; both are exact rationals.  The pair is validated
    against the per-round recursion

    ``a_k * len(image_k) = (a_{k-1} - b_k) * len(image_{k-1})``

    (each round rescales the survivors by the slope bookkeeping of the
    tower) and against the positive floor: the product of the per-round
    ratios never drops below 15/16, so the image length stays bounded away
    from zero even as ``T_K`` itself loses measure.  Depth 0 returns
    ``(1, a_0)``.  Raises :class:`~varcal.core.ContractError` if the stored
    intervals violate the recursion.
    """
    if not isinstance(cons, NonPuConstruction):
        raise ContractError(
            f"singular_curve_measure expects a NonPuConstruction, got {type(cons).__name__}"
        )
    return tower_measures(cons)


# ---------------------------------------------------------------------------
# Shared probes
# ---------------------------------------------------------------------------


def field_slope_probe(cons, *, n: int = 40, seed: int = 0):
    """Steepness probe on the singular set of either construction.

    Dispatches on the construction type: tower constructions return the
    :class:`~varcal._nonpu.CheckResult` of the near-graph slope check, ladder
    constructions return the ``(worst steepness, threshold)`` pair measured
    at random corners of the Cantor set.  In both cases the probe certifies
    that the field slope through the singular points dominates half the
    drop/lift ratio of the deepest round.
    """
    if isinstance(cons, PuConstruction):
        return _pu_field_slope_probe(cons, n=n, seed=seed)
    if isinstance(cons, NonPuConstruction):
        return _nonpu_field_slope_probe(cons, n=n, seed=seed)
    raise ContractError(
        f"field_slope_probe expects a construction object, got {type(cons).__name__}"
    )
