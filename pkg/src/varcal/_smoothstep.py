"""Smoothed step functions built from the standard compactly supported bump.

The building block is ``exp(-1/(1-t^2))`` on ``(-1, 1)``.  Its normalized
antiderivative is an infinitely differentiable step that rises from 0 to 1
across ``[-1, 1]``; the step's own antiderivative is a smoothed hinge that is
identically 0 left of -1 and identically the identity right of +1.  Both are
used as mollification primitives throughout the package: ramps in explicit
Lagrangian constructions, smoothed indicator functions of interval unions,
and the corner-rounding profile of calibrated integrands.

All quantities are computed with fixed-order composite Gauss-Legendre
quadrature (6 panels x 40 nodes), which resolves the bump to machine
precision; results are clipped to analytic envelopes so that downstream
monotonicity and convexity checks never fail from quadrature noise.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "bump",
    "smoothstep",
    "smoothstep_deriv",
    "smoothstep_primitive",
    "ramp",
    "BUMP_MASS",
]

# Composite Gauss-Legendre rule: per-panel reference nodes/weights on [-1, 1].
_PANELS = 6
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(40)


def bump(t):
    """Unnormalized C-infinity bump exp(-1/(1-t^2)) supported on [-1, 1].

    Accepts scalars or arrays; returns the same shape.  Exactly zero outside
    the open support, with no overflow warnings at the endpoints.
    """
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    inside = np.abs(t_arr) < 1.0
    ti = t_arr[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


def _panel_points(lo, hi):
    """Nodes and weights of the composite rule on [lo, hi] (per-row arrays).

    ``lo`` and ``hi`` are broadcast 1-d arrays; returns (points, weights) of
    shape (n, PANELS * order).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    edges = np.linspace(0.0, 1.0, _PANELS + 1)
    span = (hi - lo)[:, None]
    starts = lo[:, None] + span * edges[:-1][None, :]
    half = span * (edges[1] - edges[0]) / 2.0
    mids = starts + half
    pts = mids[:, :, None] + half[:, :, None] * _NODES[None, None, :]
    wts = np.broadcast_to(half[:, :, None] * _WEIGHTS[None, None, :], pts.shape)
    n = lo.shape[0]
    return pts.reshape(n, -1), wts.reshape(n, -1)


# Total mass of the bump, computed once with the same rule the module uses
# everywhere else (agrees with adaptive quadrature to ~1e-16).
_pts0, _wts0 = _panel_points(np.array([-1.0]), np.array([1.0]))
BUMP_MASS = float(np.sum(_wts0 * bump(_pts0)))


def smoothstep(t):
    """Normalized smoothed Heaviside step.

    Rises monotonically from 0 at t <= -1 to 1 at t >= +1, C-infinity
    everywhere, and symmetric: ``smoothstep(t) + smoothstep(-t) == 1``.
    Scalar in, scalar out; arrays map elementwise.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    out[t_arr >= 1.0] = 1.0
    mid = (t_arr > -1.0) & (t_arr < 1.0)
    if np.any(mid):
        tm = t_arr[mid]
        pts, wts = _panel_points(np.full_like(tm, -1.0), tm)
        vals = np.sum(wts * bump(pts), axis=1) / BUMP_MASS
        out[mid] = np.clip(vals, 0.0, 1.0)
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0])
    return out


def smoothstep_deriv(t):
    """Derivative of :func:`smoothstep` (the normalized bump)."""
    t_arr = np.asarray(t, dtype=float)
    result = bump(t_arr)
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(result) / BUMP_MASS
    return result / BUMP_MASS


def smoothstep_primitive(t):
    """Antiderivative of :func:`smoothstep` vanishing on ``t <= -1``.

    Equals 0 for t <= -1 and exactly t for t >= +1 (the step has unit mean
    on [-1, 1] by symmetry, so no affine correction is needed).  In between
    it is computed through the single-integral reduction

        H(t) = (1/M) * integral_{-1}^{t} (t - r) bump(r) dr,

    then clipped to the analytic envelope max(0, t) <= H(t) <= (t + 1)/2 so
    that the hinge sandwich and convexity hold exactly in floating point.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t_arr)
    right = t_arr >= 1.0
    out[right] = t_arr[right]
    mid = (t_arr > -1.0) & (t_arr < 1.0)
    if np.any(mid):
        tm = t_arr[mid]
        pts, wts = _panel_points(np.full_like(tm, -1.0), tm)
        vals = np.sum(wts * (tm[:, None] - pts) * bump(pts), axis=1) / BUMP_MASS
        lower = np.maximum(0.0, tm)
        upper = (tm + 1.0) / 2.0
        out[mid] = np.clip(vals, lower, upper)
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(out[0])
    return out


def ramp(x, x0, x1):
    """Smooth 0-to-1 transition across the interval [x0, x1].

    Affine reparametrization of :func:`smoothstep`; requires x1 > x0.
    """
    if not x1 > x0:
        raise ValueError(f"ramp needs x1 > x0, got [{x0}, {x1}]")
    return smoothstep((2.0 * (np.asarray(x, dtype=float) - x0) / (x1 - x0)) - 1.0)
