"""Tests for the gradient-ladder potential on the four-corner product set.

Independent oracles drive the tests.  The 1-D set geometry (distances,
fattened-neighborhood measures, prefix masses, components) is checked
against direct enumeration of the 2^n cells with ``Fraction`` endpoints at
shallow depth; the pruned tree walks are then trusted at the deep rounds,
where the same quantities appear with 100+-bit denominators.  The grid
value function is checked against exhaustive path enumeration on a tiny
grid and against a hand-derived closed form for a vertical strip.  Round
geometry (tau, smoothing depths, region radii) is recomputed from the
design rules in exact arithmetic, and the headline outputs are frozen as
literals so a regression in either copy is caught.  Gradients are
cross-checked against central differences with pair-form values, which
stay meaningful at scales far below float resolution.
"""

import dataclasses
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from varcal._pu import (
    GridSpec,
    LadderPotential,
    PlaneRegion,
    SetNeighborhood,
    StripRegion,
    _components_near,
    _dist1d,
    _dist1d_np,
    _GradientMover,
    _level_masses,
    _prefix_mass,
    _ProductCutoff,
    _segment_distance,
    _SmoothBump,
    as_calibration_potential,
    build_pu_potential,
    constants_json,
    field_slope_probe,
    gradient_ladder,
    grid_dump,
    intervals_csv,
    pq_step,
    pu_helper_g,
    run_pu_checks,
    write_artifacts,
)
from varcal._sets import (
    SingularSetSpec,
    cantor1d_distance,
    cantor1d_neighborhood_measure,
    cantor_product_set,
    empty_set,
    smoothed_indicator_1d,
)
from varcal.calibration import (
    assemble_calibrated_lagrangian,
    calibration_inequality_test,
    verify_out_hypotheses,
)
from varcal.core import ContractError, superlinear_bound

F = Fraction

SOFT = superlinear_bound("scaled_p2", coeff=1e-6)


# ---------------------------------------------------------------------------
# Oracle 1: direct enumeration of the 1-D set geometry (shallow depth)
# ---------------------------------------------------------------------------


def enum_cells(depth, ratio):
    """The 2^depth level-``depth`` cells as exact [a, b] intervals."""
    cells = [(F(0), F(1))]
    for _ in range(depth):
        nxt = []
        for a, b in cells:
            w = (b - a) * ratio
            nxt.append((a, a + w))
            nxt.append((b - w, b))
        cells = nxt
    return cells


def brute_dist(x, depth, ratio):
    return min(max(a - x, x - b, F(0)) for a, b in enum_cells(depth, ratio))


def brute_neighborhood(depth, ratio, rho):
    """Merged components of B(C_depth, rho), by sort-and-merge."""
    raw = sorted((a - rho, b + rho) for a, b in enum_cells(depth, ratio))
    merged = [list(raw[0])]
    for lo, hi in raw[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def brute_measure(depth, ratio, rho):
    return sum(hi - lo for lo, hi in brute_neighborhood(depth, ratio, rho))


def brute_prefix(x, depth, ratio, rho):
    return sum(
        min(x, hi) - lo for lo, hi in brute_neighborhood(depth, ratio, rho) if lo < x
    )


# ---------------------------------------------------------------------------
# Oracle 2: exact recomputation of the round design rules
# ---------------------------------------------------------------------------


def oracle_round(ratio, e_prev, e_next, eps, delta, depth_min):
    """(tau, delta_eff, mover depth, mover rho) from the design rules."""
    sigma_c = F(16, 25) * delta
    delta_eff = F(16, 15) * sigma_c
    tau = F(eps) * delta_eff / (2 * (delta_eff + 1))
    amp = abs(e_next[0] - e_prev[0]) + abs(e_next[1] - e_prev[1])
    n = max(1, depth_min)
    while F(3, 2) * (2 * ratio) ** n * F(amp) > tau * F(49, 50):
        n += 1
    rho = ratio**n / 4
    return tau, delta_eff, n, rho


def oracle_build_geometry(ratio, rungs, K, set_depth):
    """Per-round (tau, delta_eff, n, rho, radius) for the full ladder."""
    rows = []
    radius_prev = None
    prev_n = set_depth
    for k in range(1, K + 1):
        delta = F(1, 2) if radius_prev is None else F(49, 100) * radius_prev
        tau, deff, n, rho = oracle_round(
            ratio, rungs[k - 1].target, rungs[k].target, F(1, 4), delta, prev_n
        )
        sigma_c = F(16, 25) * delta
        plateau_c = (2 * delta - sigma_c) - 2 * sigma_c
        radius = min(F(9, 10) * (rho / 2), F(9, 10) * plateau_c, F(49, 100) * F(1, 2**k))
        if radius_prev is not None:
            radius = min(radius, F(49, 100) * radius_prev)
        cap = F(1, k) / F(rungs[k].drop + rungs[k].lift + 6.0)
        while _level_masses(n, ratio, radius)[0] > cap:
            radius /= 2
        rows.append((tau, deff, n, rho, radius))
        radius_prev, prev_n = radius, n
    return rows


# ---------------------------------------------------------------------------
# Gradient ladder rungs
# ---------------------------------------------------------------------------


def test_ladder_rungs_quadratic_bound_exact_integers():
    rungs = gradient_ladder(superlinear_bound("p2"), 1)
    assert [r.index for r in rungs] == [0, 1]
    # omega'(p) = 2p: lift_0 = 4 + 4*160 = 644, drop_0 = 12*644 = 7728
    assert rungs[0].lift == 644.0
    assert rungs[0].drop == 7728.0
    assert rungs[1].lift == 1284.0
    assert rungs[1].drop == 30816.0
    assert rungs[0].band == 0.5
    assert rungs[1].band == 0.75
    assert rungs[0].target == (-7728.0, 644.0)


def test_ladder_rungs_soft_bound_replicated_floats():
    rungs = gradient_ladder(SOFT, 2)
    for k, rung in enumerate(rungs):
        lift = 4.0 + 4.0 * (2.0 * 1e-6 * (5.0 * 2.0 ** (k + 4)))
        drop = 3.0 * 2.0 ** (k + 2) * lift
        assert rung.lift == lift
        assert rung.drop == drop
        assert rung.band == 1.0 - 2.0 ** (-(k + 1))
    assert rungs[0].lift == pytest.approx(4.00064, rel=1e-12)
    assert rungs[2].drop == pytest.approx(192.12288, rel=1e-12)


def test_ladder_input_validation():
    with pytest.raises(ContractError, match="SuperlinearBound"):
        gradient_ladder(object(), 1)
    with pytest.raises(ContractError, match="non-negative"):
        gradient_ladder(SOFT, -1)
    with pytest.raises(ContractError, match="non-negative"):
        gradient_ladder(SOFT, True)


# ---------------------------------------------------------------------------
# Exact 1-D geometry vs. enumeration
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("ratio", [F(1, 4), F(1, 5)])
def test_dist1d_matches_enumeration(ratio):
    for k in range(-40, 241, 7):
        x = F(k, 160)
        assert _dist1d(x, 3, ratio) == brute_dist(x, 3, ratio)
    # corners and gap midpoints are exact
    for a, b in enum_cells(3, ratio):
        assert _dist1d(a, 3, ratio) == 0
        assert _dist1d(b, 3, ratio) == 0


def test_dist1d_np_matches_float_twin():
    xs = np.linspace(-0.3, 1.3, 641)
    got = _dist1d_np(xs, 4, 0.25)
    want = np.array([cantor1d_distance(float(x), 4, 0.25) for x in xs])
    assert np.allclose(got, want, atol=1e-15)


@pytest.mark.parametrize(
    "rho", [F(1, 100), F(1, 50), F(1, 10), F(1, 3)]
)  # no fuse / leaf fuse / level-2 fuse / full fuse
def test_level_masses_and_prefix_match_enumeration(rho):
    ratio = F(1, 4)
    assert _level_masses(3, ratio, rho)[0] == brute_measure(3, ratio, rho)
    for k in range(-30, 201, 11):
        x = F(k, 128)
        assert _prefix_mass(x, 3, ratio, rho) == brute_prefix(x, 3, ratio, rho)
    # float twin agrees at demo scale
    assert float(_level_masses(3, ratio, rho)[0]) == pytest.approx(
        cantor1d_neighborhood_measure(3, 0.25, float(rho)), rel=1e-12
    )


def test_components_near_matches_enumeration():
    ratio, rho = F(1, 4), F(1, 60)
    merged = brute_neighborhood(3, ratio, rho)
    for center in (F(0), F(1, 3), F(1, 2), F(9, 10), F(6, 5)):
        pad = F(1, 7)
        lo_w, hi_w = center - pad, center + pad
        want = [(lo, hi) for lo, hi in merged if hi >= lo_w and lo <= hi_w]
        assert _components_near(center, 3, ratio, rho, pad) == want


# ---------------------------------------------------------------------------
# Smoothed 1-D bump
# ---------------------------------------------------------------------------

BUMP = _SmoothBump(3, F(1, 4), F(1, 100), F(1, 1000))


def test_bump_plateau_and_support_are_exact():
    assert BUMP.plateau == F(1, 100) - F(2, 1000)
    assert BUMP.support == F(1, 100) + F(1, 1000)
    corner = enum_cells(3, F(1, 4))[0][1]  # right end of the leftmost cell
    assert BUMP.indicator(corner) == 1.0
    assert BUMP.indicator(corner + F(1, 200)) == 1.0  # dist = 1/200 < plateau
    assert BUMP.indicator(corner + F(12, 1000)) == 0.0  # dist > support
    for s in range(-5, 6):
        q = BUMP.indicator(corner + F(1, 100) + F(s, 2000))
        assert 0.0 <= q <= 1.0


def test_bump_mass_equals_neighborhood_measure():
    assert BUMP.mass() == brute_measure(3, F(1, 4), F(1, 100))


def test_bump_cdf_pair_differentiates_to_indicator():
    h = BUMP.sigma / 16
    cells = enum_cells(3, F(1, 4))
    edge = cells[2][1] + BUMP.rho  # right ramp of the third component
    for s in range(-8, 9):
        x = edge + s * BUMP.sigma / 4
        bp, cp = BUMP.cdf_pair(x + h)
        bm, cm = BUMP.cdf_pair(x - h)
        fd = float((bp - bm) / (2 * h)) + (cp - cm) / float(2 * h)
        assert fd == pytest.approx(BUMP.indicator(x), abs=5e-3)


def test_bump_suffix_and_cdf_are_complementary():
    for x in (F(-1, 7), F(1, 9), F(1, 2), F(13, 12)):
        b1, c1 = BUMP.cdf_pair(x)
        b2, c2 = BUMP.suffix_pair(x)
        assert b1 + b2 == BUMP.mass()
        assert c1 + c2 == 0.0


def test_bump_indicator_slope_matches_difference_quotient():
    h = BUMP.sigma / 64
    cells = enum_cells(3, F(1, 4))
    edge = cells[5][0] - BUMP.rho  # left ramp of the sixth component
    for s in range(-6, 7):
        x = edge + s * BUMP.sigma / 4
        fd = (BUMP.indicator(x + h) - BUMP.indicator(x - h)) / float(2 * h)
        slope = BUMP.indicator_slope(x)
        assert fd == pytest.approx(slope, rel=1e-3, abs=1e-6)
        assert abs(slope) <= (15.0 / 16.0) / float(BUMP.sigma) * (1 + 1e-12)


def test_bump_matches_float_twin_at_demo_scale():
    for k in range(-20, 141, 3):
        x = F(k, 120)
        got = BUMP.indicator(x)
        want = smoothed_indicator_1d(float(x), 3, 0.25, 0.01, 0.001)
        assert got == pytest.approx(want, abs=1e-12)


def test_bump_pair_arithmetic_survives_subfloat_scales():
    # depth-39 geometry: rho = 4^-40 is ~1e-24, far below float resolution
    # relative to the unit square, yet ramp values and difference quotients
    # of the pair-form primitive stay accurate.
    rho = F(1, 4) ** 40
    bump = _SmoothBump(39, F(1, 4), rho, rho / 4)
    leaf = F(1, 4) ** 39
    edge = leaf + rho  # right ramp edge of the component containing 0
    h = bump.sigma / 16
    for s in (-1, 0, 1):
        x = edge + s * bump.sigma / 2
        q = bump.indicator(x)
        assert 0.0 < q < 1.0
        bp, cp = bump.cdf_pair(x + h)
        bm, cm = bump.cdf_pair(x - h)
        fd = float((bp - bm) / (2 * h)) + (cp - cm) / float(2 * h)
        assert fd == pytest.approx(q, abs=5e-3)
    # the plateau value is exactly 1 at the set corner itself
    assert bump.indicator(F(0)) == 1.0
    assert bump.indicator(leaf + 2 * rho) == 0.0


def test_bump_rejects_bad_scales():
    with pytest.raises(ContractError, match="positive"):
        _SmoothBump(3, F(1, 4), F(0), F(1, 10))
    with pytest.raises(ContractError, match="ramp scale"):
        _SmoothBump(3, F(1, 4), F(1, 100), F(1, 100))  # 2 sigma > surviving gap


def test_bump_fused_single_interval_has_no_gap_constraint():
    bump = _SmoothBump(1, F(1, 4), F(1, 2), F(1, 10))  # 2 rho >= the only gap
    assert bump.mass() == 2  # [-1/2, 3/2]
    assert bump.indicator(F(1, 2)) == 1.0


# ---------------------------------------------------------------------------
# Mover and product cutoff
# ---------------------------------------------------------------------------


def test_mover_gradient_is_exact_on_plateaus_and_zero_far_away():
    mover = _GradientMover(-3.0, 2.0, BUMP, BUMP)
    assert mover.gradient(F(0), F(1)) == (-3.0, 2.0)
    assert mover.gradient(F(1, 2), F(1, 2)) == (0.0, 0.0)  # central gap
    assert mover.max_value() == 5 * BUMP.mass()
    rng = np.random.default_rng(0)
    top = float(mover.max_value())
    for _ in range(200):
        v = mover.value(rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5))
        assert -1e-15 <= v <= top + 1e-15


def test_mover_value_pair_differentiates_to_gradient():
    mover = _GradientMover(-3.0, 2.0, BUMP, BUMP)
    h = BUMP.sigma / 16
    cells = enum_cells(3, F(1, 4))
    x = cells[1][1] + BUMP.rho  # mid-ramp in x
    y = cells[4][0] - BUMP.rho + BUMP.sigma / 3  # mid-ramp in y
    gx, gy = mover.gradient(x, y)
    bp, cp = mover.value_pair(x + h, y)
    bm, cm = mover.value_pair(x - h, y)
    fdx = float((bp - bm) / (2 * h)) + (cp - cm) / float(2 * h)
    bp, cp = mover.value_pair(x, y + h)
    bm, cm = mover.value_pair(x, y - h)
    fdy = float((bp - bm) / (2 * h)) + (cp - cm) / float(2 * h)
    assert fdx == pytest.approx(gx, rel=2e-2, abs=2e-2)
    assert fdy == pytest.approx(gy, rel=2e-2, abs=2e-2)


def test_product_cutoff_plateau_support_and_slope_bound():
    cut = _ProductCutoff(BUMP)
    assert cut.value(F(0), F(1)) == 1.0
    assert cut.gradient(F(0), F(1)) == (0.0, 0.0)
    assert cut.value(F(1, 2), F(0)) == 0.0
    cells = enum_cells(3, F(1, 4))
    x = cells[1][1] + BUMP.rho  # x mid-ramp, y on plateau
    h = BUMP.sigma / 64
    fd = (cut.value(x + h, F(0)) - cut.value(x - h, F(0))) / float(2 * h)
    gx, gy = cut.gradient(x, F(0))
    assert fd == pytest.approx(gx, rel=1e-3, abs=1e-6)
    assert abs(gx) <= cut.slope_bound and gy == 0.0


# ---------------------------------------------------------------------------
# Sup-norm distance to a segment
# ---------------------------------------------------------------------------


def test_segment_distance_closed_forms():
    assert _segment_distance((1.0, 0.5), (0.0, 0.0), (2.0, 1.0)) == 0.0
    assert _segment_distance((0.0, 0.0), (0.0, 0.0), (2.0, 1.0)) == 0.0
    assert _segment_distance((3.0, 1.5), (0.0, 0.0), (2.0, 1.0)) == 1.0


def test_segment_distance_is_the_true_minimum():
    rng = np.random.default_rng(7)
    ts = np.linspace(0.0, 1.0, 4001)
    for _ in range(50):
        v = tuple(rng.uniform(-3, 3, 2))
        e0 = tuple(rng.uniform(-3, 3, 2))
        e1 = tuple(rng.uniform(-3, 3, 2))
        got = _segment_distance(v, e0, e1)
        samp = np.maximum(
            np.abs(v[0] - e0[0] - ts * (e1[0] - e0[0])),
            np.abs(v[1] - e0[1] - ts * (e1[1] - e0[1])),
        )
        brute = float(np.min(samp))
        assert got <= brute + 1e-12
        assert brute - got <= 1e-2


# ---------------------------------------------------------------------------
# Grid value function (reward-collection dynamic program)
# ---------------------------------------------------------------------------


class _BoxRegion:
    kind = "box"

    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def contains(self, x, y):
        return self.x0 < float(x) < self.x1 and self.y0 < float(y) < self.y1

    def mask(self, x, y):
        xa = np.asarray(x, dtype=float)
        ya = np.asarray(y, dtype=float)
        return (xa > self.x0) & (xa < self.x1) & (ya > self.y0) & (ya < self.y1)


def test_helper_matches_exhaustive_path_enumeration():
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, 8, 8)
    region = _BoxRegion(0.3, 0.8, 0.2, 0.7)
    S = cantor_product_set(2)
    h = pu_helper_g(S, 0.7, 1.0, grid, region=region, curves=50)
    assert h.region_kind == "box"
    dx, dy = grid.dx, grid.dy
    jumps, C = h.jumps, 1.0
    mid_x = grid.xs[:-1] + 0.5 * dx
    half = grid.y0 + 0.5 * dy * np.arange(2 * grid.ny - 1)
    mid_in = np.zeros((grid.nx - 1, 2 * grid.ny - 1), dtype=bool)
    for col in range(grid.nx - 1):
        mid_in[col] = region.mask(np.full(2 * grid.ny - 1, mid_x[col]), half)

    def brute_v(col, row):
        if col == 0:
            return 0.0
        best = -math.inf
        for jm in jumps:
            src = row - jm
            if not 0 <= src < grid.ny:
                continue
            prev = brute_v(col - 1, src)
            if prev == -math.inf:
                continue
            tt = 2 * row - jm
            r = 0.0
            if 0 <= tt <= 2 * (grid.ny - 1) and mid_in[col - 1, tt]:
                r = (1.0 - abs(jm) * dy / dx / C) * dx
            best = max(best, prev + r)
        return best

    V = np.array([[brute_v(i, j) for j in range(grid.ny)] for i in range(grid.nx)])
    assert np.allclose(h.table, V, atol=1e-12)
    xs = grid.xs
    g = np.array(
        [
            [max(xs[i] - xs[b] + V[b, j] for b in range(i, grid.nx)) for j in range(grid.ny)]
            for i in range(grid.nx)
        ]
    )
    assert np.allclose(h.values, g, atol=1e-12)


def test_helper_strip_region_recovers_the_clamp_closed_form():
    grid = GridSpec(-0.2, 1.2, -0.3, 1.3, 141, 161)
    h = pu_helper_g(
        cantor_product_set(2), 0.3, 2.0, grid, region=StripRegion(0.1, 0.35), curves=100
    )
    want = np.clip(grid.xs - 0.1, 0.0, 0.25)
    assert np.max(np.abs(h.values - want[:, None])) < 1e-12
    assert h.region_kind == "strip"
    assert all(v >= -1e-12 for v in h.margins.values())


def test_helper_empty_set_gives_zero():
    grid = GridSpec(-0.2, 1.2, -0.3, 1.3, 141, 161)
    h = pu_helper_g(empty_set(), 0.25, 2.0, grid, curves=50)
    assert not np.any(h.values)
    assert h.region_kind == "empty"
    assert h.radius is None
    assert h.crossing_max == 0.0
    assert h.margins["upper"] == 0.25


def test_helper_default_cantor_region_and_self_checks():
    grid = GridSpec(-0.1, 1.1, -0.1, 1.1, 281, 281)
    S = cantor_product_set(4)
    h = pu_helper_g(S, 0.5, 4.0, grid, seed=3, curves=300)
    # largest radius with projected measure <= 0.45 eps: exactly 1/160, where
    # the level-4 neighborhoods fuse and the measure hits 0.225 = 0.45 * 0.5
    assert h.radius == pytest.approx(0.00625, abs=1e-12)
    assert h.region_kind == "set-neighborhood"
    assert h.jumps == tuple(range(-4, 5))
    assert h.quant_slack == 0.0
    vals = h.values
    assert 0.15 < float(np.max(vals)) <= 0.5 + 1e-12
    assert float(np.min(vals)) >= 0.0
    assert all(v >= -1e-12 for v in h.margins.values())
    assert 0.0 < h.crossing_max < 0.3
    assert 0.0 < h.crossing_mean <= h.crossing_max
    # the value function climbs at full unit slope across the set columns
    assert float(np.max(np.diff(vals, axis=0))) == pytest.approx(grid.dx, rel=1e-12)
    # interpolation reproduces grid nodes
    assert h.interpolate(float(grid.xs[17]), float(grid.ys[200])) == pytest.approx(
        float(vals[17, 200]), rel=1e-12
    )
    # determinism
    h2 = pu_helper_g(S, 0.5, 4.0, grid, seed=3, curves=300)
    assert np.array_equal(h2.values, vals)
    assert h2.crossing_max == h.crossing_max


def test_helper_input_validation():
    grid = GridSpec(-0.1, 1.1, -0.1, 1.1, 281, 281)
    with pytest.raises(ContractError, match="eps must be"):
        pu_helper_g(cantor_product_set(2), -0.5, 4.0, grid)
    with pytest.raises(ContractError, match="slope budget"):
        pu_helper_g(cantor_product_set(2), 0.5, 0.0, grid)
    with pytest.raises(ContractError, match="GridSpec"):
        pu_helper_g(cantor_product_set(2), 0.5, 4.0, (0, 1, 0, 1))
    with pytest.raises(ContractError, match="SingularSetSpec"):
        pu_helper_g("set", 0.5, 4.0, grid)
    with pytest.raises(ContractError, match="no default reward region"):
        pu_helper_g(
            SingularSetSpec("blob", 1, lambda x, y: False, lambda x, y: 1.0, {}),
            0.5,
            4.0,
            grid,
        )


def test_helper_grid_resolution_errors():
    coarse = GridSpec(0.0, 1.0, 0.0, 2.0, 11, 21)  # dx = 0.1, dy = 0.1
    with pytest.raises(ContractError, match="slope quantization"):
        pu_helper_g(cantor_product_set(2), 0.5, 0.5, coarse)
    grid = GridSpec(-0.2, 1.2, -0.3, 1.3, 141, 161)
    with pytest.raises(ContractError, match="too coarse to resolve"):
        pu_helper_g(cantor_product_set(4), 0.4, 4.0, grid)


def test_helper_shallow_truncation_error():
    grid = GridSpec(-0.1, 1.1, -0.1, 1.1, 281, 281)
    with pytest.raises(ContractError, match="set truncation too shallow"):
        pu_helper_g(cantor_product_set(1), 0.5, 4.0, grid)


def test_grid_spec_validation():
    with pytest.raises(ContractError, match="bounds"):
        GridSpec(1.0, 0.0, 0.0, 1.0, 16, 16)
    with pytest.raises(ContractError, match="at least 8"):
        GridSpec(0.0, 1.0, 0.0, 1.0, 4, 16)


# ---------------------------------------------------------------------------
# One ladder round
# ---------------------------------------------------------------------------

E0 = (-48.0, 4.0)
E1 = (-47.5, 4.02)


def test_pq_step_plane_round_geometry_and_margins():
    S = cantor_product_set(6)
    h0 = LadderPotential(E0)
    h1, rep = pq_step(S, PlaneRegion(), h0, E0, E1, F(1, 4), seed=1, samples=400)
    assert rep.delta == F(1, 2)
    assert rep.delta_eff == F(128, 375)
    assert rep.tau == F(16, 503)
    assert rep.cutoff_sigma == F(8, 25)
    assert rep.cutoff_depth == 6
    tau, deff, n, rho = oracle_round(F(1, 4), E0, E1, F(1, 4), F(1, 2), 6)
    assert (rep.tau, rep.delta_eff, rep.mover_depth, rep.mover_rho) == (tau, deff, n, rho)
    assert rep.mover_depth == 6 and rep.mover_rho == F(1, 4**7)
    mu = _level_masses(6, F(1, 4), F(1, 4**7))[0]
    assert rep.sup_edit == (F(0.5) + (F(4.02) - 4)) * mu
    assert rep.passed()
    assert set(rep.margins) == {"sup_edit", "outside_equal", "gradient_band", "set_gradient"}
    assert rep.margins["outside_equal"] == math.inf  # the plane has no outside
    assert rep.margins["set_gradient"] == 0.25  # exact rung hit on every corner
    assert rep.margins["gradient_band"] > 0.2
    # the new gradient is bitwise the target on the set
    assert h1.gradient(F(0), F(1)) == (-47.5, 4.0 + (4.02 - 4.0))


def test_pq_step_edit_stays_below_eps_on_random_samples():
    S = cantor_product_set(6)
    h0 = LadderPotential(E0)
    h1, rep = pq_step(S, PlaneRegion(), h0, E0, E1, F(1, 4), seed=2, samples=200)
    rng = np.random.default_rng(11)
    top = float(rep.sup_edit)
    for _ in range(10_000):
        x, y = rng.uniform(-1.5, 2.5, 2)
        # the difference of the two O(10) potential values carries ~1e-15 of
        # cancellation noise on top of the certified bound for the edit term
        d = h1.value(x, y) - h0.value(x, y)
        assert -1e-12 <= d <= top + 1e-12
        assert d < 0.25


def test_pq_step_neighborhood_region_freezes_the_outside():
    S = cantor_product_set(6)
    region = SetNeighborhood(6, F(1, 4), F(1, 500))
    h0 = LadderPotential(E0)
    h1, rep = pq_step(S, region, h0, E0, E1, F(1, 4), seed=3, samples=400)
    assert rep.delta == F(49, 100) * F(1, 500)
    tau, deff, n, rho = oracle_round(F(1, 4), E0, E1, F(1, 4), rep.delta, 6)
    assert rep.mover_depth == n and 12 <= n <= 16
    assert rep.margins["outside_equal"] == 1.0  # finite: off-region probes seen
    # 0.3 is in a level-2 gap: distance 0.05 >> radius 1/500 and beyond the
    # doubled halo, so the potential there is bitwise untouched
    assert h1.value(0.3, 0.3) == h0.value(0.3, 0.3)
    assert h1.gradient(0.3, 0.3) == h0.gradient(0.3, 0.3)
    assert rep.passed()


def test_pq_step_trivial_when_targets_coincide():
    S = cantor_product_set(6)
    h0 = LadderPotential(E0)
    h1, rep = pq_step(S, PlaneRegion(), h0, E0, E0, F(1, 4), seed=4, samples=120)
    assert rep.trivial
    assert rep.sup_edit == 0
    assert rep.mover_rho == 0
    for x, y in ((0.37, 0.81), (F(1, 3), F(2, 3)), (-0.4, 1.9)):
        assert h1.value(x, y) == h0.value(x, y)
        assert h1.gradient(x, y) == h0.gradient(x, y)
    assert rep.margins["set_gradient"] == 0.25


def test_pq_step_halo_precondition():
    S = cantor_product_set(6)
    region = SetNeighborhood(6, F(1, 4), F(1, 50))
    with pytest.raises(ContractError, match="doubled halo"):
        pq_step(S, region, LadderPotential(E0), E0, E1, F(1, 4), delta=F(1, 100))


def test_pq_step_reports_float_underflow_of_the_smoothing_scale():
    S = cantor_product_set(6)
    region = SetNeighborhood(6, F(1, 4), F(1, 10**280))
    with pytest.raises(ContractError, match="underflows float64"):
        pq_step(S, region, LadderPotential(E0), E0, E1, F(1, 4))


def test_pq_step_rejects_an_unreachable_rung():
    # the quadratic bound's first rung jump needs a y-move of 640, far beyond
    # the eps = 1/4 budget of a single round
    S = cantor_product_set(3)
    e0, e1 = (-7728.0, 644.0), (-30816.0, 1284.0)
    with pytest.raises(ContractError, match="ladder round conclusions violated"):
        pq_step(S, PlaneRegion(), LadderPotential(e0), e0, e1, F(1, 4), samples=80)


def test_pq_step_accepts_duck_typed_starting_potentials():
    S = cantor_product_set(6)

    class Linear:
        def value(self, x, y):
            return E0[0] * float(x) + E0[1] * float(y)

        def gradient(self, x, y):
            return E0

    h1a, _ = pq_step(S, PlaneRegion(), Linear(), E0, E1, F(1, 4), seed=5, samples=80)
    h1b, _ = pq_step(
        S, PlaneRegion(), LadderPotential(E0), E0, E1, F(1, 4), seed=5, samples=80
    )
    for x, y in ((0.2, 0.3), (F(1), F(0)), (0.9, -0.1)):
        assert h1a.value(x, y) == h1b.value(x, y)
        assert h1a.gradient(x, y) == h1b.gradient(x, y)


def test_pq_step_input_validation():
    S = cantor_product_set(6)
    h0 = LadderPotential(E0)
    with pytest.raises(ContractError, match="region must be"):
        pq_step(S, StripRegion(0.0, 1.0), h0, E0, E1, F(1, 4))
    with pytest.raises(ContractError, match="eps must be positive"):
        pq_step(S, PlaneRegion(), h0, E0, E1, 0.0)
    with pytest.raises(ContractError, match="cantor-product"):
        pq_step(empty_set(), PlaneRegion(), h0, E0, E1, F(1, 4))
    with pytest.raises(ContractError, match="depth >= 1"):
        pq_step(cantor_product_set(0), PlaneRegion(), h0, E0, E1, F(1, 4))
    bad = SingularSetSpec(
        "cantor-product", 3, lambda x, y: False, lambda x, y: 1.0, {"ratio": 0.3}
    )
    with pytest.raises(ContractError, match="ratio must lie"):
        pq_step(bad, PlaneRegion(), h0, E0, E1, F(1, 4))


# ---------------------------------------------------------------------------
# Full construction
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cons1():
    return build_pu_potential(SOFT, cantor_product_set(3), 1, seed=0, samples_per_check=120)


@pytest.fixture(scope="module")
def cons2():
    return build_pu_potential(SOFT, cantor_product_set(3), 2, seed=0, samples_per_check=120)


R1 = F(9, 1342177280)  # = (9/10) * (4^-13)/2, the round-1 region radius


def test_build_round1_frozen_geometry(cons1):
    assert cons1.depth == 1
    assert cons1.bound_tag == "scaled_p2"
    assert cons1.ratio == F(1, 4)
    rd = cons1.rounds[0]
    assert rd.delta == F(1, 2)
    assert rd.delta_eff == F(128, 375)
    assert rd.tau == F(16, 503)
    assert rd.mover_depth == 12
    assert rd.mover_rho == F(1, 4) ** 13
    assert rd.cutoff_depth == 3  # the declared set truncation
    assert rd.omega_depth == 12  # the mover's internal refinement
    assert rd.omega_radius == R1
    assert rd.eps_next == R1  # min(eps0/2, radius) = radius here
    assert 0.01 < float(rd.sup_edit) < 0.02
    ex = cons1.rungs[1].target[0] - cons1.rungs[0].target[0]
    ey = cons1.rungs[1].target[1] - cons1.rungs[0].target[1]
    mu = _level_masses(12, F(1, 4), F(1, 4) ** 13)[0]
    assert rd.sup_edit == (F(abs(ex)) + F(abs(ey))) * mu
    assert rd.crossing_cap == 1 / F(cons1.rungs[1].drop + cons1.rungs[1].lift + 6.0)
    assert rd.crossing_mass == _level_masses(12, F(1, 4), R1)[0]
    assert rd.crossing_mass <= rd.crossing_cap


def test_build_matches_design_oracle(cons2):
    rows = oracle_build_geometry(F(1, 4), list(cons2.rungs), 2, 3)
    for rd, (tau, deff, n, rho, radius) in zip(cons2.rounds, rows):
        assert rd.tau == tau
        assert rd.delta_eff == deff
        assert rd.mover_depth == n
        assert rd.mover_rho == rho
        assert rd.omega_radius == radius
    assert [rd.mover_depth for rd in cons2.rounds] == [12, 39]
    assert cons2.rounds[1].omega_radius == F(9, 20) * F(1, 4) ** 40
    assert cons2.rounds[1].eps_next == F(9, 20) * F(1, 4) ** 40
    assert cons2.rounds[1].cutoff_depth == 12
    assert cons2.rounds[1].delta == F(49, 100) * R1
    assert 1e-10 < float(cons2.rounds[1].sup_edit) < 1e-9


def test_build_gradient_is_pinned_exactly_on_the_deep_region(cons2):
    rungs = cons2.rungs
    # replicate the float accumulation base + sum of per-round moves
    gx = rungs[0].target[0]
    gy = rungs[0].target[1]
    for k in (1, 2):
        gx += rungs[k].target[0] - rungs[k - 1].target[0]
        gy += rungs[k].target[1] - rungs[k - 1].target[1]
    rng = np.random.default_rng(5)
    r2 = cons2.rounds[1].omega_radius
    for _ in range(6):
        cx = cons2.set_corner(rng)
        cy = cons2.set_corner(rng)
        assert cons2.potential_gradient(cx, cy) == (gx, gy)
        assert cons2.potential_gradient(cx + r2 / 3, cy - r2 / 3) == (gx, gy)
    assert (gx, gy) == pytest.approx(rungs[2].target, rel=1e-12)


def test_build_freezes_the_potential_outside_each_region(cons2):
    # Omega_1 = B(C_12, r_1): a probe is provably outside when one axis sits
    # 2 r_1 beyond the hull [0, 1], regardless of the other coordinate (the
    # depth-12 cells are ~6e-8 wide, so corner + 2 r_1 can stay inside one).
    r1 = cons2.rounds[0].omega_radius
    region1 = cons2.omega_region(1)
    rng = np.random.default_rng(9)
    for _ in range(6):
        cx = cons2.set_corner(rng)
        cy = cons2.set_corner(rng)
        for x, y in ((-2 * r1, cy), (cx, -2 * r1), (1 + 2 * r1, cy), (-2 * r1, -2 * r1)):
            assert not region1.contains(x, y)
            assert cons2.potential_value(x, y, depth=2) == cons2.potential_value(
                x, y, depth=1
            )
            assert cons2.potential_gradient(x, y, depth=2) == cons2.potential_gradient(
                x, y, depth=1
            )
    # far beyond the round-1 halo even round 1 is frozen
    assert cons2.potential_value(2.5, 0.3, depth=1) == cons2.potential_value(
        2.5, 0.3, depth=0
    )


def test_build_gradient_stays_in_the_band_between_regions(cons2):
    rng = np.random.default_rng(13)
    r2 = cons2.rounds[1].omega_radius
    for _ in range(6):
        cx = cons2.set_corner(rng)
        cy = cons2.set_corner(rng)
        g = cons2.potential_gradient(cx + 2 * r2, cy)
        band = _segment_distance(g, cons2.rungs[1].target, cons2.rungs[2].target)
        assert band < cons2.rungs[2].band


def test_build_steepness_ladder_increases_toward_the_set(cons2):
    r1 = cons2.rounds[0].omega_radius
    r2 = cons2.rounds[1].omega_radius
    corner = F(0)
    s_far = cons2.steepness(2.5, 2.7)  # frozen at rung 0
    s_mid = cons2.steepness(corner + 3 * r1 / 4, corner)  # round-1 plateau zone
    s_set = cons2.steepness(corner + r2 / 2, corner)  # round-2 plateau
    assert s_far == pytest.approx(
        2.0 * cons2.rungs[0].drop / cons2.rungs[0].lift, rel=1e-12
    )
    assert s_far < s_mid < s_set
    assert 30.0 < s_mid < 90.0
    assert s_set > 90.0


def test_build_depth_one_checks_pass_with_exact_pin_margin(cons1):
    report = run_pu_checks(cons1, samples_per_check=60, seed=1)
    assert report.passed
    by_name = {(r.name, r.round_index): r for r in report.results}
    pin = by_name[("rung-pin", 1)]
    assert pin.margin == pytest.approx(cons1.rungs[1].band, abs=1e-9)
    assert by_name[("edit-size", 1)].margin > 0.0
    # round 1 edits inside the whole plane, so there is no outside to freeze
    frozen = by_name[("frozen-outside", 1)]
    assert frozen.passed and frozen.margin == math.inf
    assert by_name[("crossing-cap", 1)].margin > 0.0
    assert by_name[("steepness", 1)].passed
    payload = json.loads(report.to_json())
    assert {row["name"] for row in payload} == {
        "rung-pin",
        "rung-band",
        "edit-size",
        "frozen-outside",
        "crossing-cap",
        "steepness",
    }


def test_build_depth_two_checks_pass(cons2):
    report = run_pu_checks(cons2, samples_per_check=90, seed=3)
    assert report.passed
    assert len(report.results) == 5 * 2 + 1
    by_name = {(r.name, r.round_index): r for r in report.results}
    assert by_name[("rung-pin", 2)].margin == pytest.approx(0.875, abs=1e-9)
    assert by_name[("frozen-outside", 2)].margin == 1.0  # finite and bitwise equal
    steep = by_name[("steepness", 2)]
    assert steep.threshold == 0.5 * cons2.rungs[2].drop / cons2.rungs[2].lift
    assert steep.margin > 70.0  # measured slope 2 A_2 / B_2 ~ 96 vs threshold 24


def test_field_slope_probe_reports_the_set_steepness(cons2):
    worst, threshold = field_slope_probe(cons2, n=12, seed=2)
    assert threshold == pytest.approx(24.0, abs=0.01)
    assert worst == pytest.approx(96.0, abs=0.01)
    assert worst > threshold


def test_build_is_deterministic():
    a = build_pu_potential(SOFT, cantor_product_set(3), 1, seed=0, samples_per_check=60)
    b = build_pu_potential(SOFT, cantor_product_set(3), 1, seed=0, samples_per_check=60)
    assert constants_json(a) == constants_json(b)
    for x, y in ((0.1, 0.9), (F(1, 3), F(1, 5))):
        assert a.potential_value(x, y) == b.potential_value(x, y)
        assert a.potential_gradient(x, y) == b.potential_gradient(x, y)


def test_build_generalizes_to_smaller_ratios():
    S = cantor_product_set(2, 0.2)
    cons = build_pu_potential(SOFT, S, 1, seed=0, samples_per_check=80)
    ratio = F(float(S.params["ratio"]))
    tau, deff, n, rho = oracle_round(
        ratio, cons.rungs[0].target, cons.rungs[1].target, F(1, 4), F(1, 2), 2
    )
    assert cons.rounds[0].mover_depth == n == 9
    assert cons.rounds[0].mover_rho == rho
    assert run_pu_checks(cons, samples_per_check=40, seed=5).passed


def test_build_rejects_the_quadratic_bound_at_round_one():
    with pytest.raises(ContractError, match="round 1"):
        build_pu_potential(
            superlinear_bound("p2"), cantor_product_set(3), 1, samples_per_check=60
        )


def test_build_input_validation():
    S = cantor_product_set(3)
    with pytest.raises(ContractError, match="integer >= 1"):
        build_pu_potential(SOFT, S, 0)
    with pytest.raises(ContractError, match="integer >= 1"):
        build_pu_potential(SOFT, S, True)
    with pytest.raises(ContractError, match="cantor-product"):
        build_pu_potential(SOFT, empty_set(), 1)
    with pytest.raises(ContractError, match="depth >= 1"):
        build_pu_potential(SOFT, cantor_product_set(0), 1)


def test_construction_regions_and_depth_selection(cons1):
    assert cons1.omega_region(0) == PlaneRegion()
    assert cons1.omega_region(1) == SetNeighborhood(12, F(1, 4), R1)
    with pytest.raises(ContractError, match="depth must lie"):
        cons1.potential_value(0.0, 0.0, depth=5)
    with pytest.raises(ContractError, match="depth must lie"):
        cons1.potential_gradient(0.0, 0.0, depth=-1)
    # steepness refuses fields whose y-slope is not positive
    flipped = dataclasses.replace(cons1, potential=LadderPotential((1.0, -1.0)))
    with pytest.raises(ContractError, match="steepness undefined"):
        flipped.steepness(0.0, 0.0)


# ---------------------------------------------------------------------------
# Calibration bridge
# ---------------------------------------------------------------------------


def test_calibration_bridge_passes_hypotheses_and_inequality(cons2):
    phi = as_calibration_potential(cons2)
    assert phi.gradient(0.3, 0.7) == pytest.approx(
        cons2.potential_gradient(0.3, 0.7), rel=1e-12
    )
    report = verify_out_hypotheses(phi, SOFT, S=cons2.set_spec, grid=24, shells=())
    assert report.passed
    assert report.alpha.worst_margin > 0.0
    assert report.beta.worst_margin > 0.0
    assert report.gamma.worst_margin > 0.0
    cal = assemble_calibrated_lagrangian(
        phi, SOFT, S=cons2.set_spec, grid=32, shells=()
    )
    assert cal.report.passed
    rep = calibration_inequality_test(cal, n=80, seed=0)
    assert rep.passed
    assert rep.violations == 0
    assert rep.n_paths == 80


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def test_constants_json_round_trips_exact_values(cons1):
    payload = json.loads(constants_json(cons1))
    assert payload["bound"] == "scaled_p2"
    assert payload["depth"] == 1
    assert payload["set_depth"] == 3
    assert payload["eps0"] == 0.25
    assert Fraction(payload["exact"]["omega_radii"][0]) == R1
    assert Fraction(payload["exact"]["taus"][0]) == F(16, 503)
    assert Fraction(payload["exact"]["mover_rhos"][0]) == F(1, 4) ** 13
    assert payload["rounds"][0]["mover_depth"] == 12
    assert payload["rungs"][1]["band"] == 0.75


def test_intervals_csv_is_display_clipped_but_honest(cons1):
    text = intervals_csv(cons1, 1)
    lines = text.strip().split("\n")
    assert lines[0].startswith("# round 1: display depth 8")
    assert str(R1) in lines[0]
    assert lines[1] == "left,right"
    assert 1 <= len(lines) - 2 <= 64
    for row in lines[2:]:
        lo, hi = map(float, row.split(","))
        assert lo < hi


def test_grid_dump_parses_and_has_the_base_slope_far_out(cons1):
    text = grid_dump(cons1, 0, nx=9, ny=9)
    lines = text.strip().split("\n")
    assert lines[0] == "x,y,value,grad_x,grad_y"
    assert len(lines) == 1 + 81
    x, y, v, gx, gy = map(float, lines[1].split(","))
    assert (gx, gy) == cons1.rungs[0].target
    assert v == pytest.approx(gx * x + gy * y)


def test_write_artifacts_manifest_and_determinism(cons1, tmp_path):
    out = tmp_path / "artifacts"
    manifest = write_artifacts(cons1, out, seed=0)
    assert manifest["files"] == sorted(
        ["constants.json", "intervals_round1.csv", "grid_phi0.csv", "grid_phi1.csv", "probes.csv"]
    )
    assert "manifest.json" not in manifest["files"]
    assert manifest["bound"] == "scaled_p2"
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk == json.loads(json.dumps(manifest))
    before = {name: (out / name).read_bytes() for name in manifest["files"]}
    write_artifacts(cons1, out, seed=0)
    after = {name: (out / name).read_bytes() for name in manifest["files"]}
    assert before == after
    probes = (out / "probes.csv").read_text().strip().split("\n")
    assert probes[0].startswith("round,offset_log2")
    assert len(probes) == 1 + 9 * cons1.depth
