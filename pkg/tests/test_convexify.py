"""Tests for slope-variable convex envelopes and relaxation checks."""

import numpy as np
import pytest

from varcal.core import BoundaryProblem, ContractError, make_lagrangian
from varcal.convexify import (
    EnvelopeTable,
    convex_envelope,
    convexified_lagrangian,
    relaxation_gap_check,
)
from varcal.direct_method import MinimizeConfig


def _pairwise_hull_oracle(p, f):
    """Brute-force lower hull: min over all covering chords at each grid point."""
    n = p.size
    env = f.copy()
    for i in range(n):
        for j in range(n):
            for k in range(j + 1, n):
                if p[j] <= p[i] <= p[k]:
                    t = (p[i] - p[j]) / (p[k] - p[j])
                    chord = (1 - t) * f[j] + t * f[k]
                    env[i] = min(env[i], chord)
    return env


# ---------------------------------------------------------------------------
# convex_envelope
# ---------------------------------------------------------------------------


def test_double_well_envelope_closed_form():
    p = np.linspace(-2.0, 2.0, 401)
    f = (p * p - 1.0) ** 2
    table = convex_envelope(p, f)
    inside = np.abs(p) <= 1.0
    np.testing.assert_allclose(table.values[inside], 0.0, atol=1e-6)
    np.testing.assert_allclose(table.values[~inside], f[~inside], atol=1e-6)


def test_convex_input_is_contact_everywhere():
    p = np.linspace(-3.0, 3.0, 121)
    f = np.abs(p)
    table = convex_envelope(p, f)
    np.testing.assert_allclose(table.values, f, atol=0.0)
    assert np.all(table.contact)


def test_two_well_min_parabola_matches_pairwise_oracle():
    p = np.linspace(-3.0, 3.0, 61)
    f = np.minimum((p + 1.0) ** 2, (p - 1.0) ** 2)
    table = convex_envelope(p, f)
    oracle = _pairwise_hull_oracle(p, f)
    np.testing.assert_allclose(table.values, oracle, atol=1e-12)
    inside = np.abs(p) <= 1.0
    np.testing.assert_allclose(table.values[inside], 0.0, atol=1e-12)
    outside = np.abs(p) > 1.0
    np.testing.assert_allclose(
        table.values[outside], (np.abs(p[outside]) - 1.0) ** 2, atol=1e-12
    )


def test_envelope_invariants_on_random_samples():
    rng = np.random.default_rng(23)
    for _ in range(10):
        p = np.linspace(-5, 5, 201)
        f = rng.normal(size=201).cumsum() / 10.0
        table = convex_envelope(p, f)
        scale = max(1.0, np.max(np.abs(f)))
        assert np.all(table.values <= f + 1e-11 * scale)
        second = np.diff(table.values, 2)
        assert np.min(second) >= -1e-10
        # Idempotence: envelope of the envelope is itself, exactly.
        again = convex_envelope(p, table.values)
        np.testing.assert_array_equal(again.values, table.values)


def test_envelope_affine_between_contacts():
    p = np.linspace(-2.0, 2.0, 81)
    f = (p * p - 1.0) ** 2
    table = convex_envelope(p, f)
    second = np.diff(table.values, 2)
    interior_noncontact = ~table.contact[1:-1]
    assert np.all(np.abs(second[interior_noncontact]) <= 1e-10)


def test_envelope_refinement_stability():
    coarse = np.linspace(-2.0, 2.0, 41)
    fine = np.linspace(-2.0, 2.0, 81)  # superset at even indices
    f = lambda p: (p * p - 1.0) ** 2  # noqa: E731
    env_c = convex_envelope(coarse, f(coarse))
    env_f = convex_envelope(fine, f(fine))
    osc = np.max(np.abs(np.diff(f(coarse))))
    assert np.max(np.abs(env_f.values[::2] - env_c.values)) <= osc + 1e-12


def test_envelope_input_validation():
    with pytest.raises(ContractError):
        convex_envelope([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ContractError):
        convex_envelope([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        convex_envelope([0.0, 0.5, 1.0], [1.0, np.inf, 3.0])


def test_envelope_csv_export():
    p = np.linspace(-1.0, 1.0, 5)
    table = convex_envelope(p, p * p)
    lines = table.to_csv().strip().splitlines()
    assert lines[0] == "p,f,envelope,contact"
    assert len(lines) == 6
    assert lines[1].endswith(",1")  # convex input: contact at the left edge


# ---------------------------------------------------------------------------
# convexified_lagrangian
# ---------------------------------------------------------------------------


def test_convexified_fixed_point_on_convex_lagrangians():
    # "At all sampled triples": slopes drawn from the envelope's own grid
    # (between grid points the PL interpolant legitimately sits above L).
    rng = np.random.default_rng(31)
    grid = np.linspace(-8.0, 8.0, 513)
    for key in ("quadratic", "quartic", "p2y2"):
        L = make_lagrangian(key)
        Lc = convexified_lagrangian(L, window=8.0)
        for _ in range(25):
            x, y = rng.uniform(-1, 1, size=2)
            p = float(grid[rng.integers(80, 433)])
            assert Lc(x, y, p) == pytest.approx(float(L(x, y, p)), abs=1e-6)


def test_convexified_double_well_values():
    L = make_lagrangian("double_well_y")
    Lc = convexified_lagrangian(L, window=64.0)
    assert Lc(0.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-9)
    assert Lc(0.0, 0.5, 0.0) == pytest.approx(0.25, abs=1e-9)
    # Dominance and bound preservation at sampled triples (grid slopes).
    rng = np.random.default_rng(5)
    grid = np.linspace(-64.0, 64.0, 513)
    for _ in range(50):
        x, y = rng.uniform(-1, 1, size=2)
        p = float(grid[rng.integers(244, 269)])
        val = Lc(x, y, p)
        assert val <= float(L(x, y, p)) + 1e-9
        assert val >= float(L.bound(p)) - 1e-9


def test_convexified_window_doubles_on_extreme_queries():
    L = make_lagrangian("double_well")
    Lc = convexified_lagrangian(L, window=4.0)
    ev = Lc.eval_fn
    assert ev.window == 4.0
    Lc(0.0, 0.0, 10.0)  # beyond 0.9 * 4
    assert ev.window >= 16.0
    # After doubling, the value is the true envelope, not an affine guess.
    assert Lc(0.0, 0.0, 10.0) == pytest.approx((100.0 - 1.0) ** 2, rel=1e-3)


def test_convexified_cache_is_bounded_lru():
    L = make_lagrangian("p2y2")
    Lc = convexified_lagrangian(L, window=4.0, max_tables=8)
    ev = Lc.eval_fn
    for k in range(30):
        Lc(0.0, float(k), 1.0)
    assert len(ev.tables) <= 8
    assert ev.tables_built == 30


def test_convexified_accepts_array_queries():
    L = make_lagrangian("double_well")
    Lc = convexified_lagrangian(L, window=8.0)
    p = np.array([-0.5, 0.0, 0.5, 2.0])
    out = Lc(np.zeros(4), np.zeros(4), p)
    np.testing.assert_allclose(out[:3], 0.0, atol=1e-9)
    assert out[3] == pytest.approx(9.0, abs=1e-6)


# ---------------------------------------------------------------------------
# relaxation_gap_check
# ---------------------------------------------------------------------------


def test_relaxation_gap_quadratic_zero():
    L = make_lagrangian("quadratic")
    bp = BoundaryProblem(0.0, 0.0, 1.0, 1.0)
    rep = relaxation_gap_check(L, bp, MinimizeConfig(n_cells=4, seed=1), levels=2)
    assert abs(rep.gap) <= 1e-6
    assert rep.passed


def test_relaxation_gap_double_well_closes():
    L = make_lagrangian("double_well")
    bp = BoundaryProblem(0.0, 0.0, 1.0, 0.0)
    rep = relaxation_gap_check(L, bp, MinimizeConfig(n_cells=4, seed=1), levels=4)
    assert rep.ground_convexified.value == pytest.approx(0.0, abs=1e-8)
    assert rep.gap <= 1e-3
    assert rep.ground.value >= rep.ground_convexified.value - 1e-9


def test_relaxation_gap_double_well_slope_one():
    L = make_lagrangian("double_well")
    bp = BoundaryProblem(0.0, 0.0, 1.0, 1.0)
    rep = relaxation_gap_check(L, bp, MinimizeConfig(n_cells=4, seed=1), levels=3)
    assert rep.ground.value == pytest.approx(0.0, abs=1e-8)
    assert rep.ground_convexified.value == pytest.approx(0.0, abs=1e-8)
    assert rep.passed


def test_envelope_table_type():
    p = np.linspace(-1, 1, 11)
    t = convex_envelope(p, p**4)
    assert isinstance(t, EnvelopeTable)
    # Interpolated call sits between the function and the covering chord.
    chord = 0.25 * 0.2**4 + 0.75 * 0.4**4
    assert 0.35**4 - 1e-12 <= t(0.35) <= chord + 1e-12
    # Affine extension beyond the table window.
    left = t(-2.0)
    slope = (t.values[1] - t.values[0]) / (p[1] - p[0])
    assert left == pytest.approx(t.values[0] + slope * (-2.0 - p[0]))
