"""Constructive regularity constants and probes for singular behaviour.

The module packages four desk-scale instruments:

* :func:`tonelli_constants` follows a constructive recipe that turns a
  Lagrangian's certified metadata (box sup, superlinear bound, Lipschitz
  modulus in the state variable) into explicit constants ``(C, N, D, M,
  delta)`` controlling when steep slopes of near-minimizers must carry
  little energy;
* :func:`regularity_check` and :func:`trichotomy_check` evaluate the two
  conditional conclusions built on those constants -- the excess-controlled
  bound on the steep-set energy, and the chord trichotomy (all chords
  moderate, all steeply up, or all steeply down);
* :func:`sample_singular_points` scans a grid of boundary conditions for
  discrete blow-up: graph points whose local slope keeps growing by a fixed
  factor as the minimization mesh refines;
* :func:`lipschitz_intersection_probe` and :func:`excess_slope_probe`
  measure how a recorded point cloud meets random Lipschitz graphs and
  vertical lines, and how the ground energy drops below a steep witness
  inside a cone of endpoints.

All sampling is seeded; grid sweeps derive one seed per task index so
reports merge deterministically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    BoundaryProblem,
    ContractError,
    Lagrangian,
    PiecewisePath,
    energy,
    excess,
)
from .direct_method import (
    MinimizeConfig,
    estimate_ground_energy,
    graded_mesh,
    minimize_fixed_mesh,
)

__all__ = [
    "TonelliConstants",
    "tonelli_constants",
    "RegularityReport",
    "regularity_check",
    "TrichotomyReport",
    "trichotomy_check",
    "BoundaryGrid",
    "BlowUpCandidate",
    "SingularSample",
    "sample_singular_points",
    "IntersectionStats",
    "lipschitz_intersection_probe",
    "SlopeTable",
    "cone_contains",
    "excess_slope_probe",
]


# ---------------------------------------------------------------------------
# Tonelli constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TonelliConstants:
    """Constants produced by the constructive partial-regularity recipe.

    ``C`` bounds the Lagrangian on the ``R``-box, ``N`` is the slope beyond
    which the certified bound dominates ``2(R+C)|p|``, ``D`` bounds the
    Lagrangian on the enlarged box reachable by ``N``-moderate paths, ``M``
    the slope beyond which the bound dominates ``10(1+D/R)|p|``, and
    ``delta`` the interval length under which the Lipschitz-in-y budget
    stays affordable (``math.inf`` when the Lagrangian does not depend on
    y).
    """

    R: float
    C: float
    N: float
    D: float
    M: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0.0):
            raise ContractError(f"box radius must be positive and finite, got {self.R!r}")
        if not self.C >= 1.0:
            raise ContractError(f"C must be at least 1, got {self.C!r}")
        if not self.N >= self.R + 1.0:
            raise ContractError(f"N must be at least R+1, got N={self.N!r}, R={self.R!r}")
        if not self.D >= self.C * self.R:
            raise ContractError(f"D must be at least C*R, got D={self.D!r}")
        if not self.M >= self.N + 2.0 * self.R:
            raise ContractError(f"M must be at least N+2R, got M={self.M!r}")
        if not self.delta > 0.0:
            raise ContractError(f"delta must be positive, got {self.delta!r}")

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "C": self.C,
            "N": self.N,
            "D": self.D,
            "M": self.M,
            "delta": None if math.isinf(self.delta) else self.delta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _box_sup(L: Lagrangian, rx: float, ry: float, rp: float, n: int) -> float:
    """Sup of L over the grid of the box |x|<=rx, |y|<=ry, |p|<=rp.

    ``linspace`` includes the box corners, where the sup of every registry
    Lagrangian is attained; the grid value is therefore exact for them and
    a lower estimate in general.
    """
    xs = np.linspace(-rx, rx, n)
    ys = np.linspace(-ry, ry, n)
    ps = np.linspace(-rp, rp, n)
    gx, gy, gp = np.meshgrid(xs, ys, ps, indexing="ij")
    if L.vectorized:
        vals = np.asarray(L.eval_fn(gx, gy, gp), dtype=float)
        vals = np.broadcast_to(vals, gx.shape)
    else:
        vals = np.empty(gx.shape)
        for idx in np.ndindex(gx.shape):
            vals[idx] = L.eval_fn(float(gx[idx]), float(gy[idx]), float(gp[idx]))
    if not np.all(np.isfinite(vals)):
        raise ContractError("Lagrangian is not finite on the requested box")
    return float(np.max(vals))


def _integer_threshold(omega, slope: float) -> int:
    """Smallest integer q >= 1 with omega(q) >= slope * q.

    Convexity of omega with omega(0) = 0 makes omega(p)/p nondecreasing, so
    once the inequality holds at q it holds for every p >= q.  The bisection
    witness seeds the scan; the two loops settle float dust on either side.
    """
    q = max(1, math.ceil(omega.slope_threshold(slope)))
    while q > 1 and float(omega(q - 1)) >= slope * (q - 1):
        q -= 1
    while not float(omega(q)) >= slope * q:
        q += 1
    return q


def tonelli_constants(L: Lagrangian, R: float, *, grid: int = 33) -> TonelliConstants:
    """Constructive constants for the ``R``-box, following the proof recipe.

    The steps, in order: ``C = max(1, sup L)`` on the ``R``-box; ``N`` the
    smallest integer slope past which the certified bound dominates
    ``2(R+C)|p|`` (floored at ``R+1``); ``D = max(CR, sup L)`` over
    ``|x| <= R, |y| <= N, |p| <= N+2R``; ``M`` the smallest integer slope
    past which the bound dominates ``10(1+D/R)|p|`` (floored at ``N+2R``);
    and ``delta`` the reciprocal Lipschitz-in-y constant of L over the box
    of radius ``max(R, M, 5R+4RM)``, with ``math.inf`` when that constant
    is zero.

    Requires the Lagrangian to carry ``lipschitz_y`` metadata; ``grid``
    sets the per-axis resolution of the sup scans.
    """
    R = float(R)
    if not (math.isfinite(R) and R > 0.0):
        raise ContractError(f"box radius must be positive and finite, got {R!r}")
    if grid < 2:
        raise ContractError("grid must have at least 2 points per axis")
    if L.lipschitz_y is None:
        raise ContractError(
            f"Lagrangian {L.name!r} carries no Lipschitz-in-y metadata (lipschitz_y)"
        )
    C = max(1.0, _box_sup(L, R, R, R, grid))
    N = max(R + 1.0, float(_integer_threshold(L.bound, 2.0 * (R + C))))
    D = max(C * R, _box_sup(L, R, N, N + 2.0 * R, grid))
    M = max(N + 2.0 * R, float(_integer_threshold(L.bound, 10.0 * (1.0 + D / R))))
    lip = float(L.lipschitz_y(max(R, M, 5.0 * R + 4.0 * R * M)))
    if lip < 0.0 or not math.isfinite(lip):
        raise ContractError(f"lipschitz_y returned an invalid constant {lip!r}")
    delta = math.inf if lip == 0.0 else 1.0 / lip
    return TonelliConstants(R=R, C=C, N=N, D=D, M=M, delta=delta)


# ---------------------------------------------------------------------------
# Excess-controlled steep-set energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    """Both sides of the steep-set energy bound, plus applicability.

    The conclusion under test: the energy carried by cells steeper than
    ``M`` is at most twice the excess.  When any hypothesis fails the
    report is marked inapplicable -- a conditional statement with a false
    premise is not a finding.
    """

    applicable: bool
    reasons: tuple
    steep_integral: float
    excess: float
    bound: float
    steep_cells: tuple
    steep_drift: float
    hypothesis_left: float
    hypothesis_right: float
    constants: TonelliConstants

    @property
    def violation(self) -> bool:
        return self.applicable and not self.steep_integral <= self.bound

    @property
    def passed(self) -> bool:
        return not self.violation

    def to_json(self) -> str:
        doc = {
            "applicable": self.applicable,
            "reasons": list(self.reasons),
            "steep_integral": self.steep_integral,
            "excess": self.excess,
            "bound": self.bound,
            "steep_cells": list(self.steep_cells),
            "violation": self.violation,
        }
        return json.dumps(doc, sort_keys=True)


def regularity_check(
    L: Lagrangian,
    u: PiecewisePath,
    consts: TonelliConstants,
    ground,
    *,
    tol: float = 1e-9,
) -> RegularityReport:
    """Test the steep-set energy of ``u`` against twice its excess.

    ``ground`` supplies the infimal-energy estimate for the path's boundary
    data (any object with ``value``, ``trend`` and ``problem``, such as
    direct_method.GroundEnergyEstimate); mismatched boundary data is a
    contract error.  The hypotheses -- path inside the R-box, span shorter
    than ``delta``, and excess plus endpoint variation plus steep drift at
    most ``R`` times the span, checked with the window equal to the full
    span -- gate applicability; the recorded conclusion compares the energy
    of cells steeper than ``M`` against ``2 * excess + tol``.
    """
    exc = excess(L, u, ground)
    rep = energy(L, u)
    slopes = u.slopes()
    steep = np.abs(slopes) > consts.M
    steep_cells = tuple(int(i) for i in np.nonzero(steep)[0])
    per_cell = np.asarray(rep.per_cell)
    steep_integral = float(np.sum(per_cell[steep])) if steep_cells else 0.0
    steep_drift = float(abs(np.sum((np.diff(u.values))[steep])))

    span = u.b - u.a
    swing = float(abs(u.values[-1] - u.values[0]))
    hyp_left = exc.excess + swing + steep_drift
    hyp_right = consts.R * span

    reasons = []
    if not (u.a >= -consts.R and u.b <= consts.R):
        reasons.append("domain leaves the R-box")
    if not float(np.max(np.abs(u.values))) <= consts.R:
        reasons.append("path values leave the R-box")
    if not span < consts.delta:
        reasons.append("span not shorter than delta")
    if not hyp_left <= hyp_right:
        reasons.append("excess hypothesis fails")

    return RegularityReport(
        applicable=not reasons,
        reasons=tuple(reasons),
        steep_integral=steep_integral,
        excess=exc.excess,
        bound=2.0 * exc.excess + tol,
        steep_cells=steep_cells,
        steep_drift=steep_drift,
        hypothesis_left=hyp_left,
        hypothesis_right=hyp_right,
        constants=consts,
    )


# ---------------------------------------------------------------------------
# Chord trichotomy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrichotomyReport:
    """Chord classification of a path against the (N, M) constants.

    ``classification`` is one of ``"moderate"`` (every chord slope has
    magnitude at most M), ``"steep-up"`` (every chord slope is at least N),
    ``"steep-down"`` (at most -N), or ``"violation"`` when none of the
    three alternatives holds; the first alternative that holds wins, so
    paths with all chords in [N, M] report as moderate.  ``witnesses``
    lists ``(i, j, slope)`` node-index chords ruling out each alternative
    when a violation is flagged.
    """

    classification: str
    witnesses: tuple
    min_slope: float
    max_slope: float
    lagrangian: str

    @property
    def violation(self) -> bool:
        return self.classification == "violation"


def trichotomy_check(L: Lagrangian, u: PiecewisePath, consts: TonelliConstants) -> TrichotomyReport:
    """Classify every chord of ``u`` into the moderate/steep trichotomy.

    A chord slope over nodes ``i < j`` is an h-weighted average of the cell
    slopes between them, so the extreme chords are attained on single cells;
    the classification therefore needs only the cell slopes.  The Lagrangian
    is carried for report context only.
    """
    slopes = u.slopes()
    lo_i = int(np.argmin(slopes))
    hi_i = int(np.argmax(slopes))
    lo = float(slopes[lo_i])
    hi = float(slopes[hi_i])
    if max(abs(lo), abs(hi)) <= consts.M:
        cls, witnesses = "moderate", ()
    elif lo >= consts.N:
        cls, witnesses = "steep-up", ()
    elif hi <= -consts.N:
        cls, witnesses = "steep-down", ()
    else:
        # one chord rules out each alternative
        over_i = lo_i if abs(lo) > abs(hi) else hi_i
        witnesses = (
            (over_i, over_i + 1, float(slopes[over_i])),
            (lo_i, lo_i + 1, lo),
            (hi_i, hi_i + 1, hi),
        )
        cls = "violation"
    return TrichotomyReport(
        classification=cls,
        witnesses=witnesses,
        min_slope=lo,
        max_slope=hi,
        lagrangian=L.name,
    )


# ---------------------------------------------------------------------------
# Blow-up sampling over a boundary grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryGrid:
    """Rectangular family of boundary problems on a fixed interval."""

    a: float
    b: float
    left_values: tuple
    right_values: tuple

    def __post_init__(self):
        object.__setattr__(self, "left_values", tuple(float(v) for v in self.left_values))
        object.__setattr__(self, "right_values", tuple(float(v) for v in self.right_values))
        if not self.a < self.b:
            raise ContractError(f"grid interval needs a < b, got a={self.a}, b={self.b}")
        if not (self.left_values and self.right_values):
            raise ContractError("boundary grid needs at least one value per endpoint")

    def problems(self) -> tuple:
        return tuple(
            BoundaryProblem(self.a, A, self.b, B)
            for A in self.left_values
            for B in self.right_values
        )

    def describe(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "left_values": list(self.left_values),
            "right_values": list(self.right_values),
        }


@dataclass(frozen=True)
class BlowUpCandidate:
    """Graph point whose local slope kept growing under mesh refinement.

    ``slopes`` records the max adjacent-cell slope magnitude at (roughly)
    this location per refinement level; ``exponent`` estimates e in
    slope ~ width^(-e) from the measured widths.
    """

    x: float
    y: float
    exponent: float
    slopes: tuple
    problem_index: int

    def __post_init__(self):
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        if len(self.slopes) < 2:
            raise ContractError("a candidate needs slopes from at least two levels")
        if any(b <= a for a, b in zip(self.slopes, self.slopes[1:])):
            raise ContractError("candidate slopes must grow strictly across levels")


@dataclass(frozen=True)
class SingularSample:
    """Blow-up candidates collected over a boundary grid.

    The sampled surrogate covers only the scanned boundary conditions; it
    is a heuristic stand-in for the limiting singular set, and reports say
    so via the grid descriptor and growth threshold carried here.
    """

    points: tuple
    levels: tuple
    grid: BoundaryGrid
    growth: float

    @property
    def is_empty(self) -> bool:
        return not self.points

    def xy(self) -> np.ndarray:
        """(n, 2) float array of the candidate locations."""
        if self.is_empty:
            return np.zeros((0, 2))
        return np.array([(c.x, c.y) for c in self.points])

    def to_csv(self) -> str:
        lines = ["x,y,exponent,problem_index," + ",".join(f"slope_l{k}" for k in range(len(self.levels)))]
        for c in self.points:
            lines.append(
                f"{c.x!r},{c.y!r},{c.exponent!r},{c.problem_index},"
                + ",".join(repr(s) for s in c.slopes)
            )
        return "\n".join(lines) + "\n"

    def manifest(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "levels": list(self.levels),
            "growth": self.growth,
            "count": len(self.points),
        }


def _local_slope(path: PiecewisePath, x: float) -> tuple:
    """(max adjacent |slope|, cell width) at location x inside the path."""
    slopes = np.abs(path.slopes())
    widths = np.diff(path.nodes)
    j = min(int(np.searchsorted(path.nodes, x)), path.nodes.size - 1)
    if path.nodes[j] == x:
        # a shared node sees both adjacent cells
        cells = [c for c in (j - 1, j) if 0 <= c < slopes.size]
    else:
        cells = [min(max(j - 1, 0), slopes.size - 1)]
    best = max(cells, key=lambda c: slopes[c])
    return float(slopes[best]), float(widths[best])


def sample_singular_points(
    L: Lagrangian,
    grid: BoundaryGrid,
    cfg: MinimizeConfig,
    *,
    levels: int = 3,
    growth: float = 1.8,
    grade_ratio: float = 1.0,
    slope_floor: float = 1.0,
) -> SingularSample:
    """Scan a boundary grid for discrete blow-up under mesh refinement.

    For each boundary problem the energy is minimized on ``levels`` meshes
    of doubling cell count (graded toward the left endpoint when
    ``grade_ratio`` < 1, each level warm-started from the previous optimum);
    a node of the finest path becomes a candidate when its local slope
    magnitude grew by a factor of at least ``growth`` at every level and
    ends above ``slope_floor``.  Genuine infinite-derivative points roughly
    double their slope per level, kinks saturate; the default 1.8 separates
    the two.  Slope caps defeat the detection, so capped configs are
    rejected.
    """
    if levels < 3:
        raise ContractError("blow-up detection needs at least 3 refinement levels")
    if not growth > 1.0:
        raise ContractError("growth factor must exceed 1")
    if cfg.slope_cap is not None:
        raise ContractError("slope-capped configs cannot detect slope blow-up")

    cell_counts = tuple(cfg.n_cells * 2**k for k in range(levels))
    candidates = []
    for t, problem in enumerate(grid.problems()):
        task_cfg = replace(cfg, seed=cfg.seed + 7919 * t)
        paths = []
        prev = None
        for n in cell_counts:
            mesh = graded_mesh(problem, n, grade_ratio)
            if prev is None:
                result = minimize_fixed_mesh(L, problem, task_cfg, nodes=mesh)
            else:
                warm = PiecewisePath(mesh, prev(mesh))
                result = minimize_fixed_mesh(L, problem, task_cfg, warm_start=warm)
            prev = result.path
            paths.append(result.path)

        finest = paths[-1]
        for x in finest.nodes:
            x = float(x)
            track = [_local_slope(p, x) for p in paths]
            slopes = [s for s, _ in track]
            widths = [w for _, w in track]
            if slopes[-1] < slope_floor or slopes[0] <= 0.0:
                continue
            if any(s1 < growth * s0 for s0, s1 in zip(slopes, slopes[1:])):
                continue
            rates = [
                math.log(s1 / s0) / math.log(w0 / w1)
                for s0, s1, w0, w1 in zip(slopes, slopes[1:], widths, widths[1:])
                if w1 < w0
            ]
            exponent = sum(rates) / len(rates) if rates else math.nan
            candidates.append(
                BlowUpCandidate(
                    x=x,
                    y=float(finest(x)),
                    exponent=exponent,
                    slopes=tuple(slopes),
                    problem_index=t,
                )
            )
    return SingularSample(
        points=tuple(candidates), levels=cell_counts, grid=grid, growth=growth
    )


# ---------------------------------------------------------------------------
# Intersection probe
# ---------------------------------------------------------------------------


def _union_length(intervals) -> float:
    """Total length of a union of closed intervals."""
    if not intervals:
        return 0.0
    total = 0.0
    cur_lo, cur_hi = None, None
    for lo, hi in sorted(intervals):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    return total + (cur_hi - cur_lo)


@dataclass(frozen=True)
class IntersectionStats:
    """Measure of gamma-neighborhood hits per probe family, per gamma.

    ``gammas`` is recorded in decreasing order, so every series is
    non-increasing along it by nesting of the neighborhoods (the same
    samples are reused across gammas).  Vertical-line measures are exact
    interval unions; curve measures are fine-grid estimates.  Explicitly
    supplied curves additionally report arclength-weighted measures, the
    quantity that stays bounded below when the cloud rides a rectifiable
    curve.
    """

    gammas: tuple
    line_mean: tuple
    line_max: tuple
    curve_mean: tuple
    curve_max: tuple
    given_measures: tuple
    n_curves: int
    n_lines: int
    lip_bound: float
    seed: int
    sample_size: int

    @property
    def monotone(self) -> bool:
        def ok(series):
            return all(b <= a + 1e-15 for a, b in zip(series, series[1:]))

        return (
            ok(self.line_mean)
            and ok(self.line_max)
            and ok(self.curve_mean)
            and ok(self.curve_max)
            and all(ok(series) for series in self.given_measures)
        )

    def to_csv(self) -> str:
        lines = ["gamma,line_mean,line_max,curve_mean,curve_max"]
        for k, g in enumerate(self.gammas):
            lines.append(
                f"{g!r},{self.line_mean[k]!r},{self.line_max[k]!r},"
                f"{self.curve_mean[k]!r},{self.curve_max[k]!r}"
            )
        return "\n".join(lines) + "\n"


def lipschitz_intersection_probe(
    sample: SingularSample,
    n_curves: int,
    lip_bound: float,
    seed: int = 0,
    *,
    gammas=(0.1, 0.05, 0.025, 0.0125),
    curve_fns=(),
    knots: int = 33,
    grid_points: int = 1024,
) -> IntersectionStats:
    """Measure how the sample cloud meets Lipschitz graphs and vertical lines.

    Random piecewise-linear graphs with ``knots`` knots and slopes uniform
    in ``[-lip_bound, lip_bound]`` are drawn over the cloud's bounding box;
    for each gamma the probe records the 1-D measure of the set of
    abscissae whose graph point lies within gamma of the cloud (fine-grid
    estimate), and likewise the exact measure met by ``n_curves`` random
    vertical lines.  Callables in ``curve_fns`` are probed as given curves
    with arclength weighting.  An empty sample reports zeros throughout.
    """
    if not n_curves >= 0:
        raise ContractError("n_curves must be non-negative")
    if not lip_bound >= 0.0:
        raise ContractError("lip_bound must be non-negative")
    gammas = tuple(sorted((float(g) for g in gammas), reverse=True))
    if any(g < 0.0 for g in gammas) or not gammas:
        raise ContractError("gammas must be non-negative and non-empty")

    zeros = tuple(0.0 for _ in gammas)
    if sample.is_empty:
        return IntersectionStats(
            gammas=gammas,
            line_mean=zeros,
            line_max=zeros,
            curve_mean=zeros,
            curve_max=zeros,
            given_measures=tuple(zeros for _ in curve_fns),
            n_curves=n_curves,
            n_lines=n_curves,
            lip_bound=float(lip_bound),
            seed=seed,
            sample_size=0,
        )

    cloud = sample.xy()
    px, py = cloud[:, 0], cloud[:, 1]
    pad = max(gammas)
    x_lo, x_hi = float(px.min()) - pad, float(px.max()) + pad
    y_lo, y_hi = float(py.min()) - pad, float(py.max()) + pad
    rng = np.random.default_rng(seed)
    xs = np.linspace(x_lo, x_hi, grid_points)
    dx = (x_hi - x_lo) / (grid_points - 1) if grid_points > 1 else 0.0

    def min_dist(gx, gy):
        d2 = (gx[:, None] - px[None, :]) ** 2 + (gy[:, None] - py[None, :]) ** 2
        return np.sqrt(np.min(d2, axis=1))

    # vertical lines: exact union of chord intervals per gamma
    line_rows = [[] for _ in gammas]
    for _ in range(n_curves):
        c = rng.uniform(x_lo, x_hi)
        for k, g in enumerate(gammas):
            near = np.abs(px - c) <= g
            half = np.sqrt(np.maximum(g * g - (px[near] - c) ** 2, 0.0))
            ivals = [
                (float(y - h), float(y + h)) for y, h in zip(py[near], half)
            ]
            line_rows[k].append(_union_length(ivals))

    # random Lipschitz graphs: fine-grid measure estimate per gamma
    curve_rows = [[] for _ in gammas]
    kx = np.linspace(x_lo, x_hi, knots)
    for _ in range(n_curves):
        start = rng.uniform(y_lo, y_hi)
        steps = rng.uniform(-lip_bound, lip_bound, size=knots - 1) * np.diff(kx)
        ky = start + np.concatenate([[0.0], np.cumsum(steps)])
        d = min_dist(xs, np.interp(xs, kx, ky))
        for k, g in enumerate(gammas):
            curve_rows[k].append(float(np.count_nonzero(d <= g)) * dx)

    given = []
    for fn in curve_fns:
        gy = np.array([float(fn(float(x))) for x in xs])
        d = min_dist(xs, gy)
        arc = np.sqrt(1.0 + (np.gradient(gy, xs)) ** 2)
        given.append(tuple(float(np.sum(arc[d <= g]) * dx) for g in gammas))

    def stats(rows):
        means = tuple(float(np.mean(r)) if r else 0.0 for r in rows)
        tops = tuple(float(np.max(r)) if r else 0.0 for r in rows)
        return means, tops

    line_mean, line_max = stats(line_rows)
    curve_mean, curve_max = stats(curve_rows)
    return IntersectionStats(
        gammas=gammas,
        line_mean=line_mean,
        line_max=line_max,
        curve_mean=curve_mean,
        curve_max=curve_max,
        given_measures=tuple(given),
        n_curves=n_curves,
        n_lines=n_curves,
        lip_bound=float(lip_bound),
        seed=seed,
        sample_size=int(cloud.shape[0]),
    )


# ---------------------------------------------------------------------------
# Excess slope probe
# ---------------------------------------------------------------------------


def cone_contains(cone, b: float, B: float, x: float, X: float) -> bool:
    """Strict membership of (x, X) in the endpoint cone anchored at (b, B).

    The cone with slope pair ``(upper, lower)`` contains the points strictly
    to the right of b whose chord slope from (b, B) lies strictly between
    the two; both boundary rays are excluded.
    """
    upper, lower = float(cone[0]), float(cone[1])
    if not lower < upper:
        raise ContractError(f"cone needs lower < upper slope, got {cone!r}")
    if not x > b:
        return False
    rise = X - B
    run = x - b
    return lower * run < rise < upper * run


@dataclass(frozen=True)
class SlopeTable:
    """Excess-slope ratios per radius, for endpoints sampled in a cone.

    ``ratios[i][j]`` is (ground(a, A; x, X) - witness energy) / radius for
    direction j at ``radii[i]``; steep witnesses should drive the means
    more negative as the radius shrinks.
    """

    radii: tuple
    directions: tuple
    ratios: tuple
    means: tuple
    applicable: bool
    terminal_slope: float
    threshold: float
    cone: tuple

    @property
    def decreasing(self) -> bool:
        if not self.applicable or len(self.means) < 2:
            return False
        return all(b < a for a, b in zip(self.means, self.means[1:]))

    def to_csv(self) -> str:
        lines = ["radius,mean_ratio," + ",".join(f"dir_{j}" for j in range(len(self.directions)))]
        for i, r in enumerate(self.radii):
            lines.append(
                f"{r!r},{self.means[i]!r}," + ",".join(repr(v) for v in self.ratios[i])
            )
        return "\n".join(lines) + "\n"


def excess_slope_probe(
    L: Lagrangian,
    witness: PiecewisePath,
    cone,
    radii,
    cfg: MinimizeConfig,
    *,
    threshold: float | None = None,
    directions: int = 5,
    levels: int = 2,
) -> SlopeTable:
    """Track (ground-to-moved-endpoint minus witness energy) / distance.

    The witness runs from (a, A) to (b, B); endpoints (x, X) are placed at
    each radius along ``directions`` interior rays of the cone (slope
    quantiles strictly between the cone bounds), and the ground energy for
    (a, A) -> (x, X) is estimated by refined minimization.  The probe is
    applicable only when the witness terminal slope reaches ``threshold``
    (default: the cone's upper slope); otherwise the table is empty and
    flagged, since without a steep arrival no decrease is claimed.  Radii
    must be strictly decreasing and positive.
    """
    upper, lower = float(cone[0]), float(cone[1])
    if not lower < upper:
        raise ContractError(f"cone needs lower < upper slope, got {cone!r}")
    radii = tuple(float(r) for r in radii)
    if not radii or any(r <= 0.0 for r in radii):
        raise ContractError("radii must be positive")
    if any(r1 >= r0 for r0, r1 in zip(radii, radii[1:])):
        raise ContractError("radii must be strictly decreasing")
    if directions < 1:
        raise ContractError("directions must be at least 1")

    threshold = upper if threshold is None else float(threshold)
    terminal = float(witness.slopes()[-1])
    slopes = tuple(
        lower + (upper - lower) * (j + 1.0) / (directions + 1.0) for j in range(directions)
    )
    if terminal < threshold:
        return SlopeTable(
            radii=radii,
            directions=slopes,
            ratios=(),
            means=(),
            applicable=False,
            terminal_slope=terminal,
            threshold=threshold,
            cone=(upper, lower),
        )

    a, A = witness.a, float(witness.values[0])
    b, B = witness.b, float(witness.values[-1])
    witness_energy = energy(L, witness).total
    ratios, means = [], []
    for r in radii:
        row = []
        for s in slopes:
            run = r / math.hypot(1.0, s)
            x, X = b + run, B + s * run
            if not cone_contains((upper, lower), b, B, x, X):
                raise ContractError("generated endpoint left the cone interior")
            est = estimate_ground_energy(
                L, BoundaryProblem(a, A, x, X), cfg, levels=levels
            )
            row.append((est.value - witness_energy) / r)
        ratios.append(tuple(row))
        means.append(float(np.mean(row)))
    return SlopeTable(
        radii=radii,
        directions=slopes,
        ratios=tuple(ratios),
        means=tuple(means),
        applicable=True,
        terminal_slope=terminal,
        threshold=threshold,
        cone=(upper, lower),
    )
