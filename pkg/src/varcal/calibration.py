"""Calibrated Lagrangian synthesis from a scalar potential.

A potential Phi(x, y) that decreases in x, increases in y, and has a steep
enough ratio -Phi_x / Phi_y can be turned into a smooth Lagrangian

    L(x, y, p) = omega(p) + gamma(p, xi(x, y), theta(x, y))

whose energy along every path dominates the increment of Phi between the
path's endpoints (the calibration inequality), with equality along the
field u' = psi(x, u).  The derived fields are

    psi = -2 Phi_x / Phi_y,
    theta = Phi_y - omega'(psi),
    xi = (-Phi_x + omega(psi) - omega'(psi) psi) / theta,

and gamma is a smoothed corner: zero for p <= xi - 1, affine with slope
theta for p >= xi + 1.  This module provides the potential type (closed
form or sampled grid), the corner profile, numerical verification of the
construction's hypotheses, the assembly step (which refuses when a
hypothesis fails), a seeded random-path test of the calibration
inequality, an adaptive integrator for the minimizer field, and the
single-bump residual potential primitive.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._sets import SingularSetSpec, empty_set
from ._smoothstep import BUMP_MASS, bump, smoothstep_primitive
from .core import ContractError, Lagrangian, PiecewisePath, SuperlinearBound, energy

__all__ = [
    "Potential",
    "closed_form_potential",
    "grid_potential",
    "potential_grid_dump",
    "potential_from_grid_text",
    "corner_gamma",
    "HypothesisResult",
    "OutHypothesisReport",
    "verify_out_hypotheses",
    "CalibratedLagrangian",
    "assemble_calibrated_lagrangian",
    "CalibrationReport",
    "calibration_inequality_test",
    "FieldSolution",
    "integrate_minimizer_field",
    "ResidBumpField",
    "resid_bump_potential",
]


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Scalar field Phi with gradient queries on an admissible window.

    ``kind`` is "closed-form" or "grid".  Queries outside the window raise
    :class:`ContractError` (never silently extrapolated).  Gradient queries
    closer than ``guard_radius`` to the declared singular set are refused;
    value queries are always allowed (Phi is continuous across the set).
    """

    kind: str
    window: tuple
    value_fn: Callable = field(repr=False)
    grad_fn: Callable = field(repr=False)
    singular_set: SingularSetSpec = field(default_factory=empty_set)
    guard_radius: float = 0.0
    lipschitz_bound: Optional[float] = None
    pitch: Optional[float] = None

    def _check_window(self, x, y):
        x0, x1, y0, y1 = self.window
        sx = 1e-12 * (1.0 + abs(x0) + abs(x1))
        sy = 1e-12 * (1.0 + abs(y0) + abs(y1))
        xa = np.asarray(x, dtype=float)
        ya = np.asarray(y, dtype=float)
        if (
            np.any(xa < x0 - sx)
            or np.any(xa > x1 + sx)
            or np.any(ya < y0 - sy)
            or np.any(ya > y1 + sy)
        ):
            raise ContractError(
                f"query outside admissible window {self.window}: "
                f"x in [{np.min(xa)}, {np.max(xa)}], y in [{np.min(ya)}, {np.max(ya)}]"
            )

    def value(self, x, y):
        """Phi(x, y); scalar in, scalar out (arrays map elementwise)."""
        self._check_window(x, y)
        v = self.value_fn(x, y)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(v)
        return np.asarray(v, dtype=float)

    def gradient(self, x, y):
        """(Phi_x, Phi_y) at (x, y); refused inside the singular-set guard."""
        self._check_window(x, y)
        if self.guard_radius > 0.0 and self.singular_set.kind != "empty":
            xa = np.atleast_1d(np.asarray(x, dtype=float))
            ya = np.atleast_1d(np.asarray(y, dtype=float))
            for xi_, yi_ in zip(xa.ravel(), ya.ravel()):
                if self.singular_set.dist(float(xi_), float(yi_)) < self.guard_radius:
                    raise ContractError(
                        f"gradient query at ({xi_}, {yi_}) inside the "
                        f"{self.guard_radius}-guard of the singular set"
                    )
        fx, fy = self.grad_fn(x, y)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(fx), float(fy)
        return np.asarray(fx, dtype=float), np.asarray(fy, dtype=float)


def closed_form_potential(
    value_fn,
    grad_fn,
    window,
    singular_set: Optional[SingularSetSpec] = None,
    guard_radius: float = 0.0,
    lipschitz_bound: Optional[float] = None,
) -> Potential:
    """Wrap analytic callables ``value_fn(x, y)`` and ``grad_fn(x, y)``."""
    x0, x1, y0, y1 = (float(v) for v in window)
    if not (x1 > x0 and y1 > y0):
        raise ContractError(f"degenerate window {window}")
    return Potential(
        kind="closed-form",
        window=(x0, x1, y0, y1),
        value_fn=value_fn,
        grad_fn=grad_fn,
        singular_set=singular_set if singular_set is not None else empty_set(),
        guard_radius=float(guard_radius),
        lipschitz_bound=lipschitz_bound,
    )


def grid_potential(
    x0: float,
    y0: float,
    pitch: float,
    values,
    singular_set: Optional[SingularSetSpec] = None,
    guard_radius: float = 0.0,
    lipschitz_bound: Optional[float] = None,
) -> Potential:
    """Uniform-pitch sampled potential: bilinear values, central-difference
    gradients (one-sided at the window edges)."""
    vals = np.array(values, dtype=float)
    if vals.ndim != 2 or vals.shape[0] < 2 or vals.shape[1] < 2:
        raise ContractError("grid potential needs a 2-D value array, at least 2x2")
    if not np.all(np.isfinite(vals)):
        raise ContractError("grid potential values must be finite")
    if not pitch > 0:
        raise ContractError("pitch must be positive")
    ny, nx = vals.shape
    x0, y0, pitch = float(x0), float(y0), float(pitch)
    window = (x0, x0 + (nx - 1) * pitch, y0, y0 + (ny - 1) * pitch)
    gy, gx = np.gradient(vals, pitch)

    def interp(arr, x, y):
        fx = (np.asarray(x, dtype=float) - x0) / pitch
        fy = (np.asarray(y, dtype=float) - y0) / pitch
        ix = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        iy = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = np.clip(fx - ix, 0.0, 1.0)
        ty = np.clip(fy - iy, 0.0, 1.0)
        v00 = arr[iy, ix]
        v01 = arr[iy, ix + 1]
        v10 = arr[iy + 1, ix]
        v11 = arr[iy + 1, ix + 1]
        return (
            v00 * (1 - tx) * (1 - ty)
            + v01 * tx * (1 - ty)
            + v10 * (1 - tx) * ty
            + v11 * tx * ty
        )

    if lipschitz_bound is None:
        lipschitz_bound = float(np.max(np.hypot(gx, gy)))

    return Potential(
        kind="grid",
        window=window,
        value_fn=lambda x, y: interp(vals, x, y),
        grad_fn=lambda x, y: (interp(gx, x, y), interp(gy, x, y)),
        singular_set=singular_set if singular_set is not None else empty_set(),
        guard_radius=float(guard_radius),
        lipschitz_bound=lipschitz_bound,
        pitch=pitch,
    )


def potential_grid_dump(phi: Potential, pitch: float) -> str:
    """Binary-free grid dump: header (window, pitch), then row-major values.

    Rows run over ascending y, columns over ascending x; the dumped window
    is the largest pitch-aligned rectangle inside the potential's window.
    """
    if not pitch > 0:
        raise ContractError("pitch must be positive")
    x0, x1, y0, y1 = phi.window
    nx = int(math.floor((x1 - x0) / pitch + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / pitch + 1e-9)) + 1
    if nx < 2 or ny < 2:
        raise ContractError("pitch too coarse for the window")
    lines = [
        "# potential-grid 1",
        f"# window,{x0!r},{x0 + (nx - 1) * pitch!r},{y0!r},{y0 + (ny - 1) * pitch!r}",
        f"# pitch,{float(pitch)!r}",
    ]
    for iy in range(ny):
        yv = y0 + iy * pitch
        row = [repr(float(phi.value(x0 + ix * pitch, yv))) for ix in range(nx)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def potential_from_grid_text(
    text: str,
    singular_set: Optional[SingularSetSpec] = None,
    guard_radius: float = 0.0,
) -> Potential:
    """Parse :func:`potential_grid_dump` output back into a grid potential."""
    header = {}
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("# ").split(",")
            if body[0] == "window":
                header["window"] = [float(v) for v in body[1:5]]
            elif body[0] == "pitch":
                header["pitch"] = float(body[1])
            continue
        rows.append([float(v) for v in line.split(",")])
    if "window" not in header or "pitch" not in header:
        raise ContractError("grid dump missing window/pitch header")
    x0, _, y0, _ = header["window"]
    return grid_potential(
        x0,
        y0,
        header["pitch"],
        np.array(rows, dtype=float),
        singular_set=singular_set,
        guard_radius=guard_radius,
    )


# ---------------------------------------------------------------------------
# Smoothed corner profile
# ---------------------------------------------------------------------------


def corner_gamma(p, a, b):
    """Smoothed corner with knee ``a`` and asymptotic slope ``b > 0``.

    gamma(p, a, b) = b * H(p - a) where H is the smoothstep primitive: zero
    for p <= a - 1, exactly b (p - a) for p >= a + 1, convex and C-infinity
    throughout, and gamma >= max(0, b (p - a)) everywhere.
    """
    if not b > 0:
        raise ContractError(f"corner slope must be positive, got b={b}")
    a = float(a)
    if not math.isfinite(a):
        raise ContractError("corner knee must be finite")
    if np.isscalar(p) or np.asarray(p).ndim == 0:
        return float(b * smoothstep_primitive(float(p) - a))
    return b * smoothstep_primitive(np.asarray(p, dtype=float) - a)


# ---------------------------------------------------------------------------
# Hypothesis verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisResult:
    name: str
    passed: bool
    worst_margin: float
    worst_location: Optional[tuple]
    samples: int


@dataclass(frozen=True)
class OutHypothesisReport:
    """Per-hypothesis margins for the calibration construction.

    alpha: Phi_x < 0 < Phi_y; beta: -Phi_x >= 4 Phi_y; gamma:
    Phi_y > 4 omega'(psi); delta: the ratio -Phi_x/Phi_y grows along shells
    approaching the singular set and clears a threshold on the finest shell.
    A hypothesis passes exactly when its worst margin is >= 0.
    """

    alpha: HypothesisResult
    beta: HypothesisResult
    gamma: HypothesisResult
    delta: HypothesisResult
    sample_count: int
    delta_shell_minima: tuple = ()
    delta_threshold: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(h.passed for h in (self.alpha, self.beta, self.gamma, self.delta))

    def to_json(self) -> str:
        def encode(obj):
            if isinstance(obj, HypothesisResult):
                d = dataclasses.asdict(obj)
                if d["worst_location"] is not None:
                    d["worst_location"] = list(d["worst_location"])
                return d
            return obj

        payload = {
            "passed": self.passed,
            "sample_count": self.sample_count,
            "delta_shell_minima": list(self.delta_shell_minima),
            "delta_threshold": self.delta_threshold,
        }
        for name in ("alpha", "beta", "gamma", "delta"):
            payload[name] = encode(getattr(self, name))
        return json.dumps(payload, indent=2, sort_keys=True)


def _grid_points(phi: Potential, grid):
    """Expand a sampling spec into an (N, 2) array of query points.

    Accepts an int (n x n product grid over the window), a pair of
    coordinate arrays (product grid), or an explicit (N, 2) point array.
    """
    x0, x1, y0, y1 = phi.window
    if isinstance(grid, int):
        if grid < 2:
            raise ContractError("grid must have at least 2 points per axis")
        xs = np.linspace(x0, x1, grid)
        ys = np.linspace(y0, y1, grid)
    elif isinstance(grid, tuple) and len(grid) == 2:
        xs = np.asarray(grid[0], dtype=float)
        ys = np.asarray(grid[1], dtype=float)
    else:
        pts = np.asarray(grid, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ContractError("explicit sample set must be an (N, 2) array")
        return pts
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _default_shell_points(S, window, k, count, rng):
    lo, hi = 2.0 ** (-(k + 1)), 2.0 ** (-k)
    x0, x1, y0, y1 = window
    pts = []
    for _ in range(400 * count):
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        if lo <= S.dist(x, y) <= hi:
            pts.append((x, y))
            if len(pts) == count:
                break
    return np.array(pts, dtype=float).reshape(-1, 2)


def verify_out_hypotheses(
    phi: Potential,
    omega: SuperlinearBound,
    S: Optional[SingularSetSpec] = None,
    grid=64,
    exclusion: Optional[float] = None,
    shells: Optional[Sequence[int]] = None,
    shell_points: Optional[Callable] = None,
    shell_samples: int = 200,
    delta_threshold: Optional[float] = None,
    seed: int = 0,
) -> OutHypothesisReport:
    """Check hypotheses alpha, beta, gamma pointwise and delta as a shell trend.

    Pointwise samples come from ``grid`` (see :func:`_grid_points`), excluding
    points within ``exclusion`` of the singular set (default: the potential's
    guard radius).  The delta trend evaluates min(-Phi_x/Phi_y) on dyadic
    distance shells dist in [2^-k-1, 2^-k]; it must be nondecreasing in k and
    clear ``delta_threshold`` (default 2^(depth+1)) on the finest shell.
    Shell points come from ``shell_points(k, count, rng)`` when provided,
    otherwise from seeded rejection sampling.  Failures are report entries,
    never exceptions.
    """
    S = S if S is not None else phi.singular_set
    pts = _grid_points(phi, grid)
    excl = phi.guard_radius if exclusion is None else float(exclusion)

    kept = []
    for x, y in pts:
        if S.kind != "empty" and S.dist(float(x), float(y)) <= excl:
            continue
        kept.append((float(x), float(y)))
    if not kept:
        raise ContractError("no admissible samples: the grid lies entirely in the exclusion zone")

    worst = {"alpha": (math.inf, None), "beta": (math.inf, None), "gamma": (math.inf, None)}
    for x, y in kept:
        fx, fy = phi.gradient(x, y)
        m_alpha = min(-fx, fy)
        if m_alpha < worst["alpha"][0]:
            worst["alpha"] = (m_alpha, (x, y))
        m_beta = -fx - 4.0 * fy
        if m_beta < worst["beta"][0]:
            worst["beta"] = (m_beta, (x, y))
        if fy > 0:
            m_gamma = fy - 4.0 * omega.deriv(-2.0 * fx / fy)
        else:
            m_gamma = -math.inf
        if m_gamma < worst["gamma"][0]:
            worst["gamma"] = (m_gamma, (x, y))

    def result(name):
        margin, loc = worst[name]
        return HypothesisResult(
            name=name,
            passed=bool(margin >= 0.0),
            worst_margin=float(margin),
            worst_location=loc,
            samples=len(kept),
        )

    # Hypothesis delta: shell trend of -Phi_x / Phi_y toward the set.
    if shells is None:
        shells = [] if S.kind == "empty" else list(range(1, S.depth + 2))
    shells = list(shells)
    if delta_threshold is None:
        delta_threshold = 2.0 ** (S.depth + 1) if shells else None

    shell_minima = []
    shell_count = 0
    for k in shells:
        rng = np.random.default_rng([seed, k])
        if shell_points is not None:
            spts = np.asarray(shell_points(k, shell_samples, rng), dtype=float).reshape(-1, 2)
        else:
            spts = _default_shell_points(S, phi.window, k, shell_samples, rng)
        if spts.shape[0] == 0:
            continue
        ratios = []
        for x, y in spts:
            fx, fy = phi.gradient(float(x), float(y))
            ratios.append(-fx / fy if fy > 0 else -math.inf)
        shell_count += len(ratios)
        m = min(ratios)
        shell_minima.append((k, m, tuple(spts[int(np.argmin(ratios))])))

    if not shell_minima:
        delta = HypothesisResult("delta", True, math.inf, None, 0)
    else:
        margins = []
        for (k0, m0, l0), (k1, m1, l1) in zip(shell_minima[:-1], shell_minima[1:]):
            margins.append((m1 - m0, l1))
        margins.append((shell_minima[-1][1] - delta_threshold, shell_minima[-1][2]))
        worst_margin, delta_loc = min(margins, key=lambda t: t[0])
        delta = HypothesisResult(
            "delta", bool(worst_margin >= 0.0), float(worst_margin), delta_loc, shell_count
        )

    return OutHypothesisReport(
        alpha=result("alpha"),
        beta=result("beta"),
        gamma=result("gamma"),
        delta=delta,
        sample_count=len(kept),
        delta_shell_minima=tuple(m for _, m, _ in shell_minima),
        delta_threshold=delta_threshold,
    )


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibratedLagrangian:
    """omega(p) + corner term, calibrated by ``phi``.

    ``psi``, ``theta``, ``xi`` are the derived fields; ``L`` is the
    assembled Lagrangian (L = omega(p) within the singular set's guard
    region, where the corner term is dropped).
    """

    omega: SuperlinearBound
    phi: Potential
    singular_set: SingularSetSpec
    L: Lagrangian
    report: OutHypothesisReport

    def fields(self, x: float, y: float):
        """(psi, theta, xi) at an admissible point off the singular set."""
        fx, fy = self.phi.gradient(x, y)
        psi = -2.0 * fx / fy
        dpsi = self.omega.deriv(psi)
        theta = fy - dpsi
        xi = (-fx + self.omega(psi) - dpsi * psi) / theta
        return psi, theta, xi

    def psi(self, x: float, y: float) -> float:
        return self.fields(x, y)[0]

    def theta(self, x: float, y: float) -> float:
        return self.fields(x, y)[1]

    def xi(self, x: float, y: float) -> float:
        return self.fields(x, y)[2]


def assemble_calibrated_lagrangian(
    phi: Potential,
    omega: SuperlinearBound,
    S: Optional[SingularSetSpec] = None,
    name: Optional[str] = None,
    grid=64,
    **verify_kwargs,
) -> CalibratedLagrangian:
    """Build L = omega + gamma(p, xi, theta) after verifying the hypotheses.

    Refuses (ContractError carrying the failing report as ``.report``) when
    any hypothesis fails on the verification grid, or when the derived
    fields violate xi >= 1 or psi >= xi + 1 at an admissible sample.
    """
    S = S if S is not None else phi.singular_set
    report = verify_out_hypotheses(phi, omega, S=S, grid=grid, **verify_kwargs)
    if not report.passed:
        failing = [
            h.name
            for h in (report.alpha, report.beta, report.gamma, report.delta)
            if not h.passed
        ]
        err = ContractError(
            f"calibration hypotheses failed: {', '.join(failing)} "
            f"(worst margins: "
            + ", ".join(
                f"{h.name}={h.worst_margin:.6g}"
                for h in (report.alpha, report.beta, report.gamma, report.delta)
            )
            + ")"
        )
        err.report = report
        raise err

    guard = phi.guard_radius
    excl = verify_kwargs.get("exclusion", None)
    excl = guard if excl is None else float(excl)
    pts = _grid_points(phi, grid)
    omega_deriv = omega.deriv
    for x, y in pts:
        x, y = float(x), float(y)
        if S.kind != "empty" and S.dist(x, y) <= excl:
            continue
        fx, fy = phi.gradient(x, y)
        psi = -2.0 * fx / fy
        dpsi = omega_deriv(psi)
        theta = fy - dpsi
        xi = (-fx + omega(psi) - dpsi * psi) / theta
        if not (xi >= 1.0 and psi >= xi + 1.0):
            err = ContractError(
                f"derived fields out of range at ({x}, {y}): xi={xi}, psi={psi} "
                "(need xi >= 1 and psi >= xi + 1)"
            )
            err.report = report
            raise err

    def L_eval(x, y, p):
        if S.kind != "empty" and S.dist(x, y) <= guard:
            return omega(p)
        fx, fy = phi.gradient(x, y)
        psi = -2.0 * fx / fy
        dpsi = omega_deriv(psi)
        theta = fy - dpsi
        xi = (-fx + omega(psi) - dpsi * psi) / theta
        return omega(p) + theta * smoothstep_primitive(p - xi)

    L = Lagrangian(
        name=name or f"calibrated_{phi.kind}",
        eval_fn=L_eval,
        bound=omega,
        convex_in_p=True,
        lipschitz_y=None,
        lower_bound=0.0,
        params={},
        vectorized=False,
    )
    return CalibratedLagrangian(
        omega=omega, phi=phi, singular_set=S, L=L, report=report
    )


# ---------------------------------------------------------------------------
# Calibration inequality test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationReport:
    """Worst margin of energy(L, u) - (Phi(end) - Phi(start)) over a path suite."""

    n_paths: int
    violations: int
    worst_margin: float
    worst_index: int
    tol_max: float
    worst_path: Optional[PiecewisePath] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _estimate_lipschitz(phi: Potential, S: SingularSetSpec, n: int = 33) -> float:
    x0, x1, y0, y1 = phi.window
    best = 0.0
    excl = phi.guard_radius
    for x in np.linspace(x0, x1, n):
        for y in np.linspace(y0, y1, n):
            if S.kind != "empty" and S.dist(float(x), float(y)) <= excl:
                continue
            fx, fy = phi.gradient(float(x), float(y))
            best = max(best, math.hypot(fx, fy))
    return best


def calibration_inequality_test(
    cal: CalibratedLagrangian,
    paths: Optional[Callable] = None,
    n: int = 1000,
    seed: int = 0,
    n_cells=(4, 24),
    tol_factor: float = 10.0,
) -> CalibrationReport:
    """Assert energy(L, u) >= Phi(U(b)) - Phi(U(a)) - tol on sampled paths.

    Paths come from ``paths(rng) -> PiecewisePath`` when given, otherwise
    from the default sampler (random sub-interval of the window's x-range,
    random mesh with ``n_cells`` cells, nodal values uniform in the window's
    y-range; one child RNG per path index, so the suite is deterministic and
    embarrassingly parallel).  The per-path tolerance is
    tol_factor * (max cell width) * Lip(Phi).  Violations are findings
    recorded in the report, never exceptions.
    """
    phi = cal.phi
    x0, x1, y0, y1 = phi.window
    lip = phi.lipschitz_bound
    if lip is None:
        lip = _estimate_lipschitz(phi, cal.singular_set)

    def default_paths(rng):
        width = x1 - x0
        for _ in range(64):
            a, b = np.sort(rng.uniform(x0, x1, size=2))
            if b - a >= 0.05 * width:
                break
        m = int(rng.integers(n_cells[0], n_cells[1] + 1))
        interior = np.sort(rng.uniform(a, b, size=m - 1))
        nodes = np.concatenate([[a], interior, [b]])
        if np.any(np.diff(nodes) <= 0):
            nodes = np.linspace(a, b, m + 1)
        values = rng.uniform(y0, y1, size=m + 1)
        return PiecewisePath(nodes, values)

    sampler = paths if paths is not None else default_paths
    worst_margin = math.inf
    worst_index = -1
    worst_path = None
    violations = 0
    tol_max = 0.0
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        u = sampler(rng)
        total = energy(cal.L, u).total
        drop = phi.value(u.b, float(u.values[-1])) - phi.value(u.a, float(u.values[0]))
        h = float(np.max(np.diff(u.nodes)))
        tol = tol_factor * h * lip
        tol_max = max(tol_max, tol)
        margin = total - drop
        if margin < worst_margin:
            worst_margin = margin
            worst_index = i
            worst_path = u
        if margin < -tol:
            violations += 1
    return CalibrationReport(
        n_paths=n,
        violations=violations,
        worst_margin=float(worst_margin),
        worst_index=worst_index,
        tol_max=float(tol_max),
        worst_path=worst_path,
    )


# ---------------------------------------------------------------------------
# Minimizer field integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldSolution:
    """Integrated field line u' = psi(x, u), resampled as a path.

    ``truncated`` is set when the trajectory leaves the admissible window
    or exhausts the node budget before covering the requested span.
    """

    path: PiecewisePath
    truncated: bool
    reason: Optional[str] = None


def _rk4(f, x, y, h):
    k1 = f(x, y)
    k2 = f(x + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(x + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(x + h, y + h * k3)
    return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def _double_step(f, x, y, h):
    full = _rk4(f, x, y, h)
    half = _rk4(f, x + 0.5 * h, _rk4(f, x, y, 0.5 * h), 0.5 * h)
    err = abs(half - full)
    return half + (half - full) / 15.0, err


def integrate_minimizer_field(
    cal: CalibratedLagrangian,
    x0: float,
    y0: float,
    span,
    rtol: float = 1e-8,
    psi_switch: float = 1e3,
    max_nodes: int = 20000,
) -> FieldSolution:
    """Integrate u' = psi(x, u) through (x0, y0) across ``span`` = (xa, xb).

    Explicit RK4 with step doubling; where psi exceeds ``psi_switch`` the
    march flips to y as the independent variable (dx/dy = 1/psi) so that
    near-vertical climbs are traversed accurately.  Leaving the admissible
    window (or exhausting ``max_nodes``) truncates the path and sets the
    flag; the output nodes are strictly increasing in x.
    """
    xa, xb = (float(v) for v in span)
    x0, y0 = float(x0), float(y0)
    if not xa <= x0 <= xb or xa == xb:
        raise ContractError(f"seed x0={x0} must lie inside the span [{xa}, {xb}]")
    cal.phi._check_window(x0, y0)

    def psi_at(x, y):
        return cal.psi(x, y)

    def march(x_to):
        """March from the seed toward x_to; returns (nodes, truncated, reason)."""
        d = 1.0 if x_to > x0 else -1.0
        x, y = x0, y0
        out = []
        span_len = abs(x_to - x0)
        if span_len == 0.0:
            return out, False, None
        h_abs = span_len / 256.0
        h_min = span_len * 1e-12
        _, _, wy0, wy1 = cal.phi.window
        hy_floor = (wy1 - wy0) * 1e-13
        while d * (x_to - x) > span_len * 1e-12:
            if len(out) >= max_nodes:
                return out, True, "node budget exhausted"
            try:
                p_here = psi_at(x, y)
            except ContractError:
                return out, True, "left admissible window"
            if not math.isfinite(p_here):
                return out, True, "field value not finite"
            if p_here > psi_switch:
                # Near-vertical: step in y, integrating dx/dy = 1/psi.
                hy_abs = (wy1 - wy0) / 4096.0
                while True:
                    if len(out) >= max_nodes:
                        return out, True, "node budget exhausted"
                    try:
                        p_here = psi_at(x, y)
                    except ContractError:
                        return out, True, "left admissible window"
                    if p_here <= 0.5 * psi_switch:
                        break
                    hy = d * hy_abs
                    try:
                        x_new, err = _double_step(lambda yy, xx: 1.0 / psi_at(xx, yy), y, x, hy)
                    except (ContractError, ZeroDivisionError):
                        hy_abs *= 0.5
                        if hy_abs < hy_floor:
                            return out, True, "left admissible window"
                        continue
                    tol = rtol * (1.0 + abs(x_new))
                    if err <= tol:
                        y += hy
                        x = x_new
                        out.append((x, y))
                        if err < 0.1 * tol:
                            hy_abs = min(hy_abs * 1.5, (wy1 - wy0) / 64.0)
                        if d * (x_to - x) <= 0:
                            return out, False, None
                    else:
                        hy_abs *= 0.5
                        if hy_abs < hy_floor:
                            return out, True, "step underflow in steep region"
                continue
            h = d * min(h_abs, abs(x_to - x))
            try:
                y_new, err = _double_step(psi_at, x, y, h)
            except ContractError:
                h_abs *= 0.5
                if h_abs < h_min:
                    return out, True, "left admissible window"
                continue
            if not math.isfinite(y_new):
                return out, True, "field value not finite"
            tol = rtol * (1.0 + abs(y_new))
            if err <= tol:
                x += h
                y = y_new
                out.append((x, y))
                if err < 0.1 * tol:
                    h_abs = min(h_abs * 1.5, span_len / 16.0)
            else:
                h_abs *= 0.5
                if h_abs < h_min:
                    return out, True, "step underflow"
        return out, False, None

    fwd, fwd_trunc, fwd_reason = march(xb)
    bwd, bwd_trunc, bwd_reason = march(xa)
    nodes = [(x, y) for x, y in reversed(bwd)] + [(x0, y0)] + fwd

    xs, ys = [], []
    for x, y in nodes:
        if xs and x <= xs[-1]:
            continue
        xs.append(x)
        ys.append(y)
    if len(xs) < 2:
        xs = [x0, x0 + (xb - x0) * 1e-9 if xb > x0 else x0 + (xa - x0) * 1e-9]
        xs = sorted(xs)
        ys = [y0, y0]
    path = PiecewisePath(np.array(xs), np.array(ys))
    truncated = fwd_trunc or bwd_trunc
    reason = fwd_reason or bwd_reason
    return FieldSolution(path=path, truncated=truncated, reason=reason)


# ---------------------------------------------------------------------------
# Residual bump potential (single-bump primitive)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidBumpField:
    """Lipschitz potential whose gradient equals P on an open bump region G.

    In coordinates aligned with P (unit vectors ``e_perp``, ``e_par``), with
    f a C-infinity bump of width delta and height ``height``:

        Phi = 0            where y_par <= 0,
        Phi = c * y_par    where 0 < y_par <= f(x_perp)   (the region G),
        Phi = c * f(x_perp) above the bump graph,

    c = |P|.  ``grad_field`` is the globally continuous field that agrees
    with the gradient of Phi outside the closure of G.
    """

    z0: tuple
    P: tuple
    eps: float
    delta: float
    height: float

    @property
    def c(self) -> float:
        return math.hypot(*self.P)

    def _local(self, x, y):
        dx, dy = x - self.z0[0], y - self.z0[1]
        c = self.c
        ey = (self.P[0] / c, self.P[1] / c)
        ex = (ey[1], -ey[0])
        return dx * ex[0] + dy * ex[1], dx * ey[0] + dy * ey[1]

    def _profile(self, t):
        # Bump of height ``height`` supported on |t| < delta.
        return self.height * bump(t / self.delta) * math.e

    def _profile_deriv(self, t):
        s = t / self.delta
        if abs(s) >= 1.0:
            return 0.0
        g = 1.0 - s * s
        return self.height * math.e * math.exp(-1.0 / g) * (-2.0 * s / (g * g)) / self.delta

    def value(self, x, y) -> float:
        u, v = self._local(float(x), float(y))
        if v <= 0.0:
            return 0.0
        f = self._profile(u)
        return self.c * min(v, f)

    def in_G(self, x, y) -> bool:
        u, v = self._local(float(x), float(y))
        return 0.0 < v < self._profile(u)

    def grad_field(self, x, y):
        """The continuous field equal to grad Phi off the closure of G."""
        u, v = self._local(float(x), float(y))
        f = self._profile(u)
        if v <= 0.0 or f <= 0.0:
            return (0.0, 0.0)
        scale = self.c * self._profile_deriv(u) * min(1.0, v / f)
        c = self.c
        ex = (self.P[1] / c, -self.P[0] / c)
        return (scale * ex[0], scale * ex[1])


def resid_bump_potential(z0, eps: float, P) -> ResidBumpField:
    """Single-bump residual primitive near ``z0`` at scale ``eps``.

    Returns the explicit piecewise potential whose gradient is exactly ``P``
    on an open bump region G near z0, together with the continuous gradient
    field valid off the closure of G.  |Phi| <= eps everywhere, and the bump
    width delta satisfies the stated smallness constraints
    3 delta < eps, delta |P| <= eps, 3 delta |P| <= eps (eps - 2 delta) / 2.
    """
    eps = float(eps)
    if not eps > 0:
        raise ContractError("eps must be positive")
    px, py = (float(v) for v in P)
    c = math.hypot(px, py)
    if c == 0.0:
        raise ContractError("gradient target P must be nonzero")
    delta = min(eps / 4.0, eps / (2.0 * c), eps * eps / (12.0 * c + 3.0 * eps))
    height = min(delta / 2.0, eps / (2.0 * c))
    return ResidBumpField(
        z0=(float(z0[0]), float(z0[1])),
        P=(px, py),
        eps=eps,
        delta=delta,
        height=height,
    )
