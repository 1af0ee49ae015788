"""Lagrangians, piecewise-linear paths, energies, and excess.

This module holds the vocabulary shared by the whole package: a
:class:`Lagrangian` is an energy density ``L(x, y, p)`` with a certified
superlinear lower bound in the slope variable; a :class:`PiecewisePath` is a
continuous piecewise-linear function given by mesh nodes and nodal values.
The energy of a path is the integral of ``L`` along its graph, computed by a
fixed three-point Gauss-Legendre rule per mesh cell (the slope is piecewise
constant, hence exact; only smooth dependence on (x, y) is quadrature
approximated).  The excess of a path measures how far its energy sits above
the best achievable with the same boundary data.

All types are immutable values; every operation is pure and returns fresh
report objects, so concurrent read access needs no coordination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "ContractError",
    "EvaluationError",
    "SuperlinearBound",
    "superlinear_bound",
    "Lagrangian",
    "make_lagrangian",
    "register_lagrangian",
    "registered_lagrangians",
    "lagrangian_spec",
    "lagrangian_from_spec",
    "PiecewisePath",
    "BoundaryProblem",
    "EnergyReport",
    "ExcessReport",
    "energy",
    "excess",
    "jensen_bound",
]


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class EvaluationError(ArithmeticError):
    """A Lagrangian produced a non-finite value; never silently clamped."""

    def __init__(self, message: str, x: float, y: float, p: float):
        super().__init__(message)
        self.x = x
        self.y = y
        self.p = p


# ---------------------------------------------------------------------------
# Superlinear bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperlinearBound:
    """A convex even function ω with ω(0)=0 certifying slope coercivity.

    ``tag`` names the family in the registry, ``params`` its parameters;
    ``eval_fn`` and ``deriv_fn`` must accept floats or numpy arrays.
    """

    tag: str
    eval_fn: Callable = field(repr=False)
    deriv_fn: Callable = field(repr=False)
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, p):
        return self.eval_fn(p)

    def deriv(self, p):
        return self.deriv_fn(p)

    def slope_threshold(self, slope: float) -> float:
        """Smallest q ≥ 0 with ω(p) ≥ slope·|p| whenever |p| ≥ q.

        Found by doubling-plus-bisection on the even, convex profile; this is
        the computable superlinearity witness used by property tests.
        """
        slope = float(slope)
        if slope <= 0.0:
            return 0.0
        hi = 1.0
        while self.eval_fn(hi) < slope * hi:
            hi *= 2.0
            if hi > 1e300:
                raise ContractError(f"bound '{self.tag}' never reaches slope {slope}")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.eval_fn(mid) >= slope * mid:
                hi = mid
            else:
                lo = mid
        return hi


def _power_bound(tag: str, exponent: int, coeff: float = 1.0) -> SuperlinearBound:
    def ev(p, c=coeff, k=exponent):
        return c * np.asarray(p, dtype=float) ** k

    def dv(p, c=coeff, k=exponent):
        p = np.asarray(p, dtype=float)
        return c * k * np.sign(p) * np.abs(p) ** (k - 1) if k % 2 == 0 else c * k * p ** (k - 1)

    return SuperlinearBound(tag, ev, dv, params={"coeff": coeff, "exponent": exponent})


def _double_well_envelope_bound() -> SuperlinearBound:
    # Convex envelope of (p²−1)²: zero on [−1,1], the well itself outside.
    def ev(p):
        p = np.asarray(p, dtype=float)
        core = np.maximum(p * p - 1.0, 0.0)
        return core * core

    def dv(p):
        p = np.asarray(p, dtype=float)
        return 4.0 * p * np.maximum(p * p - 1.0, 0.0)

    return SuperlinearBound("dw_envelope", ev, dv)


def superlinear_bound(tag: str, **params) -> SuperlinearBound:
    """Build a registry bound: ``p2``, ``p4``, ``scaled_p2`` (coeff), ``dw_envelope``."""
    if tag == "p2":
        return _power_bound("p2", 2)
    if tag == "p4":
        return _power_bound("p4", 4)
    if tag == "scaled_p2":
        coeff = float(params.get("coeff", 1.0))
        if coeff <= 0:
            raise ContractError("scaled_p2 needs coeff > 0")
        b = _power_bound("scaled_p2", 2, coeff)
        return b
    if tag == "dw_envelope":
        return _double_well_envelope_bound()
    raise ContractError(f"unknown superlinear bound tag {tag!r}")


# ---------------------------------------------------------------------------
# Lagrangians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lagrangian:
    """Energy density L(x, y, p) with certified metadata.

    ``bound`` promises ``L(x, y, p) >= bound(p)`` for every admissible triple,
    ``lipschitz_y`` maps a box radius R to a constant C with
    ``|L(x,y1,p)-L(x,y2,p)| <= C|y1-y2|`` for |y|,|p| within the stated boxes
    (None means unknown), and ``lower_bound`` is a global floor.  Set
    ``vectorized=False`` for densities that only accept scalar arguments; the
    quadrature loop then evaluates pointwise.
    """

    name: str
    eval_fn: Callable = field(repr=False)
    bound: SuperlinearBound = field(repr=False)
    convex_in_p: bool = False
    lipschitz_y: Callable | None = field(default=None, repr=False)
    lower_bound: float = 0.0
    params: Mapping[str, float] = field(default_factory=dict)
    vectorized: bool = True

    def __call__(self, x, y, p):
        return self.eval_fn(x, y, p)


_LAGRANGIAN_FACTORIES: dict[str, Callable] = {}


def register_lagrangian(key: str, factory: Callable) -> None:
    """Register a named Lagrangian factory (key + parameter map interface)."""
    _LAGRANGIAN_FACTORIES[key] = factory


def registered_lagrangians() -> tuple[str, ...]:
    return tuple(sorted(_LAGRANGIAN_FACTORIES))


def make_lagrangian(key: str, **params) -> Lagrangian:
    """Instantiate a registry Lagrangian by string key plus parameter map."""
    try:
        factory = _LAGRANGIAN_FACTORIES[key]
    except KeyError:
        raise ContractError(
            f"unknown Lagrangian {key!r}; registered: {', '.join(registered_lagrangians())}"
        ) from None
    return factory(**params)


def lagrangian_spec(L: Lagrangian) -> dict:
    """Serializable description (registry key + parameters, no closures)."""
    return {"key": L.name, "params": dict(L.params)}


def lagrangian_from_spec(spec: Mapping) -> Lagrangian:
    return make_lagrangian(spec["key"], **spec.get("params", {}))


def _make_quadratic() -> Lagrangian:
    return Lagrangian(
        name="quadratic",
        eval_fn=lambda x, y, p: np.asarray(p, dtype=float) ** 2,
        bound=superlinear_bound("p2"),
        convex_in_p=True,
        lipschitz_y=lambda R: 0.0,
    )


def _make_quartic() -> Lagrangian:
    return Lagrangian(
        name="quartic",
        eval_fn=lambda x, y, p: np.asarray(p, dtype=float) ** 4,
        bound=superlinear_bound("p4"),
        convex_in_p=True,
        lipschitz_y=lambda R: 0.0,
    )


def _make_p2y2() -> Lagrangian:
    return Lagrangian(
        name="p2y2",
        eval_fn=lambda x, y, p: np.asarray(p, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2,
        bound=superlinear_bound("p2"),
        convex_in_p=True,
        lipschitz_y=lambda R: 2.0 * R,
    )


def _make_double_well() -> Lagrangian:
    return Lagrangian(
        name="double_well",
        eval_fn=lambda x, y, p: (np.asarray(p, dtype=float) ** 2 - 1.0) ** 2,
        bound=superlinear_bound("dw_envelope"),
        convex_in_p=False,
        lipschitz_y=lambda R: 0.0,
    )


def _make_double_well_y() -> Lagrangian:
    def ev(x, y, p):
        p = np.asarray(p, dtype=float)
        y = np.asarray(y, dtype=float)
        return (p * p - 1.0) ** 2 + y * y

    return Lagrangian(
        name="double_well_y",
        eval_fn=ev,
        bound=superlinear_bound("dw_envelope"),
        convex_in_p=False,
        lipschitz_y=lambda R: 2.0 * R,
    )


register_lagrangian("quadratic", _make_quadratic)
register_lagrangian("quartic", _make_quartic)
register_lagrangian("p2y2", _make_p2y2)
register_lagrangian("double_well", _make_double_well)
register_lagrangian("double_well_y", _make_double_well_y)


# ---------------------------------------------------------------------------
# Paths and boundary data
# ---------------------------------------------------------------------------


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PiecewisePath:
    """A continuous piecewise-linear function: strictly increasing nodes with values."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen_array(self.nodes))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.nodes.ndim != 1 or self.nodes.shape != self.values.shape:
            raise ContractError("nodes and values must be matching 1-d sequences")
        if self.nodes.size < 2:
            raise ContractError("a path needs at least one cell (two nodes)")
        if not np.all(np.diff(self.nodes) > 0):
            raise ContractError("path nodes must be strictly increasing")
        if not (np.all(np.isfinite(self.nodes)) and np.all(np.isfinite(self.values))):
            raise ContractError("path nodes and values must be finite")

    # -- geometry ----------------------------------------------------------

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    def boundary(self) -> "BoundaryProblem":
        return BoundaryProblem(self.a, float(self.values[0]), self.b, float(self.values[-1]))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    # -- derived paths -----------------------------------------------------

    def with_value(self, index: int, y: float) -> "PiecewisePath":
        vals = np.array(self.values)
        vals[index] = y
        return PiecewisePath(self.nodes, vals)

    def refine(self) -> "PiecewisePath":
        """Insert every cell midpoint (linear interpolation: same function)."""
        mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        new_nodes = np.sort(np.concatenate([self.nodes, mids]))
        return PiecewisePath(new_nodes, self(new_nodes))

    def restrict(self, i0: int, i1: int) -> "PiecewisePath":
        """Node-aligned subpath over nodes[i0..i1] inclusive."""
        if not (0 <= i0 < i1 <= self.n_cells):
            raise ContractError(f"restrict indices out of range: ({i0}, {i1})")
        return PiecewisePath(self.nodes[i0 : i1 + 1], self.values[i0 : i1 + 1])

    # -- serialization -----------------------------------------------------

    def to_table_text(self) -> str:
        lines = ["# x y"]
        lines += [f"{float(x)!r} {float(y)!r}" for x, y in zip(self.nodes, self.values)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_table_text(text: str) -> "PiecewisePath":
        xs, ys = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sx, sy = line.split()
            xs.append(float(sx))
            ys.append(float(sy))
        return PiecewisePath(xs, ys)

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes.tolist(), "values": self.values.tolist()})

    @staticmethod
    def from_json(text: str) -> "PiecewisePath":
        doc = json.loads(text)
        return PiecewisePath(doc["nodes"], doc["values"])


@dataclass(frozen=True)
class BoundaryProblem:
    """Fixed-endpoint data: find paths from (a, A) to (b, B)."""

    a: float
    A: float
    b: float
    B: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ContractError(f"boundary problem needs a < b, got a={self.a}, b={self.b}")

    @property
    def mean_slope(self) -> float:
        return (self.B - self.A) / (self.b - self.a)

    def affine_path(self, n_cells: int = 1) -> PiecewisePath:
        nodes = np.linspace(self.a, self.b, n_cells + 1)
        return PiecewisePath(nodes, self.A + self.mean_slope * (nodes - self.a))

    def matches(self, path: PiecewisePath, tol: float = 0.0) -> bool:
        return (
            abs(path.a - self.a) <= tol
            and abs(path.b - self.b) <= tol
            and abs(float(path.values[0]) - self.A) <= tol
            and abs(float(path.values[-1]) - self.B) <= tol
        )


# ---------------------------------------------------------------------------
# Energy, excess, Jensen
# ---------------------------------------------------------------------------

# Fixed 3-point Gauss-Legendre rule on [-1, 1].
_GAUSS_NODES = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
QUADRATURE_ORDER = 3


@dataclass(frozen=True)
class EnergyReport:
    """Quadrature value of the energy integral with its per-cell breakdown."""

    total: float
    per_cell: tuple
    quadrature_order: int = QUADRATURE_ORDER


@dataclass(frozen=True)
class ExcessReport:
    """Energy above the ground estimate for the same boundary data."""

    excess: float
    energy: float
    ground_value: float
    ground_trend: float


def energy(L: Lagrangian, u: PiecewisePath) -> EnergyReport:
    """Integrate L(x, u(x), u'(x)) over the path's span.

    Three-point Gauss-Legendre per cell on the exact cell slope.  Non-finite
    values of L are hard errors carrying the offending (x, y, p) triple.
    """
    x0 = u.nodes[:-1]
    h = np.diff(u.nodes)
    slope = u.slopes()
    # Quadrature abscissae per cell, shape (n_cells, 3).
    xq = x0[:, None] + (h[:, None] / 2.0) * (1.0 + _GAUSS_NODES[None, :])
    yq = u.values[:-1, None] + slope[:, None] * (xq - x0[:, None])
    pq = np.broadcast_to(slope[:, None], xq.shape)
    if L.vectorized:
        vals = np.asarray(L.eval_fn(xq, yq, pq), dtype=float)
        vals = np.broadcast_to(vals, xq.shape)
    else:
        vals = np.empty_like(xq)
        for i in range(xq.shape[0]):
            for j in range(xq.shape[1]):
                vals[i, j] = L.eval_fn(float(xq[i, j]), float(yq[i, j]), float(pq[i, j]))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise EvaluationError(
            f"Lagrangian {L.name!r} returned a non-finite value at "
            f"(x={xq[i, j]!r}, y={yq[i, j]!r}, p={pq[i, j]!r})",
            float(xq[i, j]),
            float(yq[i, j]),
            float(pq[i, j]),
        )
    per_cell = (h / 2.0) * (vals @ _GAUSS_WEIGHTS)
    return EnergyReport(total=float(np.sum(per_cell)), per_cell=tuple(float(c) for c in per_cell))


def excess(L: Lagrangian, u: PiecewisePath, ground) -> ExcessReport:
    """Energy of u minus the ground estimate for its boundary data.

    ``ground`` is any object with ``value``, ``trend`` and ``problem``
    attributes (see direct_method.GroundEnergyEstimate); its boundary data
    must match the path's.
    """
    if not ground.problem.matches(u, tol=1e-12):
        raise ContractError(
            "ground estimate boundary data "
            f"({ground.problem}) does not match the path's ({u.boundary()})"
        )
    total = energy(L, u).total
    return ExcessReport(
        excess=total - ground.value,
        energy=total,
        ground_value=ground.value,
        ground_trend=ground.trend,
    )


def jensen_bound(omega: SuperlinearBound, problem: BoundaryProblem) -> float:
    """Lower bound (b−a)·ω((B−A)/(b−a)) valid for every L ≥ ω and every path."""
    return (problem.b - problem.a) * float(omega(problem.mean_slope))
