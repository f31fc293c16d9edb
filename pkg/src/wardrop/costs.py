"""Road cost functions over per-population flows, valued in [0, +inf].

A cost function maps the flows of each traveler population on one road to a
nonnegative travel cost that may be +infinity (fully congested road).  Costs
are built from a small closed set of expression forms; every form with
nonnegative coefficients is continuous and weakly increasing in each flow
argument, which is what the equilibrium theory requires.

The +infinity value is a dedicated tagged object (`ExtReal`), not an IEEE
float, so that an accidental 0*inf is a loud programming error instead of a
silent NaN.  The "a route with zero share contributes nothing to the mean
time" convention lives in the equilibrium layer, never in the arithmetic
here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

FLOW_TOLERANCE = 1e-12


class CostDomainError(ValueError):
    """A flow argument is outside [0, 1] or an evaluation left the domain."""


class ExtRealGuardError(ArithmeticError):
    """A guarded extended-real operation was attempted (e.g. 0 * inf)."""


class InfiniteCostError(ValueError):
    """A derivative was requested at a point where the cost is +infinity."""


@dataclass(frozen=True, slots=True)
class ExtReal:
    """A nonnegative real number extended with +infinity.

    `finite` is None exactly when the value is +infinity.  Addition and
    positive scaling propagate infinity; scaling infinity by zero raises
    `ExtRealGuardError` because no reachable computation should do it.
    Comparisons are total with infinity maximal.
    """

    finite: float | None

    @staticmethod
    def of(value: float) -> "ExtReal":
        if not math.isfinite(value):
            raise ValueError("use ExtReal.infinity() for non-finite values")
        if value < 0:
            raise ValueError(f"extended reals are nonnegative, got {value}")
        return ExtReal(float(value))

    @staticmethod
    def infinity() -> "ExtReal":
        return _INFINITY

    @property
    def is_infinite(self) -> bool:
        return self.finite is None

    def as_float(self) -> float:
        """IEEE view of the value (math.inf for +infinity); display only."""
        return math.inf if self.finite is None else self.finite

    def __add__(self, other: "ExtReal") -> "ExtReal":
        if self.finite is None or other.finite is None:
            return _INFINITY
        return ExtReal(self.finite + other.finite)

    def scaled(self, factor: float) -> "ExtReal":
        if factor < 0:
            raise ValueError("extended reals only scale by nonnegative factors")
        if self.finite is None:
            if factor == 0:
                raise ExtRealGuardError("0 * inf is not defined")
            return _INFINITY
        return ExtReal(factor * self.finite)

    def _key(self) -> float:
        return math.inf if self.finite is None else self.finite

    def __lt__(self, other: "ExtReal") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "ExtReal") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "ExtReal") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "ExtReal") -> bool:
        return self._key() >= other._key()

    def __str__(self) -> str:
        return "inf" if self.finite is None else repr(self.finite)


_INFINITY = ExtReal(None)


def _check_flows(expr: "CostExpr", flows: Mapping[str, float]) -> dict[str, float]:
    """Validate and clamp the flow arguments an expression references."""
    clean: dict[str, float] = {}
    for name in expr.populations():
        try:
            value = float(flows[name])
        except KeyError:
            raise CostDomainError(f"no flow supplied for population {name!r}") from None
        if value < -FLOW_TOLERANCE or value > 1 + FLOW_TOLERANCE:
            raise CostDomainError(f"flow {value} for {name!r} outside [0, 1]")
        clean[name] = min(1.0, max(0.0, value))
    return clean


@dataclass(frozen=True)
class CostExpr:
    """Base class of the cost-expression forms; use the concrete subclasses."""

    def populations(self) -> frozenset[str]:
        raise NotImplementedError

    def _value(self, flows: Mapping[str, float]) -> float:
        """Evaluate as IEEE float (math.inf allowed); flows pre-validated."""
        raise NotImplementedError

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        raise NotImplementedError

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        """Vectorized evaluation with np.inf for blow-ups (oracle fast path)."""
        raise NotImplementedError

    def structurally_monotone(self) -> bool:
        return True

    def structurally_convex(self) -> bool | None:
        """True/False when decidable from the AST, None when sampling decides."""
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(CostExpr):
    value: float

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("constant cost must be nonnegative")

    def populations(self) -> frozenset[str]:
        return frozenset()

    def _value(self, flows: Mapping[str, float]) -> float:
        return self.value

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        return 0.0

    def _array_value(self, flows: Mapping[str, object]) -> float:
        return self.value

    def structurally_convex(self) -> bool:
        return True


@dataclass(frozen=True)
class Affine(CostExpr):
    """constant + sum of coeff[p] * flow[p], all coefficients nonnegative."""

    constant: float
    coeffs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.constant < 0:
            raise ValueError("affine constant must be nonnegative")
        for name, c in self.coeffs.items():
            if c < 0:
                raise ValueError(
                    f"affine coefficient for {name!r} must be nonnegative; "
                    "use NonMonotoneAffine for signed coefficients"
                )
        object.__setattr__(self, "coeffs", dict(self.coeffs))

    def populations(self) -> frozenset[str]:
        return frozenset(self.coeffs)

    def _value(self, flows: Mapping[str, float]) -> float:
        return self.constant + sum(c * flows[n] for n, c in self.coeffs.items())

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        return self.coeffs.get(name, 0.0)

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        total: np.ndarray | float = self.constant
        for n, c in self.coeffs.items():
            total = total + c * flows[n]
        return total

    def structurally_convex(self) -> bool:
        return True


@dataclass(frozen=True)
class MonomialTerm:
    """coeff * prod_p flow[p]**exponent[p] with nonnegative integer exponents."""

    coeff: float
    exponents: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.coeff < 0:
            raise ValueError("monomial coefficient must be nonnegative")
        for name, k in self.exponents.items():
            if k < 0 or int(k) != k:
                raise ValueError(f"exponent for {name!r} must be a nonnegative integer")
        object.__setattr__(
            self, "exponents", {n: int(k) for n, k in self.exponents.items() if k != 0}
        )


@dataclass(frozen=True)
class Polynomial(CostExpr):
    terms: tuple[MonomialTerm, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))

    def populations(self) -> frozenset[str]:
        return frozenset(n for t in self.terms for n in t.exponents)

    def _value(self, flows: Mapping[str, float]) -> float:
        total = 0.0
        for t in self.terms:
            prod = t.coeff
            for n, k in t.exponents.items():
                prod *= flows[n] ** k
            total += prod
        return total

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        total = 0.0
        for t in self.terms:
            k = t.exponents.get(name, 0)
            if k == 0:
                continue
            prod = t.coeff * k * flows[name] ** (k - 1)
            for n, kk in t.exponents.items():
                if n != name:
                    prod *= flows[n] ** kk
            total += prod
        return total

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        total: np.ndarray | float = 0.0
        for t in self.terms:
            prod: np.ndarray | float = t.coeff
            for n, k in t.exponents.items():
                prod = prod * flows[n] ** k
            total = total + prod
        return total

    def structurally_convex(self) -> bool | None:
        # A sum of single-population powers is convex; cross-population
        # monomials (e.g. x*y) are generally not, so sampling decides.
        if all(len(t.exponents) <= 1 for t in self.terms):
            return True
        return None


@dataclass(frozen=True)
class CongestionRational(CostExpr):
    """s / (capacity - s) with s = sum of weights[p] * flow[p]; +inf for s >= capacity."""

    weights: Mapping[str, float]
    capacity: float

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        for name, w in self.weights.items():
            if w < 0:
                raise ValueError(f"weight for {name!r} must be nonnegative")
        object.__setattr__(self, "weights", dict(self.weights))

    def populations(self) -> frozenset[str]:
        return frozenset(self.weights)

    def _load(self, flows: Mapping[str, float]) -> float:
        return sum(w * flows[n] for n, w in self.weights.items())

    def _value(self, flows: Mapping[str, float]) -> float:
        s = self._load(flows)
        if s >= self.capacity:
            return math.inf
        return s / (self.capacity - s)

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        s = self._load(flows)
        if s >= self.capacity:
            raise InfiniteCostError("derivative requested at a fully congested point")
        return self.weights.get(name, 0.0) * self.capacity / (self.capacity - s) ** 2

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        s: np.ndarray | float = 0.0
        for n, w in self.weights.items():
            s = s + w * flows[n]
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s >= self.capacity, np.inf, s / (self.capacity - s))
        return out

    def structurally_convex(self) -> bool:
        # Convex increasing function of a nonnegative linear form.
        return True


@dataclass(frozen=True)
class Sum(CostExpr):
    terms: tuple[CostExpr, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))

    def populations(self) -> frozenset[str]:
        return frozenset(n for t in self.terms for n in t.populations())

    def _value(self, flows: Mapping[str, float]) -> float:
        return sum(t._value(flows) for t in self.terms)

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        return sum(t._partial(flows, name) for t in self.terms)

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        total: np.ndarray | float = 0.0
        for t in self.terms:
            total = total + t._array_value(flows)
        return total

    def structurally_monotone(self) -> bool:
        return all(t.structurally_monotone() for t in self.terms)

    def structurally_convex(self) -> bool | None:
        parts = [t.structurally_convex() for t in self.terms]
        if all(p is True for p in parts):
            return True
        if any(p is False for p in parts):
            return False
        return None


@dataclass(frozen=True)
class Scale(CostExpr):
    factor: float
    inner: CostExpr

    def __post_init__(self) -> None:
        if self.factor < 0:
            raise ValueError("scale factor must be nonnegative")

    def populations(self) -> frozenset[str]:
        return self.inner.populations()

    def _value(self, flows: Mapping[str, float]) -> float:
        v = self.inner._value(flows)
        if math.isinf(v) and self.factor == 0:
            raise ExtRealGuardError("0 * inf is not defined")
        return self.factor * v

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        return self.factor * self.inner._partial(flows, name)

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        return self.factor * self.inner._array_value(flows)

    def structurally_monotone(self) -> bool:
        return self.inner.structurally_monotone()

    def structurally_convex(self) -> bool | None:
        return self.inner.structurally_convex()


@dataclass(frozen=True)
class NonMonotoneAffine(CostExpr):
    """Affine form with signed coefficients.

    Escape hatch for deliberately non-monotone costs (used to separate the
    plain-equilibrium and Nash notions on a pathological fixture).  The
    solver refuses networks containing it unless explicitly overridden.
    Evaluation must stay nonnegative on the flow box; a negative value is a
    domain error.
    """

    constant: float
    coeffs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", dict(self.coeffs))

    def populations(self) -> frozenset[str]:
        return frozenset(self.coeffs)

    def _value(self, flows: Mapping[str, float]) -> float:
        v = self.constant + sum(c * flows[n] for n, c in self.coeffs.items())
        if v < 0:
            raise CostDomainError(f"non-monotone affine cost evaluated negative ({v})")
        return v

    def _partial(self, flows: Mapping[str, float], name: str) -> float:
        return self.coeffs.get(name, 0.0)

    def _array_value(self, flows: Mapping[str, object]) -> np.ndarray | float:
        total: np.ndarray | float = self.constant
        for n, c in self.coeffs.items():
            total = total + c * flows[n]
        return total

    def structurally_monotone(self) -> bool:
        return all(c >= 0 for c in self.coeffs.values())

    def structurally_convex(self) -> bool:
        return True


def eval_cost(expr: CostExpr, flows: Mapping[str, float]) -> ExtReal:
    """Evaluate a cost expression at the given per-population flows.

    Flows must lie in [0, 1] within 1e-12 per population; they are clamped
    before evaluation.  Returns a tagged extended real; congestion forms
    return +infinity exactly when the weighted load reaches capacity.
    """
    clean = _check_flows(expr, flows)
    v = expr._value(clean)
    if math.isinf(v):
        return ExtReal.infinity()
    return ExtReal.of(v)


def eval_partial(expr: CostExpr, flows: Mapping[str, float], population: str) -> float:
    """Analytic partial derivative with respect to one population's flow.

    Only defined where the expression is finite; raises `InfiniteCostError`
    at a blow-up point (the theory only demands derivatives at points of
    finite value).
    """
    clean = _check_flows(expr, flows)
    if math.isinf(expr._value(clean)):
        raise InfiniteCostError("derivative requested where the cost is +inf")
    return expr._partial(clean, population)


@dataclass(frozen=True)
class CostClassReport:
    monotone: bool
    c1_smooth_where_finite: bool
    convex: bool
    samples_used: int


def _grid(m: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, m)


def classify_cost(expr: CostExpr, grid: int = 21) -> CostClassReport:
    """Classify a cost expression as monotone / smooth / convex.

    Monotonicity and convexity are decided structurally where the AST
    allows; a sampled check on a `grid`-per-axis lattice confirms the
    structural verdict or decides the undecidable cases.  Sampling is
    advisory: it feeds the report, it never alters evaluation behavior.
    """
    pops = sorted(expr.populations())
    samples = 0
    monotone = expr.structurally_monotone()
    if pops:
        # Sampled confirmation along each axis, other flows held on a
        # coarse companion grid.
        axis_points = _grid(grid)
        others_grid = _grid(min(grid, 5))
        for axis in pops:
            rest = [p for p in pops if p != axis]
            for combo in _combinations(rest, others_grid):
                prev = None
                for x in axis_points:
                    flows = dict(combo)
                    flows[axis] = float(x)
                    try:
                        v = expr._value(flows)
                    except CostDomainError:
                        # value left the nonnegative range: certainly not
                        # a class-C cost, and nothing more to compare here
                        monotone = False
                        prev = None
                        continue
                    samples += 1
                    if prev is not None and v < prev - 1e-12:
                        monotone = False
                    prev = v
    structural_convex = expr.structurally_convex()
    convex = structural_convex if structural_convex is not None else True
    if pops and structural_convex is not False:
        # Midpoint convexity on finite pairs of lattice points.
        rng = np.random.default_rng(0)
        lattice = [dict(c) for c in _combinations(pops, _grid(min(grid, 9)))]
        for _ in range(min(2000, 4 * len(lattice))):
            a = lattice[rng.integers(len(lattice))]
            b = lattice[rng.integers(len(lattice))]
            mid = {p: 0.5 * (a[p] + b[p]) for p in pops}
            try:
                va, vb, vm = expr._value(a), expr._value(b), expr._value(mid)
            except CostDomainError:
                continue
            samples += 3
            if math.isinf(va) or math.isinf(vb):
                continue
            if vm > 0.5 * (va + vb) + 1e-9 * max(1.0, abs(va), abs(vb)):
                convex = False
                break
    return CostClassReport(
        monotone=monotone,
        c1_smooth_where_finite=True,
        convex=convex,
        samples_used=samples,
    )


def _combinations(names: Sequence[str], points: np.ndarray) -> Iterable[dict[str, float]]:
    if not names:
        yield {}
        return
    head, *tail = names
    for rest in _combinations(tail, points):
        for x in points:
            combo = dict(rest)
            combo[head] = float(x)
            yield combo


def compile_scalar(
    expr: CostExpr, population_order: Sequence[str]
) -> Callable[[Sequence[float]], float]:
    """Compile an expression into a fast float closure for the solver loop.

    The closure takes per-population flows in `population_order` and returns
    an IEEE float with math.inf at blow-ups.  It is an optimization of
    `eval_cost` (tested equal against it), not a second semantics.
    """
    index = {name: i for i, name in enumerate(population_order)}

    if isinstance(expr, Constant):
        c = expr.value
        return lambda flows: c
    if isinstance(expr, (Affine, NonMonotoneAffine)):
        pairs = [(index[n], c) for n, c in expr.coeffs.items()]
        c0 = expr.constant
        return lambda flows: c0 + sum(c * flows[i] for i, c in pairs)
    if isinstance(expr, Polynomial):
        terms = [
            (t.coeff, [(index[n], k) for n, k in t.exponents.items()])
            for t in expr.terms
        ]

        def poly(flows: Sequence[float]) -> float:
            total = 0.0
            for coeff, exps in terms:
                prod = coeff
                for i, k in exps:
                    prod *= flows[i] ** k
                total += prod
            return total

        return poly
    if isinstance(expr, CongestionRational):
        pairs = [(index[n], w) for n, w in expr.weights.items()]
        cap = expr.capacity

        def congested(flows: Sequence[float]) -> float:
            s = sum(w * flows[i] for i, w in pairs)
            if s >= cap:
                return math.inf
            return s / (cap - s)

        return congested
    if isinstance(expr, Sum):
        parts = [compile_scalar(t, population_order) for t in expr.terms]
        return lambda flows: sum(p(flows) for p in parts)
    if isinstance(expr, Scale):
        inner = compile_scalar(expr.inner, population_order)
        factor = expr.factor
        return lambda flows: factor * inner(flows)
    raise TypeError(f"unknown cost expression {type(expr).__name__}")


def eval_array(expr: CostExpr, flows: Mapping[str, object]) -> np.ndarray | float:
    """Vectorized evaluation over numpy arrays of flows (np.inf at blow-ups)."""
    return expr._array_value(flows)


# ---------------------------------------------------------------------------
# File format: cost expression objects
# ---------------------------------------------------------------------------

def cost_to_obj(expr: CostExpr) -> dict:
    """Serialize to the kind-discriminated JSON object format."""
    if isinstance(expr, Constant):
        return {"kind": "constant", "value": expr.value}
    if isinstance(expr, Affine):
        return {"kind": "affine", "constant": expr.constant, "coeffs": dict(expr.coeffs)}
    if isinstance(expr, Polynomial):
        return {
            "kind": "poly",
            "terms": [
                {"coeff": t.coeff, "exponents": dict(t.exponents)} for t in expr.terms
            ],
        }
    if isinstance(expr, CongestionRational):
        return {
            "kind": "congestion",
            "weights": dict(expr.weights),
            "capacity": expr.capacity,
        }
    if isinstance(expr, Sum):
        return {"kind": "sum", "terms": [cost_to_obj(t) for t in expr.terms]}
    if isinstance(expr, Scale):
        return {"kind": "scale", "factor": expr.factor, "expr": cost_to_obj(expr.inner)}
    if isinstance(expr, NonMonotoneAffine):
        return {
            "kind": "nonmonotone_affine",
            "constant": expr.constant,
            "coeffs": dict(expr.coeffs),
        }
    raise TypeError(f"unknown cost expression {type(expr).__name__}")


def cost_from_obj(obj: Mapping) -> CostExpr:
    """Parse a kind-discriminated cost object; raises ValueError on bad input."""
    if not isinstance(obj, Mapping) or "kind" not in obj:
        raise ValueError("cost object must be a mapping with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "constant":
            return Constant(float(obj["value"]))
        if kind == "affine":
            return Affine(
                float(obj.get("constant", 0.0)),
                {str(n): float(c) for n, c in dict(obj.get("coeffs", {})).items()},
            )
        if kind == "poly":
            return Polynomial(
                tuple(
                    MonomialTerm(
                        float(t["coeff"]),
                        {str(n): int(k) for n, k in dict(t.get("exponents", {})).items()},
                    )
                    for t in obj["terms"]
                )
            )
        if kind == "congestion":
            return CongestionRational(
                {str(n): float(w) for n, w in dict(obj["weights"]).items()},
                float(obj["capacity"]),
            )
        if kind == "sum":
            return Sum(tuple(cost_from_obj(t) for t in obj["terms"]))
        if kind == "scale":
            return Scale(float(obj["factor"]), cost_from_obj(obj["expr"]))
        if kind == "nonmonotone_affine":
            return NonMonotoneAffine(
                float(obj.get("constant", 0.0)),
                {str(n): float(c) for n, c in dict(obj.get("coeffs", {})).items()},
            )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed {kind!r} cost object: {exc}") from exc
    raise ValueError(f"unknown cost kind {kind!r}")
