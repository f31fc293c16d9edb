"""Route travel times, equilibrium predicates, and the fixed-point solver.

Three nested notions are checked for an assignment of route shares:

* *equilibrium*: within each population, all routes carrying positive share
  have equal travel time;
* *Nash*: additionally, every unused route is at least as slow as the
  population's mean time, so nobody gains by switching;
* *eps-Nash*: moving a mass eps between any two routes never lets the
  movers arrive faster.

Existence is constructive: a continuous self-map of the product of share
simplices is built from bounded-compressed route times, a conservative step
size, and a clip-and-rescale normalization; its fixed points are exactly
the Nash equilibria, and the solver runs a damped iteration of that map to
a verified fixed point.

Everything here is pure; the multistart driver owns per-start state and
merges results deterministically, so results are independent of execution
order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .costs import ExtReal, compile_scalar
from .netcore import IncidenceMatrix, Network, build_incidence

INPUT_TOLERANCE = 1e-12
DEFAULT_TIME_TOLERANCE = 1e-9
DEFAULT_SHARE_TOLERANCE = 1e-9


class DimensionMismatchError(ValueError):
    """Assignment shape does not match the network's populations/routes."""


class NonMonotoneCostError(ValueError):
    """The solver was asked to run on non-monotone costs without an override."""


class NormalizationError(ArithmeticError):
    """Internal invariant violation: normalization denominator not positive."""


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold for the inputs."""


@dataclass(frozen=True)
class Assignment:
    """One share vector per population; each lies exactly on its simplex."""

    shares: tuple[tuple[float, ...], ...]

    @staticmethod
    def make(vectors: Sequence[Sequence[float]], tolerance: float = INPUT_TOLERANCE) -> "Assignment":
        """Validate, clamp tiny negatives, and renormalize exactly once."""
        cleaned = []
        for vec in vectors:
            arr = [float(x) for x in vec]
            if not arr:
                raise DimensionMismatchError("empty share vector")
            total = sum(arr)
            if abs(total - 1.0) > tolerance:
                raise ValueError(f"share vector sums to {total}, not 1")
            if any(x < -tolerance for x in arr):
                raise ValueError(f"share vector has negative component in {arr}")
            clamped = [max(0.0, x) for x in arr]
            s = sum(clamped)
            cleaned.append(tuple(x / s for x in clamped))
        return Assignment(tuple(cleaned))

    def as_arrays(self) -> list[np.ndarray]:
        return [np.asarray(v, dtype=float) for v in self.shares]


def uniform_assignment(net: Network) -> Assignment:
    return Assignment.make([[1.0 / len(p.routes)] * len(p.routes) for p in net.populations])


def vertex_assignment(net: Network, route_indices: Sequence[int]) -> Assignment:
    vecs = []
    for pop, k in zip(net.populations, route_indices):
        v = [0.0] * len(pop.routes)
        v[k] = 1.0
        vecs.append(v)
    return Assignment.make(vecs)


@dataclass(frozen=True)
class RouteTimes:
    """Per-population route travel times and share-weighted mean times."""

    times: tuple[tuple[ExtReal, ...], ...]
    means: tuple[ExtReal, ...]


@dataclass(frozen=True)
class PredicateVerdict:
    holds: bool
    residual: float
    detail: tuple[str, ...] = ()


@dataclass(frozen=True)
class EquilibriumReport:
    is_equilibrium: bool
    is_nash: bool
    is_eps_nash: bool
    common_times: tuple[ExtReal, ...]
    equilibrium_residual: float
    nash_residual: float
    eps_residual: float
    eps_used: float


@dataclass(frozen=True)
class SolveParams:
    omega: float = 0.5
    max_iters: int = 100_000
    residual_tol: float = 1e-12
    verify_tol: float = DEFAULT_TIME_TOLERANCE
    allow_nonmonotone: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.omega <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class SolveResult:
    assignment: Assignment
    iterations: int
    residual: float
    converged: bool
    verified: EquilibriumReport
    trajectory: tuple[float, ...] = ()

    @property
    def success(self) -> bool:
        return self.converged and self.verified.is_nash


@dataclass(frozen=True)
class MultistartParams:
    grid_depth: int = 1
    random_starts: int = 4
    seed: int = 0
    dedup_tolerance: float = 1e-6
    solve: SolveParams = field(default_factory=SolveParams)


# ---------------------------------------------------------------------------
# Compiled evaluation engine (internal hot path)
# ---------------------------------------------------------------------------

class _Engine:
    """Per-network compiled data: incidences, route road lists, cost closures.

    Scalar cost closures return IEEE floats with math.inf at blow-ups; route
    times are accumulated road-by-road so an infinite cost on a road outside
    a route can never meet a zero coefficient.
    """

    def __init__(self, net: Network):
        self.net = net
        self.names = list(net.population_names())
        self.pop_count = len(self.names)
        if self.pop_count == 0:
            raise DimensionMismatchError("network has no populations")
        self.incidences: list[IncidenceMatrix] = [
            build_incidence(net, p) for p in range(self.pop_count)
        ]
        road_index = net.road_index()
        self.route_roads: list[list[list[int]]] = [
            [[road_index[rid] for rid in route.road_ids] for route in pop.routes]
            for pop in net.populations
        ]
        self.route_counts = [len(pop.routes) for pop in net.populations]
        self.cost_fns: list[dict[int, Callable[[Sequence[float]], float]]] = []
        for pop in net.populations:
            fns: dict[int, Callable[[Sequence[float]], float]] = {}
            for rid, expr in pop.costs.items():
                if rid in road_index:
                    fns[road_index[rid]] = compile_scalar(expr, self.names)
            self.cost_fns.append(fns)
        self.used_roads = [sorted(fns) for fns in self.cost_fns]
        self.inc_float = [inc.entries.astype(float) for inc in self.incidences]
        # Shared step size: half the reciprocal of the largest route count.
        self.step = 0.5 * min(1.0 / n for n in self.route_counts)

    def check_dimensions(self, theta: Assignment) -> None:
        if len(theta.shares) != self.pop_count:
            raise DimensionMismatchError(
                f"assignment has {len(theta.shares)} populations, network has {self.pop_count}"
            )
        for vec, n in zip(theta.shares, self.route_counts):
            if len(vec) != n:
                raise DimensionMismatchError(
                    f"share vector of length {len(vec)} does not match {n} routes"
                )

    def road_flows(self, shares: Sequence[Sequence[float]]) -> list[list[float]]:
        """Per-population road-flow vectors (lists of length N)."""
        return [
            (self.inc_float[p] @ np.asarray(shares[p], dtype=float)).tolist()
            for p in range(self.pop_count)
        ]

    def times_from_flows(self, flows: list[list[float]]) -> list[list[float]]:
        """Route times as floats (math.inf allowed) from per-pop road flows."""
        all_times: list[list[float]] = []
        for p in range(self.pop_count):
            tau: dict[int, float] = {}
            fns = self.cost_fns[p]
            for h in self.used_roads[p]:
                point = tuple(flows[q][h] for q in range(self.pop_count))
                tau[h] = fns[h](point)
            all_times.append(
                [sum(tau[h] for h in roads) for roads in self.route_roads[p]]
            )
        return all_times

    def route_times(self, shares: Sequence[Sequence[float]]) -> list[list[float]]:
        return self.times_from_flows(self.road_flows(shares))

    def shifted_times(
        self, shares: Sequence[Sequence[float]], pop: int, vector: Sequence[float]
    ) -> list[float]:
        """Times of population `pop` with only its own share vector replaced."""
        modified = list(shares)
        modified[pop] = vector
        return self.route_times(modified)[pop]

    def map_once(self, shares: Sequence[Sequence[float]]) -> list[list[float]]:
        """One application of the equilibrium self-map (clip-and-rescale)."""
        times = self.route_times(shares)
        out: list[list[float]] = []
        for p in range(self.pop_count):
            theta = shares[p]
            phis = [compress_time(t) for t in times[p]]
            mean_phi = sum(th * ph for th, ph in zip(theta, phis))
            raw = [
                th - self.step * (ph - mean_phi) for th, ph in zip(theta, phis)
            ]
            clipped = [x if x > 0.0 else 0.0 for x in raw]
            total = sum(clipped)
            if total <= 0.0:
                raise NormalizationError(
                    "normalization denominator vanished; step size invariant broken"
                )
            out.append([x / total for x in clipped])
        return out


_ENGINE_CACHE: dict[int, tuple[Network, _Engine]] = {}


def _engine(net: Network) -> _Engine:
    cached = _ENGINE_CACHE.get(id(net))
    if cached is not None and cached[0] is net:
        return cached[1]
    eng = _Engine(net)
    if len(_ENGINE_CACHE) > 64:
        _ENGINE_CACHE.clear()
    _ENGINE_CACHE[id(net)] = (net, eng)
    return eng


def _to_extreal(x: float) -> ExtReal:
    return ExtReal.infinity() if math.isinf(x) else ExtReal.of(x)


def _mean_float(theta: Sequence[float], times: Sequence[float], share_tol: float) -> float:
    """Share-weighted mean time; zero-share routes contribute nothing even
    when their time is infinite."""
    total = 0.0
    for th, t in zip(theta, times):
        if th > share_tol:
            total += th * t  # th > 0, so inf propagates and 0*inf never occurs
    return total


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def route_times(net: Network, theta: Assignment) -> RouteTimes:
    """Travel time of every route of every population at the assignment.

    A route's time is the sum of its roads' costs at the induced flows;
    +infinity propagates through the sums.  Means use the zero-share
    convention (a route with zero share and infinite time contributes 0).
    """
    eng = _engine(net)
    eng.check_dimensions(theta)
    raw = eng.route_times(theta.shares)
    times = tuple(tuple(_to_extreal(t) for t in pop_times) for pop_times in raw)
    means = tuple(
        _to_extreal(_mean_float(theta.shares[p], raw[p], 0.0))
        for p in range(eng.pop_count)
    )
    return RouteTimes(times=times, means=means)


def mean_times(theta: Assignment, times: Sequence[Sequence[ExtReal]]) -> tuple[ExtReal, ...]:
    """Share-weighted mean route times with the 0*inf = 0 convention."""
    out = []
    for vec, pop_times in zip(theta.shares, times):
        if len(vec) != len(pop_times):
            raise DimensionMismatchError("share vector and time vector differ in length")
        total = 0.0
        for th, t in zip(vec, pop_times):
            if th > 0.0:
                total += th * t.as_float()
        out.append(_to_extreal(total))
    return tuple(out)


def is_equilibrium(
    net: Network,
    theta: Assignment,
    tol: float = DEFAULT_TIME_TOLERANCE,
    share_tol: float = DEFAULT_SHARE_TOLERANCE,
) -> PredicateVerdict:
    """Do all relevant (positive-share) routes of each population agree in time?

    Finite pairs compare with relative tolerance `tol`; two infinite times
    count as equal.  Simplex vertices pass trivially.
    """
    eng = _engine(net)
    eng.check_dimensions(theta)
    raw = eng.route_times(theta.shares)
    worst = 0.0
    detail: list[str] = []
    holds = True
    for p, (vec, times) in enumerate(zip(theta.shares, raw)):
        relevant = [t for th, t in zip(vec, times) if th > share_tol]
        if len(relevant) <= 1:
            continue
        finite = [t for t in relevant if not math.isinf(t)]
        if len(finite) != len(relevant):
            if finite:  # mixed finite/infinite relevant times can never agree
                holds = False
                worst = math.inf
                detail.append(f"{net.populations[p].name}: finite and infinite relevant times")
            continue
        spread = (max(finite) - min(finite)) / max(1.0, abs(max(finite)))
        worst = max(worst, spread)
        if spread > tol:
            holds = False
            detail.append(
                f"{net.populations[p].name}: relevant times spread {spread:.3e}"
            )
    return PredicateVerdict(holds=holds, residual=worst, detail=tuple(detail))


def is_nash(
    net: Network,
    theta: Assignment,
    tol: float = DEFAULT_TIME_TOLERANCE,
    share_tol: float = DEFAULT_SHARE_TOLERANCE,
) -> PredicateVerdict:
    """Equilibrium, and no unused route is faster than the population mean."""
    eq = is_equilibrium(net, theta, tol=tol, share_tol=share_tol)
    eng = _engine(net)
    raw = eng.route_times(theta.shares)
    worst = 0.0
    detail: list[str] = list(eq.detail)
    holds = eq.holds
    for p, (vec, times) in enumerate(zip(theta.shares, raw)):
        mean = _mean_float(vec, times, share_tol)
        for i, (th, t) in enumerate(zip(vec, times)):
            if th > share_tol:
                continue
            if math.isinf(t):
                continue  # infinitely slow unused route can never be attractive
            shortfall = (mean - t) / max(1.0, abs(mean)) if not math.isinf(mean) else math.inf
            if shortfall > worst:
                worst = shortfall
            if shortfall > tol:
                holds = False
                detail.append(
                    f"{net.populations[p].name}: unused route {i} beats the mean by {shortfall:.3e}"
                )
    return PredicateVerdict(holds=holds, residual=max(worst, 0.0), detail=tuple(detail))


def default_eps(theta: Assignment, share_tol: float = DEFAULT_SHARE_TOLERANCE) -> float:
    """Half the smallest positive share over all populations."""
    smallest = 1.0
    for vec in theta.shares:
        positive = [x for x in vec if x > share_tol]
        smallest = min(smallest, 0.5 * min(positive))
    return smallest


def is_eps_nash(
    net: Network,
    theta: Assignment,
    eps: float | None = None,
    tol: float = DEFAULT_TIME_TOLERANCE,
    share_tol: float = DEFAULT_SHARE_TOLERANCE,
    ladder: bool = False,
) -> PredicateVerdict:
    """Equilibrium, and no eps-mass route change pays off for the movers.

    For every feasible shift of `eps` mass from route i to route j, the
    time of route j *after* the shift must be at least the time of route i
    before it.  `ladder=True` additionally tests eps/2 and eps/4.
    """
    if eps is None:
        eps = default_eps(theta, share_tol)
    if eps <= 0:
        raise ValueError("eps must be positive")
    eq = is_equilibrium(net, theta, tol=tol, share_tol=share_tol)
    eng = _engine(net)
    raw = eng.route_times(theta.shares)
    holds = eq.holds
    worst = 0.0
    detail: list[str] = list(eq.detail)
    eps_values = [eps, eps / 2, eps / 4] if ladder else [eps]
    for p in range(eng.pop_count):
        vec = list(theta.shares[p])
        n = len(vec)
        for i, j in itertools.permutations(range(n), 2):
            for e in eps_values:
                if vec[i] < e - INPUT_TOLERANCE:
                    continue
                shifted = list(vec)
                shifted[i] = max(0.0, shifted[i] - e)
                shifted[j] = shifted[j] + e
                after = eng.shifted_times(theta.shares, p, shifted)[j]
                before = raw[p][i]
                if math.isinf(after):
                    continue  # switching into an infinite route never pays
                if math.isinf(before):
                    gain = math.inf
                else:
                    gain = (before - after) / max(1.0, abs(before))
                if gain > worst:
                    worst = gain
                if gain > tol:
                    holds = False
                    detail.append(
                        f"{net.populations[p].name}: moving {e:g} from route {i} to "
                        f"route {j} gains {gain:.3e}"
                    )
    return PredicateVerdict(holds=holds, residual=max(worst, 0.0), detail=tuple(detail))


def verify(
    net: Network,
    theta: Assignment,
    tol: float = DEFAULT_TIME_TOLERANCE,
    share_tol: float = DEFAULT_SHARE_TOLERANCE,
    eps: float | None = None,
) -> EquilibriumReport:
    """Evaluate all three predicates; the report's verdicts are nested so
    eps-Nash implies Nash implies equilibrium by construction."""
    eq = is_equilibrium(net, theta, tol=tol, share_tol=share_tol)
    nash = is_nash(net, theta, tol=tol, share_tol=share_tol)
    eps_used = default_eps(theta, share_tol) if eps is None else eps
    eps_verdict = is_eps_nash(net, theta, eps=eps_used, tol=tol, share_tol=share_tol)
    rt = route_times(net, theta)
    return EquilibriumReport(
        is_equilibrium=eq.holds,
        is_nash=eq.holds and nash.holds,
        is_eps_nash=eq.holds and nash.holds and eps_verdict.holds,
        common_times=rt.means,
        equilibrium_residual=eq.residual,
        nash_residual=nash.residual,
        eps_residual=eps_verdict.residual,
        eps_used=eps_used,
    )


def compress_time(x: ExtReal | float) -> float:
    """Squash a nonnegative extended-real time into [0, 1].

    Finite x maps to x/(1+x); +infinity maps to 1.  Strictly increasing and
    continuous, which is exactly what the fixed-point construction needs.
    """
    if isinstance(x, ExtReal):
        x = x.as_float()
    if x < 0:
        raise ValueError("times are nonnegative")
    if math.isinf(x):
        return 1.0
    return x / (1.0 + x)


def fixed_point_map(net: Network, theta: Assignment) -> Assignment:
    """The simplex self-map whose fixed points are the Nash equilibria.

    Per population: subtract a conservative multiple of the compressed
    route times' deviation from their share-weighted mean, clip negatives
    to zero, and rescale to the simplex.  Infinite times enter only through
    the compression (as 1).
    """
    eng = _engine(net)
    eng.check_dimensions(theta)
    return Assignment.make(eng.map_once(theta.shares))


def fixed_point_residual(net: Network, theta: Assignment) -> float:
    eng = _engine(net)
    eng.check_dimensions(theta)
    image = eng.map_once(theta.shares)
    return max(
        abs(a - b)
        for vec, img in zip(theta.shares, image)
        for a, b in zip(vec, img)
    )


def _require_monotone(net: Network, allow_nonmonotone: bool) -> None:
    if allow_nonmonotone:
        return
    for pop in net.populations:
        for rid, expr in pop.costs.items():
            if not expr.structurally_monotone():
                raise NonMonotoneCostError(
                    f"cost of road {rid!r} for population {pop.name!r} is not "
                    "monotone; pass allow_nonmonotone to solve anyway"
                )


def solve_fixed_point(
    net: Network,
    theta0: Assignment | None = None,
    params: SolveParams = SolveParams(),
) -> SolveResult:
    """Damped fixed-point iteration to a verified Nash equilibrium.

    Iterates theta <- (1-omega)*theta + omega*map(theta) until the map
    residual drops below `residual_tol` or `max_iters` is hit.  The result
    always carries a verification report; non-convergence is flagged on the
    best iterate, never raised.
    """
    _require_monotone(net, params.allow_nonmonotone)
    eng = _engine(net)
    theta = theta0 if theta0 is not None else uniform_assignment(net)
    eng.check_dimensions(theta)
    shares = [list(v) for v in theta.shares]
    omega = params.omega
    residual = math.inf
    best_residual = math.inf
    best_shares = shares
    trajectory: list[float] = []
    iterations = 0
    for iterations in range(1, params.max_iters + 1):
        image = eng.map_once(shares)
        residual = max(
            abs(a - b) for vec, img in zip(shares, image) for a, b in zip(vec, img)
        )
        if residual < best_residual:
            best_residual = residual
            best_shares = shares
        if iterations % 100 == 1:
            trajectory.append(residual)
        if residual < params.residual_tol:
            shares = image
            break
        shares = [
            [(1 - omega) * a + omega * b for a, b in zip(vec, img)]
            for vec, img in zip(shares, image)
        ]
    converged = residual < params.residual_tol
    if converged:
        best_shares, best_residual = shares, residual
    trajectory.append(best_residual)
    final = Assignment.make(best_shares, tolerance=1e-9)
    report = verify(net, final, tol=params.verify_tol)
    return SolveResult(
        assignment=final,
        iterations=iterations,
        residual=best_residual,
        converged=converged,
        verified=report,
        trajectory=tuple(trajectory),
    )


def simplex_grid(n: int, resolution: int) -> Iterator[tuple[float, ...]]:
    """All points of the uniform simplex grid with `resolution` subdivisions,
    in deterministic lexicographic order of the composition."""
    if n == 1:
        yield (1.0,)
        return

    def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first, *rest)

    for combo in compositions(resolution, n):
        yield tuple(c / resolution for c in combo)


def _start_points(net: Network, params: MultistartParams) -> list[Assignment]:
    per_pop_grids = [
        [list(point) for point in simplex_grid(len(pop.routes), max(1, params.grid_depth))]
        for pop in net.populations
    ]
    starts = [
        Assignment.make(list(combo)) for combo in itertools.product(*per_pop_grids)
    ]
    starts.append(uniform_assignment(net))
    rng = np.random.default_rng(params.seed)
    for _ in range(params.random_starts):
        vecs = [rng.dirichlet(np.ones(len(pop.routes))) for pop in net.populations]
        starts.append(Assignment.make([v / v.sum() for v in vecs], tolerance=1e-9))
    return starts


def solve_multistart(net: Network, params: MultistartParams = MultistartParams()) -> list[SolveResult]:
    """Solve from simplex-grid corners, the barycenter, and seeded random
    interior points; return distinct verified equilibria.

    Results are sorted by assignment and deduplicated at `dedup_tolerance`
    in the max norm, so output is independent of start order.  Starts that
    fail to converge or verify are dropped; the list is empty only if every
    start fails.
    """
    _require_monotone(net, params.solve.allow_nonmonotone)
    results = [solve_fixed_point(net, start, params.solve) for start in _start_points(net, params)]
    successes = [r for r in results if r.success]
    successes.sort(key=lambda r: r.assignment.shares)
    distinct: list[SolveResult] = []
    for result in successes:
        duplicate = False
        for kept in distinct:
            gap = max(
                abs(a - b)
                for va, vb in zip(result.assignment.shares, kept.assignment.shares)
                for a, b in zip(va, vb)
            )
            if gap < params.dedup_tolerance:
                duplicate = True
                if result.residual < kept.residual:
                    distinct[distinct.index(kept)] = result
                break
        if not duplicate:
            distinct.append(result)
    return distinct


@dataclass(frozen=True)
class ConditionalOptimalityResult:
    holds: bool
    per_population: tuple[tuple[str, float, float, bool], ...]
    """(name, value at assignment, grid minimum, attained) per population."""


def check_conditional_optimality(
    net: Network,
    theta: Assignment,
    resolution: int = 201,
) -> ConditionalOptimalityResult:
    """Does each population's mean time attain its conditional minimum?

    With the other populations frozen at `theta`, the population's mean
    time is grid-minimized over its own simplex; the verdict tolerance
    scales with grid spacing times an empirical variation bound.  This is
    a sufficient condition for Nash, not a consequence of it.
    """
    eq = is_equilibrium(net, theta)
    if not eq.holds:
        raise PreconditionError("assignment is not an equilibrium")
    eng = _engine(net)
    rows = []
    holds = True
    for p, pop in enumerate(net.populations):
        n = len(pop.routes)
        values = []
        for point in simplex_grid(n, resolution):
            times = eng.shifted_times(theta.shares, p, point)
            values.append(_mean_float(point, times, 0.0))
        finite = [v for v in values if not math.isinf(v)]
        grid_min = min(values)
        at_theta = _mean_float(
            theta.shares[p], eng.route_times(theta.shares)[p], 0.0
        )
        span = (max(finite) - min(finite)) if finite else 0.0
        tol = max(1e-9, 2.0 * span / resolution)
        attained = at_theta <= grid_min + tol
        holds = holds and attained
        rows.append((pop.name, at_theta, grid_min, attained))
    return ConditionalOptimalityResult(holds=holds, per_population=tuple(rows))
