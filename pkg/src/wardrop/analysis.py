"""Uniqueness diagnostics, the brute-force grid oracle, and scenario comparison.

The uniqueness machinery averages cost derivatives along the segment between
two assignments into four diagonal matrices (own- and cross-sensitivities of
each population's road costs), classifies the per-road 2x2 blocks for
positive semidefiniteness, and samples the coupling hypothesis under which
at most one Nash equilibrium can exist.  Exhaustive verification over all
assignment pairs is impossible, so verdicts are always "sampled".

The grid oracle enumerates product simplex grids and returns every point
that verifies as Nash at a tolerance scaled to the grid spacing; it is the
independent check used against the solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .costs import InfiniteCostError, eval_array, eval_partial
from .equilibrium import (
    Assignment,
    PreconditionError,
    SolveParams,
    _engine,
    is_nash,
    simplex_grid,
    solve_fixed_point,
    uniform_assignment,
)
from .netcore import Network

ZERO_TOLERANCE = 1e-12
DISCRIMINANT_TOLERANCE = 1e-9


class OracleBudgetError(ValueError):
    """The requested grid is larger than the enumeration budget."""


class GammaConditionError(ValueError):
    """A population violates the distinguishing-road condition."""

    def __init__(self, population: str, route_index: int):
        self.population = population
        self.route_index = route_index
        super().__init__(
            f"population {population!r}, route {route_index}: no road of its own"
        )


def gauss_legendre_unit(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class SegmentMatrices:
    """Diagonal averaged-derivative matrices along a segment of assignments.

    `own[p][h]` averages the derivative of population p's cost on road h
    with respect to its own flow; `cross[p][h]` with respect to the other
    population's flow.  Own derivatives are averaged along population p's
    flow segment with the other population frozen at the segment's second
    endpoint (for p=0) or first endpoint (for p=1), matching the exact
    telescoping decomposition of route-time differences.
    """

    own: tuple[np.ndarray, np.ndarray]
    cross: tuple[np.ndarray, np.ndarray]
    endpoints: tuple[Assignment, Assignment]
    quadrature_nodes: int


def segment_matrices(
    net: Network,
    first: Assignment,
    second: Assignment,
    quadrature_nodes: int = 16,
) -> SegmentMatrices:
    """Average cost derivatives along the segment between two assignments.

    Requires a two-population network and smooth costs that stay finite on
    the whole segment; an infinite evaluation raises `InfiniteCostError`
    naming the road.  With these matrices, route-time differences between
    the endpoints factor exactly through the incidence matrices:

        T_0(second) - T_0(first) = G0' @ diag(own[0]) @ G0 @ d0
                                 + G0' @ diag(cross[0]) @ G1 @ d1
        T_1(second) - T_1(first) = G1' @ diag(cross[1]) @ G0 @ d0
                                 + G1' @ diag(own[1]) @ G1 @ d1

    where d_p is the share difference and G_p the incidence matrix.
    """
    if len(net.populations) != 2:
        raise PreconditionError("segment matrices are defined for exactly 2 populations")
    for pop in net.populations:
        for rid, expr in pop.costs.items():
            if not expr.structurally_monotone():
                raise PreconditionError(
                    f"cost of road {rid!r} for population {pop.name!r} is not "
                    "monotone; averaged sensitivities require increasing costs"
                )
    eng = _engine(net)
    eng.check_dimensions(first)
    eng.check_dimensions(second)
    names = eng.names
    nodes, weights = gauss_legendre_unit(quadrature_nodes)
    flows_first = eng.road_flows(first.shares)
    flows_second = eng.road_flows(second.shares)
    n_roads = len(net.roads)
    own = (np.zeros(n_roads), np.zeros(n_roads))
    cross = (np.zeros(n_roads), np.zeros(n_roads))
    road_ids = [r.id for r in net.roads]

    for p in (0, 1):
        other = 1 - p
        pop = net.populations[p]
        # Own-flow derivative along p's segment, other frozen at endpoint:
        # second endpoint for the first population, first endpoint for the
        # second, which is what makes the telescoping identity exact.
        frozen_other = flows_second[other] if p == 0 else flows_first[other]
        # Cross derivative along the *other* population's segment, own flows
        # frozen at the complementary endpoint.
        frozen_own = flows_second[p] if other == 0 else flows_first[p]
        for h, rid in enumerate(road_ids):
            expr = pop.costs.get(rid)
            if expr is None:
                continue
            own_acc = 0.0
            cross_acc = 0.0
            for s, w in zip(nodes, weights):
                own_point = {
                    names[p]: (1 - s) * flows_first[p][h] + s * flows_second[p][h],
                    names[other]: frozen_other[h],
                }
                cross_point = {
                    names[other]: (1 - s) * flows_first[other][h] + s * flows_second[other][h],
                    names[p]: frozen_own[h],
                }
                try:
                    own_acc += w * eval_partial(expr, own_point, names[p])
                    cross_acc += w * eval_partial(expr, cross_point, names[other])
                except InfiniteCostError as exc:
                    raise InfiniteCostError(
                        f"cost of road {rid!r} for population {pop.name!r} is "
                        f"infinite along the segment"
                    ) from exc
            own[p][h] = own_acc
            cross[p][h] = cross_acc
    return SegmentMatrices(
        own=own, cross=cross, endpoints=(first, second), quadrature_nodes=quadrature_nodes
    )


@dataclass(frozen=True)
class DefposResult:
    ok: bool
    cases: tuple[str, ...]  # per road: all-zero | first-only | second-only | coupled | violation


def check_defpos(sm: SegmentMatrices) -> DefposResult:
    """Classify each road's 2x2 sensitivity block for positive semidefiniteness.

    With nonnegative diagonals, the block [[q0, p0], [p1, q1]] is PSD exactly
    when 4*q0*q1 >= (p0+p1)^2, which splits into the admissible cases below;
    anything else is a violation.
    """
    cases = []
    ok = True
    q0s, q1s = sm.own
    p0s, p1s = sm.cross
    for q0, q1, p0, p1 in zip(q0s, q1s, p0s, p1s):
        zero = ZERO_TOLERANCE
        if min(q0, q1, p0, p1) < -zero:  # negative sensitivity: outside the lemma
            cases.append("violation")
            ok = False
            continue
        q0z, q1z = q0 <= zero, q1 <= zero
        p_sum = p0 + p1
        if q0z and q1z and p_sum <= zero:
            cases.append("all-zero")
        elif not q0z and q1z and p_sum <= zero:
            cases.append("first-only")
        elif q0z and not q1z and p_sum <= zero:
            cases.append("second-only")
        elif not q0z and not q1z and 4 * q0 * q1 >= p_sum**2 * (1 - DISCRIMINANT_TOLERANCE):
            cases.append("coupled")
        else:
            cases.append("violation")
            ok = False
    return DefposResult(ok=ok, cases=tuple(cases))


# Case codes for the sampled uniqueness hypothesis, most benign first.
H_STRICT = "H0"
H_INERT = "H1"
H_FIRST = "H2"
H_SECOND = "H3"
H_BOUNDARY = "H4"
H_VIOLATION = "violation"
H_NOT_SHARED = "n/a"

CASE_LEGEND = {
    H_STRICT: "strictly coupled (both own-sensitivities positive, strict discriminant)",
    H_INERT: "all four sensitivities zero",
    H_FIRST: "only the first population's own-sensitivity positive",
    H_SECOND: "only the second population's own-sensitivity positive",
    H_BOUNDARY: "discriminant exactly at the semidefiniteness boundary",
    H_VIOLATION: "block not positive semidefinite",
    H_NOT_SHARED: "road not used by both populations",
}

_SEVERITY = [H_NOT_SHARED, H_STRICT, H_INERT, H_FIRST, H_SECOND, H_BOUNDARY, H_VIOLATION]


def _classify_h_case(q0: float, q1: float, p0: float, p1: float) -> str:
    zero = ZERO_TOLERANCE
    if min(q0, q1, p0, p1) < -zero:
        return H_VIOLATION
    p_sum = p0 + p1
    if q0 > zero and q1 > zero:
        disc = 4 * q0 * q1 - p_sum**2
        scale = max(1.0, 4 * q0 * q1, p_sum**2)
        if disc > DISCRIMINANT_TOLERANCE * scale:
            return H_STRICT
        if disc >= -DISCRIMINANT_TOLERANCE * scale:
            return H_BOUNDARY
        return H_VIOLATION
    if q0 <= zero and q1 <= zero and p_sum <= zero:
        return H_INERT
    if q0 > zero and q1 <= zero and p_sum <= zero:
        return H_FIRST
    if q0 <= zero and q1 > zero and p_sum <= zero:
        return H_SECOND
    return H_VIOLATION


@dataclass(frozen=True)
class UniquenessReport:
    defpos_ok: bool
    road_cases: tuple[tuple[str, str], ...]  # (road id, worst case over sampled pairs)
    exceptional_roads: int  # worst pair's count of shared roads short of strict
    hypothesis_satisfied: bool
    pairs_sampled: int
    pairs_skipped_infinite: int
    verdict: str
    pair_residuals: tuple[tuple[float, ...], ...] = ()
    """Duplicate-detector residuals for pairs of independently found equilibria."""


@dataclass(frozen=True)
class HSampler:
    pairs: int = 100
    seed: int = 0
    include_corners: bool = True
    quadrature_nodes: int = 16


def check_hypothesis_coupling(net: Network, sampler: HSampler = HSampler()) -> UniquenessReport:
    """Sample assignment pairs and test the at-most-one-equilibrium hypothesis.

    Preconditions: exactly two populations, each satisfying the
    distinguishing-road condition (raises `GammaConditionError` naming the
    first offender).  For each sampled pair, every road used by both
    populations must satisfy the strict coupling case, except at most one
    road falling in one of the degenerate admissible cases.  Roads outside
    either population's subnetwork are excluded (`n/a`).  Pairs whose
    segment meets an infinite cost are skipped and counted.  The verdict is
    "at-most-one (sampled)" or "hypothesis fails (sampled)"; sampling never
    proves the hypothesis for all pairs.
    """
    if len(net.populations) != 2:
        raise PreconditionError("uniqueness analysis is defined for exactly 2 populations")
    from .netcore import check_condition_gamma

    for p, pop in enumerate(net.populations):
        holds, witnesses = check_condition_gamma(net, p)
        if not holds:
            offender = next(i for i in range(len(pop.routes)) if i not in witnesses)
            raise GammaConditionError(pop.name, offender)

    shared = _shared_roads(net)
    rng = np.random.default_rng(sampler.seed)
    pairs = list(_sample_pairs(net, sampler, rng))
    worst_case: dict[str, str] = {r.id: H_NOT_SHARED for r in net.roads}
    worst_exceptional = 0
    satisfied = True
    skipped = 0
    evaluated = 0
    for first, second in pairs:
        try:
            sm = segment_matrices(net, first, second, sampler.quadrature_nodes)
        except InfiniteCostError:
            skipped += 1
            continue
        evaluated += 1
        exceptional = 0
        for h, road in enumerate(net.roads):
            if road.id not in shared:
                continue
            case = _classify_h_case(sm.own[0][h], sm.own[1][h], sm.cross[0][h], sm.cross[1][h])
            if _SEVERITY.index(case) > _SEVERITY.index(worst_case[road.id]):
                worst_case[road.id] = case
            if case != H_STRICT:
                exceptional += 1
                if case == H_VIOLATION:
                    satisfied = False
        worst_exceptional = max(worst_exceptional, exceptional)
        if exceptional > 1:
            satisfied = False
    defpos_ok = all(
        case not in (H_VIOLATION,) for case in worst_case.values()
    )
    if evaluated == 0:
        verdict = "no finite sample pairs"
    elif satisfied:
        verdict = "at-most-one (sampled)"
    else:
        verdict = "hypothesis fails (sampled)"
    return UniquenessReport(
        defpos_ok=defpos_ok,
        road_cases=tuple((r.id, worst_case[r.id]) for r in net.roads),
        exceptional_roads=worst_exceptional,
        hypothesis_satisfied=satisfied and evaluated > 0,
        pairs_sampled=evaluated,
        pairs_skipped_infinite=skipped,
        verdict=verdict,
    )


def _shared_roads(net: Network) -> set[str]:
    used = [pop.road_ids() for pop in net.populations]
    return set.intersection(*used) if used else set()


def _sample_pairs(
    net: Network, sampler: HSampler, rng: np.random.Generator
) -> Iterable[tuple[Assignment, Assignment]]:
    def random_assignment() -> Assignment:
        return Assignment.make(
            [rng.dirichlet(np.ones(len(pop.routes))) for pop in net.populations],
            tolerance=1e-9,
        )

    if sampler.include_corners:
        counts = [len(pop.routes) for pop in net.populations]
        vertices = [
            Assignment.make(
                [
                    [1.0 if i == k else 0.0 for i in range(n)]
                    for n, k in zip(counts, combo)
                ]
            )
            for combo in itertools.product(*(range(n) for n in counts))
        ]
        for a, b in itertools.combinations(vertices, 2):
            yield a, b
        bary = uniform_assignment(net)
        for v in vertices:
            yield bary, v
    for _ in range(sampler.pairs):
        yield random_assignment(), random_assignment()


def check_pair_orthogonality(net: Network, first: Assignment, second: Assignment) -> tuple[float, ...]:
    """Per-population residual (d_shares)' (d_times) between two Nash points.

    Vanishes for genuine Nash equilibria, so a clearly nonzero value flags a
    false positive from the solver; also the duplicate detector for
    multistart results.  Both inputs must verify as Nash.
    """
    for label, theta in (("first", first), ("second", second)):
        if not is_nash(net, theta).holds:
            raise PreconditionError(f"{label} assignment is not a Nash equilibrium")
    eng = _engine(net)
    times_first = eng.route_times(first.shares)
    times_second = eng.route_times(second.shares)
    residuals = []
    for p in range(eng.pop_count):
        for times in (times_first[p], times_second[p]):
            if any(math.isinf(t) for t in times):
                raise PreconditionError("infinite route time in uniqueness residual")
        residuals.append(
            sum(
                (b - a) * (tb - ta)
                for a, b, ta, tb in zip(
                    first.shares[p], second.shares[p], times_first[p], times_second[p]
                )
            )
        )
    return tuple(residuals)


@dataclass(frozen=True)
class OracleResult:
    resolution: int
    equilibria: tuple[tuple[Assignment, float], ...]
    tolerance: float
    points_scanned: int


def _estimate_time_variation(net: Network, samples: int = 64, seed: int = 0) -> float:
    """Sampled route-time variation per unit share change.

    A high percentile of the finite sampled ratios, not the maximum:
    unbounded costs make the true Lipschitz constant infinite near their
    blow-up set, and an exploding estimate would drown the oracle in
    false hits.
    """
    eng = _engine(net)
    rng = np.random.default_rng(seed)
    ratios = [1.0]
    for _ in range(samples):
        base = [rng.dirichlet(np.ones(n)) for n in eng.route_counts]
        step = 1e-3
        for p in range(eng.pop_count):
            if eng.route_counts[p] < 2:
                continue
            moved = [b.copy() for b in base]
            i, j = rng.choice(eng.route_counts[p], size=2, replace=False)
            if moved[p][i] < step:
                continue
            moved[p][i] -= step
            moved[p][j] += step
            t0 = eng.route_times([b.tolist() for b in base])
            t1 = eng.route_times([m.tolist() for m in moved])
            for tp0, tp1 in zip(t0, t1):
                for a, b in zip(tp0, tp1):
                    if math.isinf(a) or math.isinf(b):
                        continue
                    ratios.append(abs(b - a) / step)
    ratios.sort()
    return ratios[int(0.75 * (len(ratios) - 1))]


def brute_force_equilibria(
    net: Network,
    resolution: int,
    tol: float | None = None,
    budget: int = 2_000_000,
    share_tol: float = 1e-12,
) -> OracleResult:
    """Enumerate product simplex grids and keep the Nash points.

    The Nash tolerance is max(tol, variation/resolution) with an empirically
    sampled variation bound, so coarse grids do not miss equilibria and fine
    grids do not sprout spurious ones.  Adjacent hits (within 2/resolution
    in the max norm) merge into one cluster represented by the hit with the
    smallest residual.  Raises `OracleBudgetError` when the grid would
    exceed `budget` points.
    """
    eng = _engine(net)
    counts = eng.route_counts
    sizes = [math.comb(resolution + n - 1, n - 1) for n in counts]
    total = math.prod(sizes)
    if total > budget:
        raise OracleBudgetError(
            f"grid of {total} points exceeds the budget of {budget}"
        )
    variation = _estimate_time_variation(net)
    tolerance = max(tol or 0.0, variation / resolution)

    grids = [np.array(list(simplex_grid(n, resolution)), dtype=float) for n in counts]
    hits = _scan_product_grid(net, eng, grids, tolerance, share_tol)
    clusters = _cluster_hits(hits, radius=2.0 / resolution)
    return OracleResult(
        resolution=resolution,
        equilibria=tuple(clusters),
        tolerance=tolerance,
        points_scanned=total,
    )


def _scan_product_grid(
    net: Network,
    eng,
    grids: list[np.ndarray],
    tolerance: float,
    share_tol: float,
) -> list[tuple[tuple[tuple[float, ...], ...], float]]:
    """Vectorized Nash scan: python loop over the outer populations' grid
    product, numpy over the last population's grid."""
    names = eng.names
    P = eng.pop_count
    last = P - 1
    K = grids[last].shape[0]
    road_ids = [r.id for r in net.roads]
    # Per-population road flows for every grid row.
    flow_tables = [grids[p] @ eng.inc_float[p].T for p in range(P)]  # (K_p, N)
    hits: list[tuple[tuple[tuple[float, ...], ...], float]] = []

    outer_indices = itertools.product(*(range(g.shape[0]) for g in grids[:last]))
    for outer in outer_indices:
        outer_shares = [grids[p][outer[p]] for p in range(last)]
        # Flows per road: scalars for outer populations, arrays for the last.
        flows_by_pop = [flow_tables[p][outer[p]] for p in range(last)]
        flows_last = flow_tables[last]  # (K, N)

        # Route times per population, arrays of shape (K,).
        times: list[list[np.ndarray]] = []
        for p in range(P):
            pop_times = []
            tau: dict[int, np.ndarray | float] = {}
            for h in eng.used_roads[p]:
                flow_point = {
                    names[q]: (flows_by_pop[q][h] if q < last else flows_last[:, h])
                    for q in range(P)
                }
                expr = net.populations[p].costs[road_ids[h]]
                tau[h] = eval_array(expr, flow_point)
            for roads in eng.route_roads[p]:
                t = np.zeros(K)
                for h in roads:
                    t = t + tau[h]
                pop_times.append(np.broadcast_to(np.asarray(t, dtype=float), (K,)))
            times.append(pop_times)

        ok = np.ones(K, dtype=bool)
        worst = np.zeros(K)
        for p in range(P):
            shares = (
                [np.full(K, s) for s in outer_shares[p]]
                if p < last
                else [grids[last][:, i] for i in range(eng.route_counts[p])]
            )
            ok, worst = _nash_mask(shares, times[p], tolerance, share_tol, ok, worst)
        for k in np.nonzero(ok)[0]:
            point = tuple(
                tuple(float(x) for x in (outer_shares[p] if p < last else grids[last][k]))
                for p in range(P)
            )
            hits.append((point, float(worst[k])))
    return hits


def _nash_mask(
    shares: list[np.ndarray],
    times: list[np.ndarray],
    tolerance: float,
    share_tol: float,
    ok: np.ndarray,
    worst: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized equilibrium + Nash test for one population."""
    K = ok.shape[0]
    relevant_max = np.full(K, -np.inf)
    relevant_min = np.full(K, np.inf)
    mean = np.zeros(K)
    for share, t in zip(shares, times):
        mask = share > share_tol
        with np.errstate(invalid="ignore"):
            relevant_max = np.where(mask, np.maximum(relevant_max, t), relevant_max)
            relevant_min = np.where(mask, np.minimum(relevant_min, t), relevant_min)
            mean = mean + np.where(mask, t, 0.0) * share
    finite_pair = np.isfinite(relevant_max) & np.isfinite(relevant_min)
    both_inf = np.isinf(relevant_max) & np.isinf(relevant_min) & (relevant_max > 0) & (relevant_min > 0)
    with np.errstate(invalid="ignore"):
        spread = np.where(finite_pair, relevant_max - relevant_min, np.inf)
    spread = np.where(both_inf, 0.0, spread)
    # scales must stay finite: an infinite bound would accept anything
    scale = np.where(finite_pair, np.maximum(1.0, np.abs(relevant_max)), 1.0)
    eq_ok = spread <= tolerance * scale
    worst = np.maximum(worst, np.where(np.isfinite(spread), spread, np.inf))
    nash_ok = np.ones(K, dtype=bool)
    mean_scale = np.where(np.isfinite(mean), np.maximum(1.0, np.abs(mean)), 1.0)
    for share, t in zip(shares, times):
        unused = share <= share_tol
        with np.errstate(invalid="ignore"):
            shortfall = np.where(unused & np.isfinite(t), mean - t, -np.inf)
        nash_ok &= shortfall <= tolerance * mean_scale
        worst = np.maximum(worst, np.where(shortfall > 0, shortfall, 0.0))
    return ok & eq_ok & nash_ok, worst


def _cluster_hits(
    hits: list[tuple[tuple[tuple[float, ...], ...], float]], radius: float
) -> list[tuple[Assignment, float]]:
    representatives: list[tuple[tuple[tuple[float, ...], ...], float]] = []
    hits = sorted(hits)
    parent = list(range(len(hits)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, (pa, _) in enumerate(hits):
        for j in range(i + 1, len(hits)):
            pb = hits[j][0]
            gap = max(
                abs(a - b) for va, vb in zip(pa, pb) for a, b in zip(va, vb)
            )
            if gap <= radius:
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(len(hits)):
        groups.setdefault(find(i), []).append(i)
    for members in groups.values():
        best = min(members, key=lambda k: (hits[k][1], hits[k][0]))
        representatives.append(hits[best])
    representatives.sort()
    return [
        (Assignment.make([list(v) for v in point], tolerance=1e-9), residual)
        for point, residual in representatives
    ]


@dataclass(frozen=True)
class BraessReport:
    population_names: tuple[str, ...]
    base_assignment: Assignment
    variant_assignment: Assignment
    base_times: tuple[float, ...]
    variant_times: tuple[float, ...]
    deltas: tuple[float, ...]
    paradox: tuple[bool, ...]


class CompareError(RuntimeError):
    """A scenario comparison failed because a solve did not verify."""


def compare_scenarios(
    base: Network,
    variant: Network,
    params: SolveParams = SolveParams(),
    paradox_tol: float = 1e-9,
) -> BraessReport:
    """Solve both networks and flag populations whose time strictly worsens.

    Populations are matched by name; both networks must solve to verified
    Nash equilibria from the barycenter (otherwise `CompareError`).  A
    population's paradox flag is set when its equilibrium travel time in the
    variant exceeds the base time by more than `paradox_tol`.
    """
    base_names = base.population_names()
    if set(base_names) != set(variant.population_names()):
        raise PreconditionError("base and variant must share population names")
    results = {}
    for label, net in (("base", base), ("variant", variant)):
        result = solve_fixed_point(net, uniform_assignment(net), params)
        if not result.success:
            raise CompareError(f"{label} network did not solve to a verified equilibrium")
        results[label] = result
    base_times = {
        name: t.as_float()
        for name, t in zip(base_names, results["base"].verified.common_times)
    }
    variant_times = {
        name: t.as_float()
        for name, t in zip(variant.population_names(), results["variant"].verified.common_times)
    }
    before = tuple(base_times[n] for n in base_names)
    after = tuple(variant_times[n] for n in base_names)
    deltas = tuple(a - b for a, b in zip(after, before))
    return BraessReport(
        population_names=base_names,
        base_assignment=results["base"].assignment,
        variant_assignment=results["variant"].assignment,
        base_times=before,
        variant_times=after,
        deltas=deltas,
        paradox=tuple(d > paradox_tol for d in deltas),
    )
