"""Network data model: junctions, one-way roads, routes, populations.

A network is a set of one-way roads between junctions plus one or more
traveler populations.  Each population has an origin, a destination, an
ordered list of routes (route order is authoritative: share vectors index
it), and a cost expression for every road its routes use.  Each
population's subnetwork must be a connected DAG with the origin as unique
source and the destination as unique sink.

All values here are immutable after construction and all operations are
pure, so concurrent readers need no coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .costs import CostExpr


class NetworkIndexError(KeyError):
    """An unknown junction id, road id, or population index was referenced."""


@dataclass(frozen=True, slots=True)
class Junction:
    id: str


@dataclass(frozen=True, slots=True)
class Road:
    """A one-way road from junction `tail` to junction `head`."""

    id: str
    tail: str
    head: str


@dataclass(frozen=True, slots=True)
class RouteSpec:
    """An ordered tuple of adjacent, pairwise-distinct road ids."""

    road_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "road_ids", tuple(self.road_ids))


@dataclass(frozen=True)
class PopulationSpec:
    """One traveler class: origin/destination, routes and per-road costs."""

    name: str
    origin: str
    destination: str
    routes: tuple[RouteSpec, ...]
    costs: Mapping[str, CostExpr] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "costs", dict(self.costs))

    def road_ids(self) -> set[str]:
        return {r for route in self.routes for r in route.road_ids}


@dataclass(frozen=True)
class Network:
    junctions: tuple[Junction, ...]
    roads: tuple[Road, ...]
    populations: tuple[PopulationSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "junctions", tuple(self.junctions))
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "populations", tuple(self.populations))

    def road_index(self) -> dict[str, int]:
        return {r.id: i for i, r in enumerate(self.roads)}

    def road_by_id(self, road_id: str) -> Road:
        for r in self.roads:
            if r.id == road_id:
                return r
        raise NetworkIndexError(road_id)

    def population_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.populations)

    def population(self, index: int) -> PopulationSpec:
        if not 0 <= index < len(self.populations):
            raise NetworkIndexError(f"population index {index}")
        return self.populations[index]


@dataclass(frozen=True, slots=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    message: str
    witnesses: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class ValidationReport:
    ok: bool
    findings: tuple[Finding, ...]

    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")


@dataclass(frozen=True, slots=True)
class IncidenceMatrix:
    """0/1 matrix, rows = network roads in order, columns = routes in order."""

    road_ids: tuple[str, ...]
    entries: np.ndarray  # shape (N, n), dtype int8; treat as read-only


def validate_network(net: Network) -> ValidationReport:
    """Check every structural invariant; problems become findings, not raises.

    Error-level rules: unique ids, known endpoints, no self-loops, route
    adjacency, distinct roads per route, origin/destination endpoints,
    per-population connected-DAG with unique source/sink, costs defined for
    every used road, cost coefficients naming known populations.  Degree
    anomalies in the union network are warnings.
    """
    findings: list[Finding] = []

    def err(code: str, message: str, *witnesses: str) -> None:
        findings.append(Finding("error", code, message, tuple(witnesses)))

    def warn(code: str, message: str, *witnesses: str) -> None:
        findings.append(Finding("warning", code, message, tuple(witnesses)))

    junction_ids = [j.id for j in net.junctions]
    seen: set[str] = set()
    for jid in junction_ids:
        if jid in seen:
            err("duplicate-id", f"junction id {jid!r} repeats", jid)
        seen.add(jid)
    junctions = set(junction_ids)

    road_ids: list[str] = []
    for road in net.roads:
        if road.id in road_ids:
            err("duplicate-id", f"road id {road.id!r} repeats", road.id)
        road_ids.append(road.id)
        for endpoint in (road.tail, road.head):
            if endpoint not in junctions:
                err(
                    "unknown-junction",
                    f"road {road.id!r} references unknown junction {endpoint!r}",
                    road.id,
                    endpoint,
                )
        if road.tail == road.head:
            err("self-loop", f"road {road.id!r} is a self-loop", road.id)
    roads_by_id = {r.id: r for r in net.roads}

    pop_names = [p.name for p in net.populations]
    for name in pop_names:
        if pop_names.count(name) > 1:
            err("duplicate-id", f"population name {name!r} repeats", name)

    for pop in net.populations:
        if pop.origin not in junctions:
            err("unknown-junction", f"population {pop.name!r} has unknown origin", pop.name, pop.origin)
        if pop.destination not in junctions:
            err("unknown-junction", f"population {pop.name!r} has unknown destination", pop.name, pop.destination)
        for ri, route in enumerate(pop.routes):
            label = f"{pop.name}:route{ri}"
            if not route.road_ids:
                err("route-empty", f"route {label} is empty", label)
                continue
            missing = [r for r in route.road_ids if r not in roads_by_id]
            if missing:
                err("unknown-road", f"route {label} uses unknown roads {missing}", label, *missing)
                continue
            if len(set(route.road_ids)) != len(route.road_ids):
                err("route-duplicate-road", f"route {label} repeats a road", label)
            for a, b in zip(route.road_ids, route.road_ids[1:]):
                if roads_by_id[a].head != roads_by_id[b].tail:
                    err(
                        "route-adjacency",
                        f"route {label}: head of {a!r} is not tail of {b!r}",
                        label, a, b,
                    )
            if roads_by_id[route.road_ids[0]].tail != pop.origin:
                err("route-endpoints", f"route {label} does not start at the origin", label)
            if roads_by_id[route.road_ids[-1]].head != pop.destination:
                err("route-endpoints", f"route {label} does not end at the destination", label)
        used = {r for route in pop.routes for r in route.road_ids if r in roads_by_id}
        for rid in sorted(used):
            if rid not in pop.costs:
                err("missing-cost", f"population {pop.name!r} has no cost for road {rid!r}", pop.name, rid)
        for rid in sorted(set(pop.costs) - used):
            warn("unused-cost", f"population {pop.name!r} defines a cost for unused road {rid!r}", pop.name, rid)
        for rid, expr in sorted(pop.costs.items()):
            unknown = sorted(expr.populations() - set(pop_names))
            if unknown:
                err(
                    "unknown-cost-population",
                    f"cost for road {rid!r} of {pop.name!r} references unknown populations {unknown}",
                    pop.name, rid, *unknown,
                )
        findings.extend(_check_subnetwork(pop, roads_by_id))

    # Union-network degree rule: every junction should have at least one
    # entering and one exiting road, except on the side where it serves as
    # some population's origin (entering) or destination (exiting).
    in_deg = {j: 0 for j in junctions}
    out_deg = {j: 0 for j in junctions}
    for road in net.roads:
        if road.tail in junctions:
            out_deg[road.tail] += 1
        if road.head in junctions:
            in_deg[road.head] += 1
    origins = {p.origin for p in net.populations}
    destinations = {p.destination for p in net.populations}
    for jid in sorted(junctions):
        if in_deg[jid] == 0 and out_deg[jid] == 0:
            warn("isolated-junction", f"junction {jid!r} touches no road", jid)
            continue
        if in_deg[jid] == 0 and jid not in origins:
            warn("junction-degree", f"junction {jid!r} has no entering road", jid)
        if out_deg[jid] == 0 and jid not in destinations:
            warn("junction-degree", f"junction {jid!r} has no exiting road", jid)

    ok = not any(f.severity == "error" for f in findings)
    return ValidationReport(ok=ok, findings=tuple(findings))


def _check_subnetwork(pop: PopulationSpec, roads_by_id: Mapping[str, Road]) -> list[Finding]:
    """Connected-DAG / unique-source / unique-sink checks for one population."""
    findings: list[Finding] = []
    used = [roads_by_id[r] for route in pop.routes for r in route.road_ids if r in roads_by_id]
    if not used:
        return findings
    edges = {(r.tail, r.head, r.id) for r in used}
    nodes = {r.tail for r in used} | {r.head for r in used}

    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for tail, head, _ in edges:
        adj[tail].append(head)

    # Cycle detection by depth-first search with colors.
    color = {n: 0 for n in nodes}  # 0 white, 1 gray, 2 black
    acyclic = True

    def visit(node: str) -> None:
        nonlocal acyclic
        stack = [(node, iter(adj[node]))]
        color[node] = 1
        while stack:
            current, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 1:
                    acyclic = False
                elif color[nxt] == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[current] = 2
                stack.pop()

    for n in sorted(nodes):
        if color[n] == 0:
            visit(n)
    if not acyclic:
        findings.append(
            Finding("error", "not-acyclic", f"subnetwork of {pop.name!r} contains a cycle", (pop.name,))
        )

    # Weak connectivity.
    undirected: dict[str, set[str]] = {n: set() for n in nodes}
    for tail, head, _ in edges:
        undirected[tail].add(head)
        undirected[head].add(tail)
    reached = {next(iter(sorted(nodes)))}
    frontier = list(reached)
    while frontier:
        n = frontier.pop()
        for m in undirected[n]:
            if m not in reached:
                reached.add(m)
                frontier.append(m)
    if reached != nodes:
        findings.append(
            Finding("error", "not-connected", f"subnetwork of {pop.name!r} is disconnected", (pop.name,))
        )

    sub_in = {n: 0 for n in nodes}
    sub_out = {n: 0 for n in nodes}
    for tail, head, _ in edges:
        sub_out[tail] += 1
        sub_in[head] += 1
    sources = sorted(n for n in nodes if sub_in[n] == 0)
    sinks = sorted(n for n in nodes if sub_out[n] == 0)
    if acyclic and sources != [pop.origin]:
        findings.append(
            Finding(
                "error", "source-sink",
                f"subnetwork of {pop.name!r} has sources {sources}, expected [{pop.origin!r}]",
                (pop.name, *sources),
            )
        )
    if acyclic and sinks != [pop.destination]:
        findings.append(
            Finding(
                "error", "source-sink",
                f"subnetwork of {pop.name!r} has sinks {sinks}, expected [{pop.destination!r}]",
                (pop.name, *sinks),
            )
        )
    return findings


def build_incidence(net: Network, population: int) -> IncidenceMatrix:
    """0/1 road-by-route incidence for one population.

    Row order is the network road order, column order the population route
    order, both deterministic.
    """
    pop = net.population(population)
    index = net.road_index()
    entries = np.zeros((len(net.roads), len(pop.routes)), dtype=np.int8)
    for col, route in enumerate(pop.routes):
        for rid in route.road_ids:
            try:
                entries[index[rid], col] = 1
            except KeyError:
                raise NetworkIndexError(rid) from None
    return IncidenceMatrix(road_ids=tuple(r.id for r in net.roads), entries=entries)


def check_condition_gamma(net: Network, population: int) -> tuple[bool, dict[int, str]]:
    """Does every route own a road used by no other route of this population?

    Returns (holds, witnesses) where witnesses maps route index to the first
    distinguishing road in route order; routes without one are absent.
    Holding implies the incidence matrix has full column rank.
    """
    pop = net.population(population)
    inc = build_incidence(net, population)
    row_of = {rid: i for i, rid in enumerate(inc.road_ids)}
    row_sums = inc.entries.sum(axis=1)
    witnesses: dict[int, str] = {}
    for col, route in enumerate(pop.routes):
        for rid in route.road_ids:
            if row_sums[row_of[rid]] == 1:
                witnesses[col] = rid
                break
    return len(witnesses) == len(pop.routes), witnesses


def enumerate_routes(net: Network, origin: str, destination: str) -> list[RouteSpec]:
    """All simple directed road paths from origin to destination.

    Deterministic: output is sorted lexicographically by road-id tuple, and
    repeated calls are bit-identical.  The subgraph between the endpoints is
    expected to be acyclic (junction-simple paths are enumerated, so cycles
    are never followed).
    """
    junctions = {j.id for j in net.junctions}
    if origin not in junctions:
        raise NetworkIndexError(origin)
    if destination not in junctions:
        raise NetworkIndexError(destination)
    if origin == destination:
        return []
    outgoing: dict[str, list[Road]] = {}
    for road in net.roads:
        outgoing.setdefault(road.tail, []).append(road)
    for roads in outgoing.values():
        roads.sort(key=lambda r: r.id)

    found: list[tuple[str, ...]] = []
    path: list[str] = []
    visited = {origin}

    def walk(node: str) -> None:
        if node == destination:
            found.append(tuple(path))
            return
        for road in outgoing.get(node, []):
            if road.head in visited:
                continue
            visited.add(road.head)
            path.append(road.id)
            walk(road.head)
            path.pop()
            visited.discard(road.head)

    walk(origin)
    found.sort()
    return [RouteSpec(p) for p in found]


def flows_on_roads(
    incidences: Sequence[IncidenceMatrix],
    shares: Sequence[Sequence[float]],
    tolerance: float = 1e-9,
) -> np.ndarray:
    """Per-road, per-population flows induced by route shares.

    flows[h, p] is the mass of population p on road h.  Each share vector
    must lie on its simplex within `tolerance`; flows are linear in the
    shares and land in [0, 1].
    """
    if hasattr(shares, "shares"):  # accept an Assignment as-is
        shares = shares.shares
    if len(incidences) != len(shares):
        raise ValueError(
            f"{len(incidences)} incidence matrices but {len(shares)} share vectors"
        )
    columns = []
    for inc, theta in zip(incidences, shares):
        vec = np.asarray(theta, dtype=float)
        if vec.shape != (inc.entries.shape[1],):
            raise ValueError(
                f"share vector of shape {vec.shape} does not match {inc.entries.shape[1]} routes"
            )
        if abs(vec.sum() - 1.0) > tolerance:
            raise ValueError(f"share vector sums to {vec.sum()}, not 1")
        if (vec < -tolerance).any():
            raise ValueError("share vector has a negative component")
        columns.append(inc.entries.astype(float) @ np.clip(vec, 0.0, None))
    return np.column_stack(columns)
