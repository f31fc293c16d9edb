"""Shared fixtures and independent oracle helpers for the test suite."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from wardrop import fixtures as nets
from wardrop.costs import (
    Affine,
    CongestionRational,
    Constant,
    CostExpr,
    MonomialTerm,
    Polynomial,
    Scale,
    Sum,
)
from wardrop.netcore import Junction, Network, PopulationSpec, Road, RouteSpec


@pytest.fixture(scope="session")
def delay_net() -> Network:
    return nets.delay_spillover()


@pytest.fixture(scope="session")
def corridor_net() -> Network:
    return nets.congestion_corridor()


@pytest.fixture(scope="session")
def braess_net() -> Network:
    return nets.braess_base()


@pytest.fixture(scope="session")
def braess5_net() -> Network:
    return nets.braess_augmented()


@pytest.fixture(scope="session")
def merge_net() -> Network:
    return nets.merge_base()


@pytest.fixture(scope="session")
def merge6_net() -> Network:
    return nets.merge_linked()


@pytest.fixture(scope="session")
def pathological_net() -> Network:
    return nets.nonmonotone_pair()


def rational_rank(matrix: np.ndarray) -> int:
    """Exact matrix rank by Gaussian elimination over the rationals."""
    rows = [[Fraction(int(x)) for x in row] for row in matrix]
    rank = 0
    n_cols = len(rows[0]) if rows else 0
    pivot_row = 0
    for col in range(n_cols):
        pivot = next(
            (r for r in range(pivot_row, len(rows)) if rows[r][col] != 0), None
        )
        if pivot is None:
            continue
        rows[pivot_row], rows[pivot] = rows[pivot], rows[pivot_row]
        lead = rows[pivot_row][col]
        for r in range(len(rows)):
            if r != pivot_row and rows[r][col] != 0:
                factor = rows[r][col] / lead
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[pivot_row])]
        pivot_row += 1
        rank += 1
    return rank


def random_monotone_expr(rng: np.random.Generator, pop_names: list[str], depth: int = 0) -> CostExpr:
    """A random cost expression from the monotone forms (class-C by design)."""
    kinds = ["constant", "affine", "poly", "congestion"]
    if depth < 2:
        kinds += ["sum", "scale"]
    kind = kinds[rng.integers(len(kinds))]
    if kind == "constant":
        return Constant(float(rng.uniform(0, 5)))
    if kind == "affine":
        return Affine(
            float(rng.uniform(0, 3)),
            {n: float(rng.uniform(0, 3)) for n in pop_names if rng.random() < 0.8},
        )
    if kind == "poly":
        terms = []
        for _ in range(rng.integers(1, 4)):
            exps = {n: int(rng.integers(0, 4)) for n in pop_names if rng.random() < 0.7}
            terms.append(MonomialTerm(float(rng.uniform(0, 2)), exps))
        return Polynomial(tuple(terms))
    if kind == "congestion":
        return CongestionRational(
            {n: float(rng.uniform(0, 1)) for n in pop_names},
            float(rng.uniform(2.5, 4.0)),  # capacity above any reachable load
        )
    if kind == "sum":
        return Sum(
            tuple(
                random_monotone_expr(rng, pop_names, depth + 1)
                for _ in range(rng.integers(2, 4))
            )
        )
    return Scale(float(rng.uniform(0, 2)), random_monotone_expr(rng, pop_names, depth + 1))


def random_cost_network(rng: np.random.Generator) -> Network:
    """The diamond topology with freshly randomized monotone class-C1 costs.

    Congestion capacities stay above the worst-case road load, so every
    evaluation is finite: convenient for derivative and segment tests.
    """
    names = ["first", "second"]
    routes = (RouteSpec(("r2", "r3")), RouteSpec(("r1", "r4")))
    pops = []
    for name in names:
        costs = {
            rid: random_monotone_expr(rng, names) for rid in ("r1", "r2", "r3", "r4")
        }
        pops.append(PopulationSpec(name, "o", "d", routes, costs))
    return Network(
        junctions=(Junction("o"), Junction("a"), Junction("b"), Junction("d")),
        roads=(
            Road("r1", "o", "b"),
            Road("r2", "o", "a"),
            Road("r3", "a", "d"),
            Road("r4", "b", "d"),
        ),
        populations=tuple(pops),
    )


def random_assignment(rng: np.random.Generator, net: Network):
    from wardrop.equilibrium import Assignment

    return Assignment.make(
        [rng.dirichlet(np.ones(len(pop.routes))) for pop in net.populations],
        tolerance=1e-9,
    )


def all_vertex_assignments(net: Network):
    from wardrop.equilibrium import vertex_assignment

    counts = [len(p.routes) for p in net.populations]
    for combo in itertools.product(*(range(n) for n in counts)):
        yield vertex_assignment(net, combo)
