"""Built-in example networks used by the tests, docs, and CLI walkthroughs.

Each builder returns a fresh immutable `Network`.  The two `delta`
parameters model a fixed extra delay on one population's bypass highway;
regenerating a network file with a different delta is the supported way to
run delay scans (the file format itself stays closed).
"""

from __future__ import annotations

from pathlib import Path

from .costs import Affine, CongestionRational, Constant, NonMonotoneAffine
from .netcore import Junction, Network, PopulationSpec, Road, RouteSpec


def nonmonotone_pair() -> Network:
    """Two parallel roads, one population, one deliberately non-monotone cost.

    The slow road gets *faster* as it fills, which splits the equilibrium
    notions: both vertices equalize relevant times without being Nash, and
    the even split is Nash but not eps-Nash.
    """
    return Network(
        junctions=(Junction("o"), Junction("d")),
        roads=(Road("r1", "o", "d"), Road("r2", "o", "d")),
        populations=(
            PopulationSpec(
                name="commuters",
                origin="o",
                destination="d",
                routes=(RouteSpec(("r1",)), RouteSpec(("r2",))),
                costs={
                    "r1": Affine(1.0, {"commuters": 3.0}),
                    "r2": NonMonotoneAffine(3.0, {"commuters": -1.0}),
                },
            ),
        ),
    )


def delay_spillover(delta: float = 0.0) -> Network:
    """Two populations sharing one central road; `delta` delays the upper
    population's bypass highway and drags both equilibria with it."""
    shared = Affine(1.0, {"upper": 1.0, "lower": 1.0})
    return Network(
        junctions=(Junction("o1"), Junction("o2"), Junction("d1"), Junction("d2")),
        roads=(
            Road("r1", "o1", "o2"),
            Road("r2", "o1", "d1"),
            Road("r3", "o2", "d1"),
            Road("r4", "d1", "d2"),
            Road("r5", "o2", "d2"),
        ),
        populations=(
            PopulationSpec(
                name="upper",
                origin="o1",
                destination="d1",
                routes=(RouteSpec(("r1", "r3")), RouteSpec(("r2",))),
                costs={
                    "r1": Affine(1.0, {"upper": 1.0}),
                    "r2": Affine(3.0 + delta, {"upper": 1.0}),
                    "r3": shared,
                },
            ),
            PopulationSpec(
                name="lower",
                origin="o2",
                destination="d2",
                routes=(RouteSpec(("r3", "r4")), RouteSpec(("r5",))),
                costs={
                    "r3": shared,
                    "r4": Affine(1.0, {"lower": 1.0}),
                    "r5": Affine(3.0, {"lower": 1.0}),
                },
            ),
        ),
    )


def congestion_corridor(delta: float = 0.0) -> Network:
    """Two populations funneling through one congestible corridor road whose
    time blows up at unit load; `delta` delays the upper bypass."""
    corridor = CongestionRational({"upper": 1.0, "lower": 1.0}, 1.0)
    return Network(
        junctions=(
            Junction("o1"), Junction("o2"), Junction("m1"),
            Junction("m2"), Junction("d1"), Junction("d2"),
        ),
        roads=(
            Road("r1", "o1", "d1"),
            Road("r2", "o1", "m1"),
            Road("r3", "o2", "m1"),
            Road("r4", "o2", "d2"),
            Road("r5", "m1", "m2"),
            Road("r6", "m2", "d2"),
            Road("r7", "m2", "d1"),
        ),
        populations=(
            PopulationSpec(
                name="upper",
                origin="o1",
                destination="d1",
                routes=(RouteSpec(("r2", "r5", "r7")), RouteSpec(("r1",))),
                costs={
                    "r1": Affine(2.0 + delta, {"upper": 1.0}),
                    "r2": Constant(1.0),
                    "r5": corridor,
                    "r7": Constant(1.0),
                },
            ),
            PopulationSpec(
                name="lower",
                origin="o2",
                destination="d2",
                routes=(RouteSpec(("r3", "r5", "r6")), RouteSpec(("r4",))),
                costs={
                    "r3": Constant(1.0),
                    "r4": Affine(2.0, {"lower": 1.0}),
                    "r5": corridor,
                    "r6": Constant(1.0),
                },
            ),
        ),
    )


def _braess_populations(with_shortcut: bool) -> tuple[PopulationSpec, PopulationSpec]:
    route_list = [RouteSpec(("r2", "r3")), RouteSpec(("r1", "r4"))]
    if with_shortcut:
        route_list.append(RouteSpec(("r2", "r5", "r4")))
    truck_costs = {
        "r1": Constant(45.0),
        "r2": Affine(0.0, {"trucks": 40.0}),
        "r3": Constant(45.0),
        "r4": Affine(0.0, {"trucks": 40.0}),
    }
    car_costs = {
        "r1": Constant(30.0),
        "r2": Affine(0.0, {"cars": 20.0, "trucks": 8.0}),
        "r3": Constant(30.0),
        "r4": Affine(0.0, {"cars": 20.0, "trucks": 8.0}),
    }
    if with_shortcut:
        truck_costs["r5"] = Constant(0.0)
        car_costs["r5"] = Constant(0.0)
    return (
        PopulationSpec("trucks", "o", "d", tuple(route_list), truck_costs),
        PopulationSpec("cars", "o", "d", tuple(route_list), car_costs),
    )


def braess_base() -> Network:
    """Classic diamond shared by slow trucks and faster cars."""
    return Network(
        junctions=(Junction("o"), Junction("a"), Junction("b"), Junction("d")),
        roads=(
            Road("r1", "o", "b"),
            Road("r2", "o", "a"),
            Road("r3", "a", "d"),
            Road("r4", "b", "d"),
        ),
        populations=_braess_populations(with_shortcut=False),
    )


def braess_augmented() -> Network:
    """The diamond plus a free shortcut; every population's time worsens."""
    return Network(
        junctions=(Junction("o"), Junction("a"), Junction("b"), Junction("d")),
        roads=(
            Road("r1", "o", "b"),
            Road("r2", "o", "a"),
            Road("r3", "a", "d"),
            Road("r4", "b", "d"),
            Road("r5", "a", "b"),
        ),
        populations=_braess_populations(with_shortcut=True),
    )


def merge_base() -> Network:
    """Two origins merging into one destination through a shared final road."""
    merge_cost = Affine(1.0, {"west": 1.0, "east": 1.0})
    return Network(
        junctions=(Junction("o1"), Junction("o2"), Junction("m"), Junction("d")),
        roads=(
            Road("r1", "o1", "d"),
            Road("r2", "o1", "m"),
            Road("r3", "o2", "m"),
            Road("r4", "o2", "d"),
            Road("r5", "m", "d"),
        ),
        populations=(
            PopulationSpec(
                name="west",
                origin="o1",
                destination="d",
                routes=(RouteSpec(("r1",)), RouteSpec(("r2", "r5"))),
                costs={
                    "r1": Constant(4.0),
                    "r2": Affine(1.0, {"west": 1.0}),
                    "r5": merge_cost,
                },
            ),
            PopulationSpec(
                name="east",
                origin="o2",
                destination="d",
                routes=(RouteSpec(("r3", "r5")), RouteSpec(("r4",))),
                costs={
                    "r3": Affine(0.0, {"east": 1.0}),
                    "r4": Affine(0.0, {"east": 5.0}),
                    "r5": merge_cost,
                },
            ),
        ),
    )


def merge_linked() -> Network:
    """The merge network plus a connector meant to help the west population;
    it ends up hurting the east one instead."""
    merge_cost = Affine(1.0, {"west": 1.0, "east": 1.0})
    east_highway = Affine(0.0, {"west": 5.0, "east": 5.0})
    return Network(
        junctions=(Junction("o1"), Junction("o2"), Junction("m"), Junction("d")),
        roads=(
            Road("r1", "o1", "d"),
            Road("r2", "o1", "m"),
            Road("r3", "o2", "m"),
            Road("r4", "o2", "d"),
            Road("r5", "m", "d"),
            Road("r6", "o1", "o2"),
        ),
        populations=(
            PopulationSpec(
                name="west",
                origin="o1",
                destination="d",
                routes=(
                    RouteSpec(("r1",)),
                    RouteSpec(("r2", "r5")),
                    RouteSpec(("r6", "r4")),
                ),
                costs={
                    "r1": Constant(4.0),
                    "r2": Affine(1.0, {"west": 1.0}),
                    "r4": east_highway,
                    "r5": merge_cost,
                    "r6": Constant(1.0),
                },
            ),
            PopulationSpec(
                name="east",
                origin="o2",
                destination="d",
                routes=(RouteSpec(("r3", "r5")), RouteSpec(("r4",))),
                costs={
                    "r3": Affine(0.0, {"east": 1.0}),
                    "r4": east_highway,
                    "r5": merge_cost,
                },
            ),
        ),
    )


BUILDERS = {
    "nonmonotone_pair": nonmonotone_pair,
    "delay_spillover": delay_spillover,
    "congestion_corridor": congestion_corridor,
    "braess_base": braess_base,
    "braess_augmented": braess_augmented,
    "merge_base": merge_base,
    "merge_linked": merge_linked,
}


def write_fixture_files(directory: str | Path) -> list[Path]:
    """Write every fixture (deltas at 0) as a network JSON file."""
    from .fileio import save_network

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in sorted(BUILDERS.items()):
        path = out / f"{name}.json"
        save_network(builder(), path)
        written.append(path)
    return written
