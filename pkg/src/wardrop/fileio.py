"""Reading and writing networks, assignments, and reports.

Networks and assignments travel as JSON documents; +infinity renders as the
token "inf".  Structured output is deterministic (sorted keys, shortest
round-trip floats) so identical inputs produce byte-identical documents.
"""

from __future__ import annotations

import json
import math
from dataclasses import fields, is_dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .costs import ExtReal, cost_from_obj, cost_to_obj
from .equilibrium import Assignment
from .netcore import Junction, Network, PopulationSpec, Road, RouteSpec


class ParseError(ValueError):
    """Input document is unreadable or malformed; message says where."""


def _load_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def network_from_obj(obj: Mapping) -> Network:
    try:
        junctions = tuple(Junction(str(j)) for j in obj["junctions"])
        roads = tuple(
            Road(str(r["id"]), str(r["tail"]), str(r["head"])) for r in obj["roads"]
        )
        populations = []
        for pop in obj["populations"]:
            routes = tuple(
                RouteSpec(tuple(str(r) for r in route)) for route in pop["routes"]
            )
            costs = {
                str(rid): cost_from_obj(cobj)
                for rid, cobj in dict(pop.get("costs", {})).items()
            }
            populations.append(
                PopulationSpec(
                    name=str(pop["name"]),
                    origin=str(pop["origin"]),
                    destination=str(pop["destination"]),
                    routes=routes,
                    costs=costs,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed network document: {exc}") from exc
    return Network(junctions=junctions, roads=roads, populations=tuple(populations))


def network_to_obj(net: Network) -> dict:
    return {
        "junctions": [j.id for j in net.junctions],
        "roads": [{"id": r.id, "tail": r.tail, "head": r.head} for r in net.roads],
        "populations": [
            {
                "name": p.name,
                "origin": p.origin,
                "destination": p.destination,
                "routes": [list(route.road_ids) for route in p.routes],
                "costs": {rid: cost_to_obj(expr) for rid, expr in sorted(p.costs.items())},
            }
            for p in net.populations
        ],
    }


def load_network(path: str | Path) -> Network:
    return network_from_obj(_load_json(path))


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(dumps_structured(network_to_obj(net)) + "\n", encoding="utf-8")


def assignment_from_obj(obj: Mapping, net: Network) -> Assignment:
    """Shares keyed by population name, reordered to the network's order."""
    if not isinstance(obj, Mapping):
        raise ParseError("assignment document must map population names to share arrays")
    names = net.population_names()
    missing = [n for n in names if n not in obj]
    if missing:
        raise ParseError(f"assignment missing populations {missing}")
    extra = [n for n in obj if n not in names]
    if extra:
        raise ParseError(f"assignment names unknown populations {extra}")
    vectors = []
    for name, pop in zip(names, net.populations):
        vec = obj[name]
        if not isinstance(vec, Sequence) or len(vec) != len(pop.routes):
            raise ParseError(
                f"population {name!r} expects {len(pop.routes)} shares, got {vec!r}"
            )
        vectors.append([float(x) for x in vec])
    try:
        return Assignment.make(vectors)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def load_assignment(path: str | Path, net: Network) -> Assignment:
    return assignment_from_obj(_load_json(path), net)


def assignment_to_obj(theta: Assignment, net: Network) -> dict:
    return {
        name: list(vec) for name, vec in zip(net.population_names(), theta.shares)
    }


def jsonable(value: Any) -> Any:
    """Recursively convert package values into JSON-encodable data.

    ExtReal infinity becomes the token "inf"; dataclasses become dicts;
    numpy scalars and arrays become plain floats and lists.
    """
    if isinstance(value, ExtReal):
        return "inf" if value.is_infinite else value.finite
    if isinstance(value, float):
        return "inf" if math.isinf(value) else value
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return jsonable(value.tolist())
    if hasattr(value, "item") and not isinstance(value, (int, str, bool)):
        return value.item()
    return value


def dumps_structured(value: Any) -> str:
    """Deterministic JSON rendering (sorted keys, full float precision)."""
    return json.dumps(jsonable(value), sort_keys=True, indent=2)
