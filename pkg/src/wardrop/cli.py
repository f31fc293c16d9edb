"""Command-line front end.

Exit codes are a total function of the outcome class:

* 0 - success / requested predicate holds
* 1 - validation errors, predicate fails, or uniqueness hypothesis fails
* 2 - unreadable or malformed input, dimension mismatch, bad flag value
* 3 - solver did not converge or its result failed verification
* 4 - non-monotone costs without --allow-nonmonotone
* 5 - oracle grid exceeds the enumeration budget

Structured output (--format structured) is deterministic JSON: identical
inputs and seed give byte-identical bytes.  Text output rounds to 9
significant digits; the structured form keeps full precision.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Sequence

from . import analysis, equilibrium, fileio
from .analysis import (
    CASE_LEGEND,
    CompareError,
    GammaConditionError,
    HSampler,
    OracleBudgetError,
)
from .costs import InfiniteCostError
from .equilibrium import (
    DimensionMismatchError,
    MultistartParams,
    NonMonotoneCostError,
    SolveParams,
)
from .fileio import ParseError
from .netcore import enumerate_routes, validate_network

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NONMONOTONE = 4
EXIT_BUDGET = 5


def _fmt(x) -> str:
    """9-significant-digit text rendering; infinities become the token inf."""
    if hasattr(x, "is_infinite"):
        if x.is_infinite:
            return "inf"
        x = x.finite
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return format(x, ".9g")


def _positive(kind: type, name: str):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return value

    return parse


def _omega(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("omega must lie in (0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wardrop",
        description="Multi-population Nash equilibria on road networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, solver: bool = False) -> None:
        p.add_argument("--format", choices=["text", "structured"], default="text")
        p.add_argument("--output", default=None, metavar="PATH",
                       help="write the report here instead of standard output")
        p.add_argument("--tol", type=_positive(float, "tol"), default=1e-9,
                       help="time-equality tolerance (relative)")
        p.add_argument("--seed", type=int, default=0)
        if solver:
            p.add_argument("--omega", type=_omega, default=0.5, help="damping in (0, 1]")
            p.add_argument("--max-iters", type=_positive(int, "max-iters"), default=100_000)
            p.add_argument("--residual-tol", type=_positive(float, "residual-tol"), default=1e-12)
            p.add_argument("--allow-nonmonotone", action="store_true")

    p_validate = sub.add_parser("validate", help="structural checks on a network file")
    p_validate.add_argument("network")
    common(p_validate)

    p_solve = sub.add_parser("solve", help="solve for a verified Nash equilibrium")
    p_solve.add_argument("network")
    common(p_solve, solver=True)

    p_verify = sub.add_parser("verify", help="check an assignment against a predicate")
    p_verify.add_argument("network")
    p_verify.add_argument("assignment")
    p_verify.add_argument(
        "--predicate", choices=["equilibrium", "nash", "eps-nash"], default="nash"
    )
    p_verify.add_argument("--eps", type=_positive(float, "eps"), default=None)
    common(p_verify)

    p_compare = sub.add_parser("compare", help="solve two networks and flag worsened populations")
    p_compare.add_argument("base")
    p_compare.add_argument("variant")
    common(p_compare, solver=True)

    p_oracle = sub.add_parser("oracle", help="brute-force grid search for Nash points")
    p_oracle.add_argument("network")
    p_oracle.add_argument("--grid", type=_positive(int, "grid"), default=200,
                          help="simplex grid resolution")
    p_oracle.add_argument("--budget", type=_positive(int, "budget"), default=2_000_000)
    common(p_oracle)

    p_unique = sub.add_parser("uniqueness", help="sampled at-most-one-equilibrium diagnostic")
    p_unique.add_argument("network")
    p_unique.add_argument("--pairs", type=_positive(int, "pairs"), default=100)
    p_unique.add_argument("--quadrature", type=_positive(int, "quadrature"), default=16)
    p_unique.add_argument("--starts", type=_positive(int, "starts"), default=4,
                          help="random multistart count for the residual check")
    common(p_unique)

    p_routes = sub.add_parser("routes", help="enumerate simple routes between two junctions")
    p_routes.add_argument("network")
    p_routes.add_argument("--origin", required=True)
    p_routes.add_argument("--destination", required=True)
    common(p_routes)

    return parser


def _emit(args, payload, text_lines: list[str]) -> None:
    if args.format == "structured":
        rendered = fileio.dumps_structured(payload)
    else:
        rendered = "\n".join(text_lines)
    if args.output:
        from pathlib import Path

        Path(args.output).write_text(rendered + "\n", encoding="utf-8")
    else:
        print(rendered)


def _load_net(path: str):
    net = fileio.load_network(path)
    report = validate_network(net)
    if not report.ok:
        raise _ValidationFailed(report)
    return net


class _ValidationFailed(Exception):
    def __init__(self, report):
        self.report = report
        super().__init__("network failed validation")


def _finding_lines(report) -> list[str]:
    return [
        f"{f.severity.upper()} {f.code}: {f.message} [{', '.join(f.witnesses)}]"
        for f in report.findings
    ]


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _ValidationFailed as exc:
        for line in _finding_lines(exc.report):
            print(line)
        return EXIT_FAIL
    except NonMonotoneCostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONMONOTONE
    except OracleBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except GammaConditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except CompareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _dispatch(args) -> int:
    if args.command == "validate":
        net = fileio.load_network(args.network)
        report = validate_network(net)
        _emit(args, report, _finding_lines(report) + [f"ok: {report.ok}"])
        return EXIT_OK if report.ok else EXIT_FAIL

    if args.command == "solve":
        net = _load_net(args.network)
        result = equilibrium.solve_fixed_point(net, None, _solve_params(args))
        lines = _solve_lines(net, result)
        _emit(args, result, lines)
        return EXIT_OK if result.success else EXIT_SOLVER

    if args.command == "verify":
        net = _load_net(args.network)
        theta = fileio.load_assignment(args.assignment, net)
        report = equilibrium.verify(net, theta, tol=args.tol, eps=args.eps)
        verdict = {
            "equilibrium": report.is_equilibrium,
            "nash": report.is_nash,
            "eps-nash": report.is_eps_nash,
        }[args.predicate]
        lines = [
            f"equilibrium: {report.is_equilibrium} (residual {_fmt(report.equilibrium_residual)})",
            f"nash: {report.is_nash} (residual {_fmt(report.nash_residual)})",
            f"eps-nash: {report.is_eps_nash} (eps {_fmt(report.eps_used)}, "
            f"residual {_fmt(report.eps_residual)})",
        ]
        for name, t in zip(net.population_names(), report.common_times):
            lines.append(f"population {name}: mean relevant time {_fmt(t)}")
        lines.append(f"{args.predicate}: {verdict}")
        _emit(args, report, lines)
        return EXIT_OK if verdict else EXIT_FAIL

    if args.command == "compare":
        base = _load_net(args.base)
        variant = _load_net(args.variant)
        report = analysis.compare_scenarios(base, variant, _solve_params(args))
        header = f"{'population':<16}{'before':>16}{'after':>16}{'delta':>16}  paradox"
        lines = [header, "-" * len(header)]
        for name, b, a, d, flag in zip(
            report.population_names, report.base_times, report.variant_times,
            report.deltas, report.paradox,
        ):
            lines.append(
                f"{name:<16}{_fmt(b):>16}{_fmt(a):>16}{_fmt(d):>16}  {'YES' if flag else 'no'}"
            )
        _emit(args, report, lines)
        return EXIT_OK

    if args.command == "oracle":
        net = _load_net(args.network)
        result = analysis.brute_force_equilibria(net, args.grid, budget=args.budget)
        lines = [
            f"grid resolution: {result.resolution}",
            f"points scanned: {result.points_scanned}",
            f"tolerance: {_fmt(result.tolerance)}",
            f"clusters: {len(result.equilibria)}",
        ]
        for theta, residual in result.equilibria:
            shares = "; ".join(
                f"{name} [" + ", ".join(_fmt(x) for x in vec) + "]"
                for name, vec in zip(net.population_names(), theta.shares)
            )
            lines.append(f"  {shares} (residual {_fmt(residual)})")
        _emit(args, result, lines)
        return EXIT_OK

    if args.command == "uniqueness":
        net = _load_net(args.network)
        sampler = HSampler(pairs=args.pairs, seed=args.seed, quadrature_nodes=args.quadrature)
        report = analysis.check_hypothesis_coupling(net, sampler)
        residuals = _multistart_residuals(net, args)
        report = _with_residuals(report, residuals)
        lines = [f"verdict: {report.verdict}"]
        lines.append(
            f"pairs sampled: {report.pairs_sampled} "
            f"(skipped for infinite costs: {report.pairs_skipped_infinite})"
        )
        lines.append(f"worst exceptional shared-road count: {report.exceptional_roads}")
        lines.append("per-road worst case:")
        for rid, case in report.road_cases:
            lines.append(f"  {rid}: {case} - {CASE_LEGEND[case]}")
        for pair_idx, res in enumerate(report.pair_residuals):
            rendered = ", ".join(_fmt(r) for r in res)
            lines.append(f"equilibrium-pair residuals {pair_idx}: [{rendered}]")
        _emit(args, report, lines)
        return EXIT_OK if report.hypothesis_satisfied else EXIT_FAIL

    if args.command == "routes":
        net = _load_net(args.network)
        found = enumerate_routes(net, args.origin, args.destination)
        lines = [" -> ".join(r.road_ids) for r in found] or ["(no routes)"]
        _emit(args, [list(r.road_ids) for r in found], lines)
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def _solve_params(args) -> SolveParams:
    return SolveParams(
        omega=args.omega,
        max_iters=args.max_iters,
        residual_tol=args.residual_tol,
        verify_tol=args.tol,
        allow_nonmonotone=args.allow_nonmonotone,
    )


def _solve_lines(net, result) -> list[str]:
    status = "verified-nash" if result.success else (
        "not-converged" if not result.converged else "verification-failed"
    )
    lines = [
        f"status: {status}",
        f"iterations: {result.iterations}",
        f"residual: {_fmt(result.residual)}",
    ]
    for name, vec, t in zip(
        net.population_names(), result.assignment.shares, result.verified.common_times
    ):
        shares = ", ".join(_fmt(x) for x in vec)
        lines.append(f"population {name}: shares [{shares}] time {_fmt(t)}")
    return lines


def _multistart_residuals(net, args) -> list[tuple[float, ...]]:
    """Duplicate-detector residuals across all pairs of multistart equilibria."""
    try:
        results = equilibrium.solve_multistart(
            net,
            MultistartParams(random_starts=args.starts, seed=args.seed),
        )
    except NonMonotoneCostError:
        return []
    residuals = []
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            try:
                residuals.append(
                    analysis.check_pair_orthogonality(
                        net, results[i].assignment, results[j].assignment
                    )
                )
            except (InfiniteCostError, equilibrium.PreconditionError):
                continue
    return residuals


def _with_residuals(report, residuals):
    from dataclasses import replace

    return replace(report, pair_residuals=tuple(tuple(r) for r in residuals))


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
