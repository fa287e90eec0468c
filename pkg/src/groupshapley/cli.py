"""Command-line interface.

Exit codes: 0 success, 2 incomplete table for a completeness-requiring
command, 3 infeasible constraints, 64 usage or schema error, 70 external
value process failure.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import subprocess
import sys
from pathlib import Path

from . import globalization
from .coalition import GroupPartition, mask_key
from .errors import ConfigError, GroupShapleyError, IncompleteTableError, UnsupportedPatternError
from .io import (
    ImportanceTable,
    SchemaError,
    bounds_table,
    dumps_utilities,
    read_constraints,
    read_utilities,
    write_constraints,
    write_utilities,
)
from .partial import build_globalization_constraints, shapley_minimum_norm
from .roy import SimConfig, load_scenario, roy_counterfactual_value_function
from .shapley import ValueFunction, cls_shapley, sampled_shapley

EXIT_OK = 0
EXIT_INCOMPLETE = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
EXIT_EXTERNAL = 70

log = logging.getLogger("groupshapley")


class UsageError(Exception):
    pass


class ExternalValueError(Exception):
    def __init__(self, key, detail):
        self.key = key
        super().__init__(f"external value command failed for coalition {key!r}: {detail}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def cmd_decompose(args) -> int:
    table = read_utilities(args.utilities)
    if not table.is_complete:
        missing = ", ".join("{" + mask_key(m) + "}" for m in sorted(table.missing))
        print(
            f"error: utility table is missing coalitions {missing}; "
            "use 'bounds' or 'smns' with a constraint file",
            file=sys.stderr,
        )
        return EXIT_INCOMPLETE
    _emit(ImportanceTable.from_result(cls_shapley(table)).render(args.format), args.out)
    return EXIT_OK


def _partial(args):
    table = read_utilities(args.utilities)
    constraints = read_constraints(args.constraints, table.n_groups)
    return table, shapley_minimum_norm(table, constraints)


def cmd_bounds(args) -> int:
    table, result = _partial(args)
    name = args.name or Path(args.utilities).stem
    _emit(bounds_table(name, table.partition.groups, result, args.format), args.out)
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_smns(args) -> int:
    table, result = _partial(args)
    if not result.feasible:
        print("infeasible: the constraints admit no completion of the missing utilities", file=sys.stderr)
        _emit("infeasible\n", args.out)
        return EXIT_INFEASIBLE
    _emit(ImportanceTable.from_result(result.smns).render(args.format), args.out)
    return EXIT_OK


def cmd_roy(args) -> int:
    scenario, cfg = load_scenario(args.scenario)
    draws = args.draws if args.draws is not None else cfg.get("n_draws", 1_000_000)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    config = SimConfig(int(draws), int(seed), tuple(cfg.get("quantiles", (0.1, 0.9))), n_jobs=args.jobs)
    vf = roy_counterfactual_value_function(scenario, config)
    table = vf.tabulate(scenario.partition)
    if args.emit_utilities:
        write_utilities(table, args.emit_utilities)
    _emit(ImportanceTable.from_result(cls_shapley(table)).render(args.format), args.out)
    return EXIT_OK


def external_value_function(command: str, n_groups: int, timeout: float | None = None) -> ValueFunction:
    """Value function backed by a process that reads a coalition key and prints a number."""
    argv = shlex.split(command)

    def g(mask):
        if mask == 0:
            return 0.0
        key = mask_key(mask)
        try:
            proc = subprocess.run(argv, input=key + "\n", capture_output=True, text=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExternalValueError(key, exc) from None
        if proc.returncode != 0:
            raise ExternalValueError(key, f"exit status {proc.returncode}: {proc.stderr.strip()}")
        try:
            return float(proc.stdout.strip())
        except ValueError:
            raise ExternalValueError(key, f"output {proc.stdout.strip()!r} is not a number") from None

    return ValueFunction(g, n_groups, pure=False)


def cmd_sample(args) -> int:
    if args.groups < 1:
        raise UsageError("--groups must be positive")
    if args.q < args.groups:
        raise UsageError(f"--q must be at least --groups ({args.groups})")
    labels = args.labels.split(",") if args.labels else [f"G{j}" for j in range(args.groups)]
    if len(labels) != args.groups:
        raise UsageError("--labels must list exactly --groups labels")
    partition = GroupPartition(tuple(labels))
    vf = external_value_function(args.value_cmd, args.groups)
    result = sampled_shapley(vf, partition, args.q, args.seed, exhaustive=args.exhaustive)
    text = ImportanceTable.from_result(result).render(args.format)
    text += f"# distinct coalitions evaluated: {result.n_evaluations}\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_constraints(args) -> int:
    table = read_utilities(args.utilities)
    box = None
    if args.gmin is not None or args.gmax is not None:
        box = (args.gmin, args.gmax)
    write_constraints(build_globalization_constraints(table, box, args.box_mode), args.out)
    return EXIT_OK


def cmd_example_export(args) -> int:
    """Write the globalization utilities and interpretation A/B constraint files."""
    root = Path(args.dir)
    (root / "utilities").mkdir(parents=True, exist_ok=True)
    (root / "constraints").mkdir(parents=True, exist_ok=True)
    for name in globalization.AGGREGATES:
        write_utilities(globalization.utility_table(name), root / "utilities" / f"{name}.json")
        for interp in ("A", "B"):
            write_constraints(globalization.constraints(name, interp), root / "constraints" / f"{name}.{interp}.json")
    return EXIT_OK


def cmd_example_report(args) -> int:
    _emit(globalization.deviations_report(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="groupshapley", description="Group Shapley decomposition of counterfactual changes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt(sp):
        sp.add_argument("--format", choices=("csv", "md"), default="md")
        sp.add_argument("--out", help="output file (default: stdout)")

    sp = sub.add_parser("decompose", help="exact decomposition of a complete utility file")
    sp.add_argument("--utilities", required=True)
    fmt(sp)
    sp.set_defaults(func=cmd_decompose)

    for name, func, help_ in (
        ("bounds", cmd_bounds, "Shapley lower/upper bounds and minimum-norm solution"),
        ("smns", cmd_smns, "minimum-norm Shapley values under constraints"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--utilities", required=True)
        sp.add_argument("--constraints", required=True)
        sp.add_argument("--name", help="aggregate label for the bounds table")
        fmt(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("roy", help="Roy-model counterfactual decomposition")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--emit-utilities")
    fmt(sp)
    sp.set_defaults(func=cmd_roy)

    sp = sub.add_parser("sample", help="sampled decomposition driven by an external value command")
    sp.add_argument("--groups", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--value-cmd", required=True)
    sp.add_argument("--labels")
    sp.add_argument("--exhaustive", action="store_true")
    fmt(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("globalization-constraints", help="build sign/box constraints for a 3-group table")
    sp.add_argument("--utilities", required=True)
    sp.add_argument("--box-mode", choices=("difference", "level"), default="difference")
    sp.add_argument("--gmin", type=float)
    sp.add_argument("--gmax", type=float)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_constraints)

    sp = sub.add_parser("example-export", help="write the globalization example input files")
    sp.add_argument("--dir", required=True)
    sp.set_defaults(func=cmd_example_export)

    sp = sub.add_parser("example-report", help="compare the globalization example with its reference values")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_example_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExternalValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except IncompleteTableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (SchemaError, ConfigError, UnsupportedPatternError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GroupShapleyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
