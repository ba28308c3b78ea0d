#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.config import ProblemConfig, bundled_configs, load_config, resolve_config
from screenbook.equilibrium import EquilibriumMode, write_equilibrium_csv
from screenbook.book import BookSolution, welfare_compare, write_book_csv, write_json
from screenbook.errors import ConfigError, ParameterError, ScreenbookError
from screenbook.checks import CheckOutcome, RunContext, evaluate_checks
from screenbook.darkpool import DarkPoolParams, dp_equilibrium, dp_solve
from screenbook.oracle import write_oracle_csv
from screenbook.families import PricePair
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import shutil
import math
import csv
import sys
import os

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MISMATCH = 4


@dataclass(frozen=True)
class RunManifest:
    """What a command was asked to do.

    Attrs:
        subcommand (str): the command
        config (Optional[str]): configuration file
        out_dir (str): output directory
        overrides (Dict[str, Any]): command line settings overriding the configuration
        deterministic (bool): runs are seedless and reproducible
    """

    subcommand: str
    config: Optional[str]
    out_dir: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    deterministic: bool = True


def define_and_parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="screenbook", description="Optimal dealer books facing a crossing network")
    parser.add_argument("--out", "-o", type=str, default=None, help="Output directory (default $SCREENBOOK_OUT or ./out)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress")
    parser.add_argument("--debug", action="store_true", help="Log solver internals")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("config", type=str, help="Configuration file or bundled configuration name")
        p.add_argument("--grid-n", type=int, default=None, help="Uniform nodes of the book grid")
        p.add_argument("--strict", action="store_true", help="Fail on a degenerate reserved set")
        return p

    with_config("validate", "Check the model assumptions")
    with_config("solve-benchmark", "Solve the book without crossing network")
    p = with_config("solve-cn", "Solve the book facing the crossing network")
    p.add_argument("--pi", type=float, nargs=2, metavar=("MINUS", "PLUS"), default=None, help="Crossing network prices")
    p = with_config("equilibrium", "Iterate the crossing network price to a fixed point")
    p.add_argument("--mode", choices=[m.value for m in EquilibriumMode], default=None, help="Price rule")
    p.add_argument("--pi0", type=float, nargs=2, metavar=("MINUS", "PLUS"), default=None, help="Starting price")
    p.add_argument("--max-iters", type=int, default=None, help="Solve budget")
    p.add_argument("--damping", type=float, default=None, help="Weight of the mapped price")
    p = sub.add_parser("darkpool", help="Portfolio liquidation with a dark pool")
    p.add_argument("--alpha", type=float, required=True, help="Inventory sensitivity")
    p.add_argument("--beta", type=float, required=True, help="Quadratic dealer cost")
    p.add_argument("--eps", type=float, default=0.0, help="Linear dealer cost")
    p.add_argument("--p", type=float, required=True, help="Execution probability")
    p.add_argument("--kappa", type=float, required=True, help="Access cost")
    p.add_argument("--pi0", type=float, default=0.0, help="Pool price")
    p.add_argument("--equilibrium", action="store_true", help="Iterate the mid-quote rule")
    p = with_config("oracle", "Solve by direct optimization and compare")
    p.add_argument("--n", type=int, default=None, help="Oracle grid size, odd")
    with_config("compare", "Compare the benchmark and crossing network books")
    p = sub.add_parser("reproduce", help="Run the reference cases and check their anchors")
    p.add_argument("configs", nargs="*", help="Configurations, all bundled ones by default")
    p.add_argument("--golden", type=str, default=None, help="Directory of golden CSV files")
    p.add_argument("--regenerate", action="store_true", help="Rewrite the golden files")
    sub.add_parser("list-configs", help="List the bundled configurations")
    return parser.parse_args(argv)


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args: argparse.Namespace) -> str:
    path = args.out or os.environ.get("SCREENBOOK_OUT") or "out"
    os.makedirs(path, exist_ok=True)
    return path


def _load(args: argparse.Namespace) -> ProblemConfig:
    config = load_config(resolve_config(args.config))
    bench = config.solver.benchmark
    if args.grid_n is not None or args.strict:
        bench = replace(bench, grid_n=args.grid_n or bench.grid_n, strict=args.strict or bench.strict)
        solver = replace(config.solver, benchmark=bench)
        config = replace(config, solver=solver, equilibrium=replace(config.equilibrium, solver=solver))
    return config


def write_book_artifacts(book: BookSolution, out: str) -> None:
    """Write book.csv, spread.json, partition.json and, for binding books, sides.json."""
    os.makedirs(out, exist_ok=True)
    write_book_csv(book, os.path.join(out, "book.csv"))
    write_json({**book.spread.to_dict(), "summary": book.summary()}, os.path.join(out, "spread.json"))
    write_json(book.partition.to_dict(), os.path.join(out, "partition.json"))
    if book.side_states:
        write_json([s.to_dict() for s in book.side_states], os.path.join(out, "sides.json"))


def _print_book(book: BookSolution) -> None:
    lo0, hi0 = book.reserved_interval()
    print(f"reserved set   [{lo0:.6f}, {hi0:.6f}]")
    print(f"spread         ({book.spread.t_minus:.6f}, {book.spread.t_plus:.6f})")
    print(f"multipliers    ({book.plateau[0]:.6f}, {book.plateau[1]:.6f})")
    print(f"dealer profit  {book.dealer_profit:.8f}")
    for lo, hi, label in book.partition.intervals:
        print(f"  {label.value:<13} [{lo:.6f}, {hi:.6f}]")


def _run_validate(ctx: RunContext, out: str) -> int:
    report = ctx.validation
    write_json(report.to_dict(), os.path.join(out, "validation.json"))
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_SOLVER


def _run_equilibrium(ctx: RunContext, out: str) -> None:
    result = ctx.equilibrium
    write_equilibrium_csv(result, os.path.join(out, "equilibrium.csv"))
    write_json(result.to_dict(), os.path.join(out, "equilibrium.json"))
    if result.book is not None:
        write_book_artifacts(result.book, out)


def _run_darkpool(ctx: RunContext, out: str, with_equilibrium: bool) -> None:
    report = ctx.darkpool
    write_book_artifacts(report.book, out)
    write_json(report.to_dict(), os.path.join(out, "darkpool.json"))
    if with_equilibrium:
        result = ctx.dp_equilibrium
        write_equilibrium_csv(result, os.path.join(out, "equilibrium.csv"))
        write_json(result.to_dict(), os.path.join(out, "equilibrium.json"))


def _run_oracle(ctx: RunContext, out: str) -> None:
    write_oracle_csv(ctx.oracle, os.path.join(out, "oracle.csv"))
    write_json(ctx.oracle_comparison.to_dict(), os.path.join(out, "compare.json"))


def _run_task(ctx: RunContext, out: str) -> None:
    runs = ctx.config.task.runs
    if "validate" in runs:
        os.makedirs(out, exist_ok=True)
        write_json(ctx.validation.to_dict(), os.path.join(out, "validation.json"))
    if "benchmark" in runs:
        write_book_artifacts(ctx.benchmark, os.path.join(out, "benchmark"))
    if "cn" in runs:
        write_book_artifacts(ctx.cn, os.path.join(out, "cn"))
    if "equilibrium" in runs:
        target = os.path.join(out, "equilibrium")
        os.makedirs(target, exist_ok=True)
        _run_equilibrium(ctx, target)
    if "darkpool" in runs or "dp_equilibrium" in runs:
        _run_darkpool(ctx, os.path.join(out, "darkpool"), "dp_equilibrium" in runs)
    if "oracle" in runs:
        target = os.path.join(out, "oracle")
        os.makedirs(target, exist_ok=True)
        _run_oracle(ctx, target)


def _read_csv(path: str) -> List[List[str]]:
    with open(path, newline="") as fp:
        return list(csv.reader(fp))


def _cells_match(a: str, b: str) -> bool:
    if a == b:
        return True
    try:
        x, y = float(a), float(b)
    except ValueError:
        return False
    if math.isnan(x) and math.isnan(y):
        return True
    return abs(x - y) <= 1e-9 * max(1.0, abs(x), abs(y))


def compare_golden(out: str, golden: str) -> List[str]:
    """Compare every CSV under ``out`` with its counterpart under ``golden``.

    Returns:
        List[str]: one message per mismatching or missing file
    """
    problems = []
    for root, _, files in os.walk(out):
        for name in sorted(files):
            if not name.endswith(".csv"):
                continue
            path = os.path.join(root, name)
            relative = os.path.relpath(path, out)
            reference = os.path.join(golden, relative)
            if not os.path.isfile(reference):
                problems.append(f"{relative}: no golden file")
                continue
            got, want = _read_csv(path), _read_csv(reference)
            if len(got) != len(want) or any(len(r) != len(s) for r, s in zip(got, want)):
                problems.append(f"{relative}: shape differs from golden file")
                continue
            for i, (r, s) in enumerate(zip(got, want)):
                bad = [j for j, (a, b) in enumerate(zip(r, s)) if not _cells_match(a, b)]
                if bad:
                    problems.append(f"{relative}: row {i} column {want[0][bad[0]]} differs ({r[bad[0]]} != {s[bad[0]]})")
                    break
    return problems


def _regenerate_golden(out: str, golden: str) -> None:
    for root, _, files in os.walk(out):
        for name in files:
            if name.endswith(".csv"):
                path = os.path.join(root, name)
                target = os.path.join(golden, os.path.relpath(path, out))
                os.makedirs(os.path.dirname(target), exist_ok=True)
                shutil.copyfile(path, target)


def _write_summary(out: str, rows: List[Dict[str, Any]], golden: Dict[str, List[str]]) -> None:
    lines = [f"{'config':<18} {'check':<30} {'expected':>12} {'actual':>12} {'tol':>9}  result"]
    for row in rows:
        lines.append(
            f"{row['config']:<18} {row['name']:<30} {row['expected']:>12.6g} {row['actual']:>12.6g} "
            f"{row['tol']:>9.1e}  {'PASS' if row['passed'] else 'FAIL'}"
        )
    for config, problems in golden.items():
        for problem in problems:
            lines.append(f"{config:<18} golden: {problem}  FAIL")
    passed = sum(r["passed"] for r in rows)
    lines.append(f"{passed}/{len(rows)} checks passed")
    with open(os.path.join(out, "summary.txt"), "w") as fp:
        fp.write("\n".join(lines) + "\n")
    write_json({"checks": rows, "golden": golden}, os.path.join(out, "summary.json"))
    print("\n".join(lines))


def reproduce(configs: Sequence[str], out: str, golden: Optional[str] = None, regenerate: bool = False) -> int:
    """Run reference configurations, write their artifacts and check their anchors.

    Args:
        configs (Sequence[str]): configuration paths or bundled names, all bundled ones if empty
        out (str): output directory
        golden (Optional[str], optional): golden CSV directory. Defaults to None.
        regenerate (bool, optional): rewrite the golden files instead of comparing. Defaults to False.

    Returns:
        int: 0 if everything matches, 4 otherwise
    """
    names = list(configs) or list(bundled_configs())
    rows: List[Dict[str, Any]] = []
    golden_problems: Dict[str, List[str]] = {}
    for name in names:
        config = load_config(resolve_config(name))
        target = os.path.join(out, config.task.name)
        ctx = RunContext(config)
        _run_task(ctx, target)
        outcomes: List[CheckOutcome] = evaluate_checks(ctx)
        rows += [{"config": config.task.name, **o.to_dict()} for o in outcomes]
        if golden is not None:
            reference = os.path.join(golden, config.task.name)
            if regenerate:
                _regenerate_golden(target, reference)
                logger.info("golden files of %s regenerated", config.task.name)
            else:
                problems = compare_golden(target, reference)
                if problems:
                    golden_problems[config.task.name] = problems
    _write_summary(out, rows, golden_problems)
    ok = all(r["passed"] for r in rows) and not golden_problems
    return EXIT_OK if ok else EXIT_MISMATCH


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute a command line.

    Args:
        argv (Optional[Sequence[str]], optional): arguments without the program name. Defaults to sys.argv.

    Returns:
        int: exit code, 0 success, 2 configuration error, 3 solver error, 4 acceptance mismatch
    """
    args = define_and_parse_args(argv)
    _configure_logging(args)
    try:
        return _dispatch(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScreenbookError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _dispatch(args: argparse.Namespace) -> int:
    command = args.command
    if command == "list-configs":
        for name, path in bundled_configs().items():
            config = load_config(path)
            print(f"{name:<20} {config.task.description}")
        return EXIT_OK
    out = _out_dir(args)
    if command == "reproduce":
        return reproduce(args.configs, out, args.golden, args.regenerate)
    if command == "darkpool":
        params = DarkPoolParams(args.alpha, args.beta, args.eps, args.p, args.kappa)
        report = dp_solve(params, args.pi0)
        write_book_artifacts(report.book, out)
        write_json(report.to_dict(), os.path.join(out, "darkpool.json"))
        _print_book(report.book)
        print(f"closed-form spread ({report.closed_form_spread[0]:.6f}, {report.closed_form_spread[1]:.6f})")
        print(f"benchmark spread   ({report.benchmark.t_minus:.6f}, {report.benchmark.t_plus:.6f})")
        if args.equilibrium:
            result = dp_equilibrium(params, args.pi0)
            write_equilibrium_csv(result, os.path.join(out, "equilibrium.csv"))
            write_json(result.to_dict(), os.path.join(out, "equilibrium.json"))
            print(f"mid-quote iteration {result.status.value} after {len(result.iterates)} solves")
        _write_manifest(command, None, out, vars(args))
        return EXIT_OK

    config = _load(args)
    overrides: Dict[str, Any] = {"grid_n": args.grid_n, "strict": args.strict}
    if command == "solve-cn" and args.pi is not None:
        config = replace(config, pi=PricePair(*args.pi))
        overrides["pi"] = args.pi
    if command == "equilibrium":
        eq = config.equilibrium
        eq = replace(
            eq,
            mode=EquilibriumMode(args.mode) if args.mode else eq.mode,
            pi0=PricePair(*args.pi0) if args.pi0 else eq.pi0,
            max_iters=args.max_iters or eq.max_iters,
            damping=args.damping or eq.damping,
        )
        config = replace(config, equilibrium=eq)
        overrides.update(mode=args.mode, pi0=args.pi0, max_iters=args.max_iters, damping=args.damping)
    if command == "oracle" and args.n is not None:
        config = replace(config, oracle=replace(config.oracle, n_grid=args.n))
        overrides["n"] = args.n
    ctx = RunContext(config)
    _write_manifest(command, config.path, out, overrides)

    if command == "validate":
        return _run_validate(ctx, out)
    if command == "solve-benchmark":
        write_book_artifacts(ctx.benchmark, out)
        _print_book(ctx.benchmark)
    elif command == "solve-cn":
        write_book_artifacts(ctx.cn, out)
        _print_book(ctx.cn)
    elif command == "equilibrium":
        _run_equilibrium(ctx, out)
        for row in ctx.equilibrium.to_rows():
            print(f"{row['iteration']:>3}  pi=({row['pi_minus']:.6f}, {row['pi_plus']:.6f})  change={row['change']:.3e}")
        print(f"status {ctx.equilibrium.status.value}")
    elif command == "oracle":
        _run_oracle(ctx, out)
        comparison = ctx.oracle_comparison
        print(f"sup |v - v_oracle| = {comparison.v_sup:.3e}, objective gap {comparison.objective_gap:.3e}")
        return EXIT_OK if comparison.passed else EXIT_MISMATCH
    elif command == "compare":
        report = welfare_compare(ctx.benchmark, ctx.cn)
        write_json(report.to_dict(), os.path.join(out, "compare.json"))
        print(f"trader welfare dominance: {report.all_hold}")
    return EXIT_OK


def _write_manifest(command: str, config: Optional[str], out: str, overrides: Dict[str, Any]) -> None:
    manifest = RunManifest(command, config, out, {k: v for k, v in overrides.items() if v is not None})
    write_json(asdict(manifest), os.path.join(out, "manifest.json"))


def main() -> None:
    """Console entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
