#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.equilibrium import EquilibriumResult, iterate_equilibrium
from screenbook.oracle import OracleComparison, OracleSolution, oracle_compare, oracle_solve
from screenbook.darkpool import DarkPoolReport, dp_equilibrium, dp_solve
from screenbook.book import BookSolution, RegionLabel
from screenbook.config import CheckSpec, ProblemConfig
from screenbook.benchmark import solve_benchmark
from screenbook.errors import ConfigError
from screenbook.model import ValidationReport, validate
from screenbook.screening import solve_cn
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple
import numpy as np
import logging
import math
import re

logger = logging.getLogger(__name__)

_QUANTITY = re.compile(r"^(?P<section>\w+)\.(?P<field>\w+)(?:\((?P<arg>[^)]*)\)|\[(?P<index>-?\d+)\])?$")


class RunContext:
    """Lazily computed results of one problem configuration."""

    def __init__(self, config: ProblemConfig):
        self.config = config

    @cached_property
    def validation(self) -> ValidationReport:
        """Return the model validation report."""
        return validate(self.config.spec, pi=self.config.pi)

    @cached_property
    def benchmark(self) -> BookSolution:
        """Return the book without crossing network."""
        return solve_benchmark(self.config.spec, self.config.solver.benchmark)

    @cached_property
    def cn(self) -> BookSolution:
        """Return the book at the configured price."""
        return solve_cn(self.config.spec, self.config.pi, self.config.solver)

    @cached_property
    def equilibrium(self) -> EquilibriumResult:
        """Return the price iteration."""
        return iterate_equilibrium(self.config.spec, self.config.equilibrium, verify=True)

    @cached_property
    def darkpool(self) -> DarkPoolReport:
        """Return the dark pool cross-check at the starting pool price."""
        return dp_solve(self._dark_params(), self.config.darkpool_pi0, self.config.solver)

    @cached_property
    def dp_equilibrium(self) -> EquilibriumResult:
        """Return the mid-quote iteration of the dark pool problem."""
        return dp_equilibrium(self._dark_params(), self.config.darkpool_pi0, self.config.equilibrium)

    @cached_property
    def oracle(self) -> OracleSolution:
        """Return the direct solution."""
        return oracle_solve(self.config.spec, self.config.pi, self.config.oracle)

    @cached_property
    def oracle_comparison(self) -> OracleComparison:
        """Return the comparison of the book with the direct solution."""
        return oracle_compare(self.cn, self.oracle)

    def _dark_params(self):
        if self.config.darkpool is None:
            raise ConfigError("the configuration has no [darkpool] table", path=self.config.path, key="darkpool")
        return self.config.darkpool


def _side_point(book: BookSolution, side: int, attr: str) -> float:
    if not book.side_states:
        return math.nan
    state = book.side_states[side]
    if attr == "touch":
        return state.touch_points[0] if state.touch_points else math.nan
    return math.nan if state.exit_point is None else state.exit_point


def _interval(book: BookSolution, label: RegionLabel, index: Optional[int], end: int) -> float:
    intervals = sorted(book.intervals_of(label))
    i = index or 0
    if not -len(intervals) <= i < len(intervals):
        return math.nan
    return intervals[i][end]


def _book_field(book: BookSolution, field: str, arg: Optional[float], index: Optional[int]) -> float:
    if arg is not None:
        values = {"gamma": book.gamma, "q": book.q, "v": book.v, "tau": book.tau, "u0": book.u0}
        if field not in values:
            raise KeyError(field)
        return float(np.interp(arg, book.grid, values[field]))
    lo0, hi0 = book.reserved_interval()
    simple: Dict[str, Callable[[], float]] = {
        "theta_lo0": lambda: lo0,
        "theta_hi0": lambda: hi0,
        "t_minus": lambda: book.spread.t_minus,
        "t_plus": lambda: book.spread.t_plus,
        "width": lambda: book.spread.width,
        "gamma_minus": lambda: book.plateau[0],
        "gamma_plus": lambda: book.plateau[1],
        "dealer_profit": lambda: book.dealer_profit,
        "touch_minus": lambda: _side_point(book, 0, "touch"),
        "touch_plus": lambda: _side_point(book, 1, "touch"),
        "exit_minus": lambda: _side_point(book, 0, "exit"),
        "exit_plus": lambda: _side_point(book, 1, "exit"),
        "excluded_lo": lambda: _interval(book, RegionLabel.EXCLUDED, index, 0),
        "excluded_hi": lambda: _interval(book, RegionLabel.EXCLUDED, index, 1),
        "matched_lo": lambda: _interval(book, RegionLabel.MATCHED, index, 0),
        "matched_hi": lambda: _interval(book, RegionLabel.MATCHED, index, 1),
        "excluded_count": lambda: len(book.intervals_of(RegionLabel.EXCLUDED)),
        "matched_count": lambda: len(book.intervals_of(RegionLabel.MATCHED)),
        "invariant_failures": lambda: len(book.check_invariants().failures),
    }
    return float(simple[field]())


def _equilibrium_field(result: EquilibriumResult, field: str, index: Optional[int]) -> float:
    if field == "iterations":
        return len(result.iterates)
    if field == "converged":
        return float(result.converged)
    if field in ("pi_star_minus", "pi_star_plus"):
        if result.pi_star is None:
            return math.nan
        return result.pi_star.minus if field.endswith("minus") else result.pi_star.plus
    if field == "residual":
        return math.nan if result.verification is None else result.verification.residual
    rows = result.to_rows()
    i = -1 if index is None else index
    if not -len(rows) <= i < len(rows):
        return math.nan
    return float(rows[i][field])


def _darkpool_field(report: DarkPoolReport, field: str) -> float:
    values = {
        "boundary_error": report.boundary_error,
        "slope_error": report.slope_error,
        "spread_error": report.spread_error,
        "paste_error": math.nan if report.paste_error is None else report.paste_error,
        "contained": float(report.contained),
        "strict_minus": float(report.strict[0]),
        "strict_plus": float(report.strict[1]),
        "t_minus": report.book.spread.t_minus,
        "t_plus": report.book.spread.t_plus,
        "closed_t_minus": report.closed_form_spread[0],
        "closed_t_plus": report.closed_form_spread[1],
        "benchmark_t_minus": report.benchmark.t_minus,
        "benchmark_t_plus": report.benchmark.t_plus,
    }
    return float(values[field])


def _oracle_field(ctx: RunContext, field: str) -> float:
    if field == "objective":
        return ctx.oracle.objective
    if field == "max_violation":
        return ctx.oracle.max_violation
    return float(getattr(ctx.oracle_comparison, field))


def parse_quantity(quantity: str) -> Tuple[str, str, Optional[float], Optional[int]]:
    """Split a quantity path into section, field, argument and index.

    Raises:
        ConfigError: malformed path
    """
    match = _QUANTITY.match(quantity.strip())
    if match is None:
        raise ConfigError(f"malformed quantity '{quantity}'", key="check.quantity")
    arg = match.group("arg")
    index = match.group("index")
    try:
        value = None if arg is None else float(arg)
    except ValueError:
        raise ConfigError(f"quantity argument '{arg}' is not a number", key="check.quantity") from None
    return match.group("section"), match.group("field"), value, None if index is None else int(index)


def extract(ctx: RunContext, quantity: str) -> float:
    """Evaluate a quantity path on a run.

    Args:
        ctx (RunContext): the run
        quantity (str): e.g. ``cn.t_plus``, ``cn.gamma(0.25)``, ``equilibrium.pi_plus[1]``

    Raises:
        ConfigError: unknown section or field

    Returns:
        float: the value
    """
    section, field, arg, index = parse_quantity(quantity)
    try:
        if section in ("benchmark", "cn"):
            return _book_field(getattr(ctx, section), field, arg, index)
        if section in ("equilibrium", "dp_equilibrium"):
            return _equilibrium_field(getattr(ctx, section), field, index)
        if section == "darkpool":
            return _darkpool_field(ctx.darkpool, field)
        if section == "oracle":
            return _oracle_field(ctx, field)
        if section == "validation":
            report = ctx.validation
            return float(report.ok) if field == "ok" else float(len(report.failures))
    except (KeyError, AttributeError):
        raise ConfigError(f"unknown field '{field}' in quantity '{quantity}'", key="check.quantity") from None
    raise ConfigError(f"unknown section '{section}' in quantity '{quantity}'", key="check.quantity")


@dataclass(frozen=True)
class CheckOutcome:
    """Achieved value of an acceptance anchor.

    Attrs:
        check (CheckSpec): the anchor
        actual (float): achieved value
    """

    check: CheckSpec
    actual: float

    @property
    def passed(self) -> bool:
        """Return True if the achieved value is within tolerance."""
        return bool(np.isfinite(self.actual)) and abs(self.actual - self.check.expected) <= self.check.tol

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "name": self.check.name,
            "quantity": self.check.quantity,
            "expected": self.check.expected,
            "actual": self.actual,
            "tol": self.check.tol,
            "passed": self.passed,
        }


def evaluate_checks(ctx: RunContext, checks: Optional[Tuple[CheckSpec, ...]] = None) -> List[CheckOutcome]:
    """Evaluate acceptance anchors, by default those of the configuration."""
    outcomes = []
    for check in ctx.config.checks if checks is None else checks:
        actual = extract(ctx, check.quantity)
        outcome = CheckOutcome(check, actual)
        logger.info(
            "%s: %s = %.6g (expected %.6g ± %.1e) %s",
            ctx.config.task.name,
            check.quantity,
            actual,
            check.expected,
            check.tol,
            "ok" if outcome.passed else "MISMATCH",
        )
        outcomes.append(outcome)
    return outcomes
