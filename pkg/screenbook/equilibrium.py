#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.numerics import FixedPointStatus, FixedPointTrace, iterate_fixed_point
from screenbook.book import BookSolution, RegionLabel, resample
from screenbook.screening import CnConfig, solve_cn
from screenbook.errors import ParameterError
from screenbook.families import PricePair
from screenbook.model import ModelSpec
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from enum import Enum
import numpy as np
import warnings
import logging
import csv

logger = logging.getLogger(__name__)


class EquilibriumMode(str, Enum):
    """Rule mapping a book to the next crossing network price."""

    BEST_BID_ASK = "best"
    MID_QUOTE = "mid"


class EquilibriumStatus(str, Enum):
    """How the price iteration stopped."""

    CONVERGED = "converged"
    CYCLE_DETECTED = "cycle"
    MAX_ITERS = "max_iters"


_STATUS = {
    FixedPointStatus.CONVERGED: EquilibriumStatus.CONVERGED,
    FixedPointStatus.CYCLE_DETECTED: EquilibriumStatus.CYCLE_DETECTED,
    FixedPointStatus.MAX_ITERS: EquilibriumStatus.MAX_ITERS,
}

EQUILIBRIUM_COLUMNS = [
    "iteration",
    "pi_minus",
    "pi_plus",
    "t_minus",
    "t_plus",
    "theta_lo0",
    "theta_hi0",
    "gamma_minus",
    "gamma_plus",
    "excluded_lo",
    "excluded_hi",
    "change",
    "dealer_profit",
]


@dataclass(frozen=True)
class EquilibriumConfig:
    """Controls of the price iteration.

    Attrs:
        mode (EquilibriumMode): best bid/ask or mid-quote map
        pi0 (PricePair): starting price
        sup_norm_tol (float): convergence tolerance on sup |v_i - v_{i+1}|
        max_iters (int): solve budget
        cycle_window (int): number of recent prices searched for a revisit, at least 4 to see a two cycle
        cycle_tol (float): revisit tolerance
        damping (float): weight λ of the mapped price, 1 means plain iteration
        solver (CnConfig): controls of every book solve
    """

    mode: EquilibriumMode = EquilibriumMode.BEST_BID_ASK
    pi0: PricePair = field(default_factory=PricePair)
    sup_norm_tol: float = 1e-5
    max_iters: int = 50
    cycle_window: int = 8
    cycle_tol: float = 1e-9
    damping: float = 1.0
    solver: CnConfig = field(default_factory=CnConfig)

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: non positive tolerance, empty budget or damping outside (0, 1]
        """
        if not self.sup_norm_tol > 0:
            raise ParameterError(f"sup_norm_tol must be positive, got {self.sup_norm_tol}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.cycle_window < 4:
            raise ParameterError(f"cycle_window must be >= 4, got {self.cycle_window}")
        if not 0 < self.damping <= 1:
            raise ParameterError(f"damping must lie in (0, 1], got {self.damping}")


@dataclass(frozen=True)
class EquilibriumIterate:
    """One row of the feedback loop.

    Attrs:
        pi (PricePair): price the book was solved at
        t_minus (float): resulting best bid
        t_plus (float): resulting best ask
        theta_lo0 (float): left end of the reserved set
        theta_hi0 (float): right end of the reserved set
        gamma_minus (float): multiplier next to the left end
        gamma_plus (float): multiplier next to the right end
        excluded (Optional[Tuple[float, float]]): excluded interval nearest to zero
        change (float): sup |v_i - v_{i-1}| on the common grid, inf for the first row
        dealer_profit (float): expected dealer profit
    """

    pi: PricePair
    t_minus: float
    t_plus: float
    theta_lo0: float
    theta_hi0: float
    gamma_minus: float
    gamma_plus: float
    excluded: Optional[Tuple[float, float]]
    change: float
    dealer_profit: float

    def to_row(self) -> Dict[str, Any]:
        """Return the CSV row of the iterate."""
        lo, hi = self.excluded if self.excluded is not None else (float("nan"), float("nan"))
        return {
            "pi_minus": self.pi.minus,
            "pi_plus": self.pi.plus,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "theta_lo0": self.theta_lo0,
            "theta_hi0": self.theta_hi0,
            "gamma_minus": self.gamma_minus,
            "gamma_plus": self.gamma_plus,
            "excluded_lo": lo,
            "excluded_hi": hi,
            "change": self.change,
            "dealer_profit": self.dealer_profit,
        }


@dataclass(frozen=True)
class FixedPointResidual:
    """Residual of one re-solve at a candidate equilibrium price.

    Attrs:
        pi (PricePair): candidate price
        image (PricePair): its image under the price map
        residual (float): largest component gap on the reacting sides
        tol (float): acceptance tolerance
    """

    pi: PricePair
    image: PricePair
    residual: float
    tol: float

    @property
    def verified(self) -> bool:
        """Return True if the residual is within tolerance."""
        return self.residual <= self.tol

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "pi": list(self.pi.as_tuple()),
            "image": list(self.image.as_tuple()),
            "residual": self.residual,
            "tol": self.tol,
            "verified": self.verified,
        }


@dataclass
class EquilibriumResult:
    """Outcome of the price iteration.

    Attrs:
        iterates (List[EquilibriumIterate]): rows in order
        status (EquilibriumStatus): how the iteration stopped
        pi_star (Optional[PricePair]): the converged price
        cycle (List[PricePair]): the revisited prices when a cycle was detected
        damped (bool): whether damping was used
        book (Optional[BookSolution]): the book of the last iterate
        verification (Optional[FixedPointResidual]): re-solve residual at pi_star
    """

    iterates: List[EquilibriumIterate] = field(default_factory=list)
    status: EquilibriumStatus = EquilibriumStatus.MAX_ITERS
    pi_star: Optional[PricePair] = None
    cycle: List[PricePair] = field(default_factory=list)
    damped: bool = False
    book: Optional[BookSolution] = None
    verification: Optional[FixedPointResidual] = None

    @property
    def converged(self) -> bool:
        """Return True if a fixed point was reached."""
        return self.status == EquilibriumStatus.CONVERGED

    def to_rows(self) -> List[Dict[str, Any]]:
        """Return the iteration history, one dict per iterate."""
        return [{"iteration": i, **it.to_row()} for i, it in enumerate(self.iterates)]

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "status": self.status.value,
            "pi_star": None if self.pi_star is None else list(self.pi_star.as_tuple()),
            "cycle": [list(p.as_tuple()) for p in self.cycle],
            "damped": self.damped,
            "iterations": len(self.iterates),
            "verification": None if self.verification is None else self.verification.to_dict(),
        }


def map_price(spec: ModelSpec, pi: PricePair, book: BookSolution, mode: EquilibriumMode) -> PricePair:
    """Send a book to the next crossing network price.

    Best bid/ask replaces the components the outside option reacts to by
    (t(0-), t(0+)) and keeps the others. Mid-quote sets both components to
    ½(t(0+) - t(0-)).

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): current price
        book (BookSolution): the book solved at pi
        mode (EquilibriumMode): price rule

    Returns:
        PricePair: the mapped price
    """
    spread = book.spread
    if mode == EquilibriumMode.MID_QUOTE:
        return PricePair.scalar(0.5 * (spread.t_plus - spread.t_minus))
    sides = spec.outside.price_sides
    return PricePair(
        spread.t_minus if "minus" in sides else pi.minus,
        spread.t_plus if "plus" in sides else pi.plus,
    )


def _price_distance(a: PricePair, b: PricePair) -> float:
    return max(abs(a.minus - b.minus), abs(a.plus - b.plus))


def _iterate_record(book: BookSolution, change: float) -> EquilibriumIterate:
    lo0, hi0 = book.reserved_interval()
    excluded = book.intervals_of(RegionLabel.EXCLUDED)
    nearest = min(excluded, key=lambda iv: min(abs(iv[0]), abs(iv[1]))) if excluded else None
    return EquilibriumIterate(
        pi=book.pi,
        t_minus=book.spread.t_minus,
        t_plus=book.spread.t_plus,
        theta_lo0=lo0,
        theta_hi0=hi0,
        gamma_minus=book.plateau[0],
        gamma_plus=book.plateau[1],
        excluded=nearest,
        change=change,
        dealer_profit=book.dealer_profit,
    )


def _warn_monotonicity(spec: ModelSpec) -> None:
    if not spec.outside.satisfies_monotonicity:
        warnings.warn(
            f"outside option '{spec.outside.kind}' is not monotone in the price, "
            "the price map need not be order preserving",
            UserWarning,
            stacklevel=3,
        )


def iterate_equilibrium(spec: ModelSpec, cfg: Optional[EquilibriumConfig] = None, verify: bool = False) -> EquilibriumResult:
    """Iterate π_{i+1} = map(book(π_i)) until the indirect utilities settle.

    Args:
        spec (ModelSpec): the problem
        cfg (Optional[EquilibriumConfig], optional): iteration controls. Defaults to None.
        verify (bool, optional): re-solve once at the limit. Defaults to False.

    Raises:
        ParameterError: an iterate is not an admissible price, with ``history`` attached
        SolverError: a book solve failed, with ``history`` attached

    Returns:
        EquilibriumResult: the iteration history and its outcome
    """
    cfg = cfg or EquilibriumConfig()
    _warn_monotonicity(spec)
    common = np.linspace(spec.theta.lo, spec.theta.hi, cfg.solver.benchmark.grid_n)
    lam = cfg.damping

    def step(pi: PricePair) -> Tuple[PricePair, Tuple[BookSolution, np.ndarray]]:
        book = solve_cn(spec, pi, cfg.solver)
        image = map_price(spec, pi, book, cfg.mode)
        if lam < 1:
            image = PricePair((1 - lam) * pi.minus + lam * image.minus, (1 - lam) * pi.plus + lam * image.plus)
        logger.info(
            "price (%.6g, %.6g) -> (%.6g, %.6g), reserved [%.6g, %.6g]",
            pi.minus,
            pi.plus,
            image.minus,
            image.plus,
            *book.reserved_interval(),
        )
        return image, (book, resample(book, common).v)

    trace: FixedPointTrace = iterate_fixed_point(
        step,
        cfg.pi0,
        change=lambda a, b: float(np.max(np.abs(a[1] - b[1]))),
        distance=_price_distance,
        tol=cfg.sup_norm_tol,
        max_iters=cfg.max_iters,
        cycle_window=cfg.cycle_window,
        cycle_tol=cfg.cycle_tol,
    )
    result = EquilibriumResult(
        iterates=[_iterate_record(s.payload[0], s.change) for s in trace.steps],
        status=_STATUS[trace.status],
        pi_star=trace.fixed_point,
        cycle=list(trace.cycle),
        damped=lam < 1,
        book=trace.steps[-1].payload[0] if trace.steps else None,
    )
    logger.info("equilibrium iteration %s after %d solves", result.status.value, len(result.iterates))
    if verify and result.pi_star is not None:
        result.verification = verify_fixed_point(spec, result.pi_star, cfg.mode, cfg)
    return result


def verify_fixed_point(
    spec: ModelSpec, pi: PricePair, mode: EquilibriumMode, cfg: Optional[EquilibriumConfig] = None
) -> FixedPointResidual:
    """Re-solve once at a candidate price and measure |π - map(π)|.

    The tolerance is ten times the iteration tolerance on v.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): candidate equilibrium price
        mode (EquilibriumMode): price rule
        cfg (Optional[EquilibriumConfig], optional): iteration controls. Defaults to None.

    Returns:
        FixedPointResidual: the residual record
    """
    cfg = cfg or EquilibriumConfig()
    book = solve_cn(spec, pi, cfg.solver)
    image = map_price(spec, pi, book, mode)
    residual = _price_distance(pi, image)
    logger.debug("fixed point residual at (%.6g, %.6g): %.3e", pi.minus, pi.plus, residual)
    return FixedPointResidual(pi, image, residual, 10 * cfg.sup_norm_tol)


@dataclass(frozen=True)
class MonotoneMapReport:
    """Evaluation of π+ ↦ t(0+; π+) on sorted prices.

    Attrs:
        prices (Tuple[PricePair, ...]): evaluated prices in order
        t_minus (Tuple[float, ...]): best bid at every price
        t_plus (Tuple[float, ...]): best ask at every price
        violations (Tuple[Tuple[int, float], ...]): (index, drop) where t(0+) decreases
        assumption_holds (bool): whether the family is monotone in the price
    """

    prices: Tuple[PricePair, ...]
    t_minus: Tuple[float, ...]
    t_plus: Tuple[float, ...]
    violations: Tuple[Tuple[int, float], ...]
    assumption_holds: bool

    @property
    def monotone(self) -> bool:
        """Return True if no order violation was found."""
        return not self.violations

    @property
    def informational(self) -> bool:
        """Return True when the report carries no guarantee because the family is not monotone."""
        return not self.assumption_holds

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "prices": [list(p.as_tuple()) for p in self.prices],
            "t_minus": list(self.t_minus),
            "t_plus": list(self.t_plus),
            "violations": [list(v) for v in self.violations],
            "assumption_holds": self.assumption_holds,
            "monotone": self.monotone,
        }


def check_monotone_map(
    spec: ModelSpec,
    pi_list: Sequence[Union[float, PricePair]],
    cfg: Optional[CnConfig] = None,
    tol: float = 1e-9,
) -> MonotoneMapReport:
    """Check that the best ask is nondecreasing in the crossing network ask.

    Args:
        spec (ModelSpec): the problem
        pi_list (Sequence[Union[float, PricePair]]): prices sorted by their ask, floats are (0, x)
        cfg (Optional[CnConfig], optional): solver controls. Defaults to None.
        tol (float, optional): allowed decrease. Defaults to 1e-9.

    Returns:
        MonotoneMapReport: the evaluated map and its order violations
    """
    prices = tuple(p if isinstance(p, PricePair) else PricePair(0.0, float(p)) for p in pi_list)
    books = [solve_cn(spec, p, cfg) for p in prices]
    t_minus = tuple(b.spread.t_minus for b in books)
    t_plus = tuple(b.spread.t_plus for b in books)
    violations = tuple(
        (i, float(t_plus[i] - t_plus[i + 1])) for i in range(len(t_plus) - 1) if t_plus[i + 1] < t_plus[i] - tol
    )
    assumption = spec.outside.satisfies_monotonicity
    if violations:
        logger.info("price map decreases at %d of %d steps", len(violations), len(t_plus) - 1)
    return MonotoneMapReport(prices, t_minus, t_plus, violations, assumption)


def write_equilibrium_csv(result: EquilibriumResult, path: str) -> None:
    """Write the iteration history, 12 significant digits.

    Args:
        result (EquilibriumResult): the iteration outcome
        path (str): target file
    """
    rows = result.to_rows()
    columns = EQUILIBRIUM_COLUMNS
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] if isinstance(row[c], int) else f"{float(row[c]):.12g}" for c in columns])
