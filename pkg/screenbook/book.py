#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.model import Check, ModelSpec, ValidationReport, matching_arrays
from screenbook.numerics import cumulative_integral, panel_integrals
from screenbook.errors import GridError, ParameterError
from screenbook.families import PricePair
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
from enum import Enum
import numpy as np
import logging
import json
import csv

logger = logging.getLogger(__name__)


class RegionLabel(str, Enum):
    """How the dealer treats a type."""

    RESERVED = "reserved"
    FULL_SERVICE = "full_service"
    MATCHED = "matched"
    EXCLUDED = "excluded"


Interval = Tuple[float, float, RegionLabel]

LABEL_DTYPE = "<U12"


def label_array(labels: Iterable[Any]) -> np.ndarray:
    """Return region labels as an array of their string values.

    numpy converts a str mixin member through ``str()``, so arrays hold the values.

    Args:
        labels (Iterable[Any]): members or values of RegionLabel

    Returns:
        np.ndarray: string array of label values
    """
    return np.array([RegionLabel(label).value for label in labels], dtype=LABEL_DTYPE)


def label_mask(labels: np.ndarray, label: RegionLabel) -> np.ndarray:
    """Return the nodes of a label array carrying ``label``."""
    return np.asarray(labels, dtype=LABEL_DTYPE) == RegionLabel(label).value


ENDPOINT_RTOL = 1e-12


def _same_endpoint(a: float, b: float) -> bool:
    return abs(a - b) <= ENDPOINT_RTOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class Partition:
    """Ordered labelled intervals tiling the type space.

    Attrs:
        intervals (Tuple[Interval, ...]): (lo, hi, label) sorted by lo, endpoints shared up to rounding
    """

    intervals: Tuple[Interval, ...]

    def __post_init__(self):
        """Check the tiling.

        Raises:
            ParameterError: empty partition, gap or overlap
        """
        if not self.intervals:
            raise ParameterError("a partition needs at least one interval")
        for (_, hi, _), (lo, _, _) in zip(self.intervals[:-1], self.intervals[1:]):
            if not _same_endpoint(hi, lo):
                raise ParameterError(f"partition intervals must share endpoints ({hi} != {lo})")
        for lo, hi, _ in self.intervals:
            if hi < lo:
                raise ParameterError(f"partition interval [{lo}, {hi}] is reversed")

    @classmethod
    def from_pieces(cls, pieces: Iterable[Interval]) -> "Partition":
        """Build a partition merging adjacent pieces with the same label.

        Each start is snapped to the end of the previous piece when both agree up to rounding.

        Args:
            pieces (Iterable[Interval]): intervals in increasing order

        Returns:
            Partition: the merged partition
        """
        pieces = list(pieces)
        proper = [p for p in pieces if p[1] > p[0]] or pieces[:1]
        merged: List[Interval] = []
        for lo, hi, label in proper:
            if merged and _same_endpoint(merged[-1][1], lo):
                lo = merged[-1][1]
            if merged and merged[-1][2] == label:
                merged[-1] = (merged[-1][0], hi, label)
            else:
                merged.append((lo, hi, label))
        return cls(tuple(merged))

    def of(self, label: RegionLabel) -> List[Tuple[float, float]]:
        """Return the intervals carrying a label."""
        return [(lo, hi) for lo, hi, lab in self.intervals if lab == label]

    def label_at(self, theta: float) -> RegionLabel:
        """Return the label of a type, shared endpoints going to the interval nearer zero."""
        candidates = [iv for iv in self.intervals if iv[0] <= theta <= iv[1]]
        if not candidates:
            raise ParameterError(f"theta={theta} outside the partition")
        return min(candidates, key=lambda iv: min(abs(iv[0]), abs(iv[1]), 0 if iv[0] <= 0 <= iv[1] else np.inf))[2]

    def to_dict(self) -> List[Dict[str, Any]]:
        """Return a JSON serialisable view."""
        return [{"lo": lo, "hi": hi, "region": label.value} for lo, hi, label in self.intervals]


@dataclass(frozen=True)
class SpreadReport:
    """Marginal prices at the edges of the reserved set.

    Attrs:
        t_minus (float): best bid t(0-)
        t_plus (float): best ask t(0+)
        width (float): |t_plus - t_minus|
        theta_lo0 (float): left end of the reserved set
        theta_hi0 (float): right end of the reserved set
        degenerate (bool): the reserved set is a point or touches the type boundary
    """

    t_minus: float
    t_plus: float
    width: float
    theta_lo0: float
    theta_hi0: float
    degenerate: bool = False

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "width": self.width,
            "theta_lo0": self.theta_lo0,
            "theta_hi0": self.theta_hi0,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class SupportLine:
    """Line v(a) + slope (θ - a) supporting the indirect utility at a."""

    anchor: float
    value: float
    slope: float

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        """Evaluate the line."""
        return self.value + self.slope * (np.asarray(theta, dtype=float) - self.anchor)


@dataclass(frozen=True)
class Segment:
    """A piece of a side of the book, described from its inner end outward.

    Attrs:
        start (float): end nearer the reserved set
        end (float): outer end
        label (RegionLabel): region
        gamma (Optional[float]): constant multiplier of a full service piece
        anchor_value (float): v at ``start`` for full service pieces
        lines (Tuple[SupportLine, ...]): support lines of an excluded piece
        direction (int): +1 on the positive side, -1 on the negative side
    """

    start: float
    end: float
    label: RegionLabel
    gamma: Optional[float] = None
    anchor_value: float = 0.0
    lines: Tuple[SupportLine, ...] = ()
    direction: int = 1

    @property
    def lo(self) -> float:
        """Return the left end."""
        return min(self.start, self.end)

    @property
    def hi(self) -> float:
        """Return the right end."""
        return max(self.start, self.end)


@dataclass(eq=False)
class BookSolution:
    """A solved book sampled on a type grid.

    Attrs:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        grid (np.ndarray): sorted types
        q (np.ndarray): quantities
        tau (np.ndarray): transfers
        v (np.ndarray): indirect utility
        gamma (np.ndarray): multiplier path
        u0 (np.ndarray): outside option on the grid
        labels (np.ndarray): region of every node
        partition (Partition): region intervals
        spread (Optional[SpreadReport]): marginal prices at the reserved set
        dealer_profit (float): expected dealer profit
        per_type_profit (np.ndarray): dealer profit of every node
        plateau (Tuple[float, float]): constant multiplier level next to each end of the reserved set
        gamma_reporting_only (np.ndarray): nodes whose multiplier value carries no contract
        flags (Dict[str, Any]): solver flags (ironed, degenerate, ...)
        side_states (Tuple[Any, ...]): per side solver state, if any
    """

    spec: ModelSpec
    pi: PricePair
    grid: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    u0: np.ndarray
    labels: np.ndarray
    partition: Partition
    spread: Optional[SpreadReport] = None
    dealer_profit: float = 0.0
    per_type_profit: np.ndarray = field(default_factory=lambda: np.zeros(0))
    plateau: Tuple[float, float] = (0.0, 1.0)
    gamma_reporting_only: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    flags: Dict[str, Any] = field(default_factory=dict)
    side_states: Tuple[Any, ...] = ()

    def reserved_interval(self) -> Tuple[float, float]:
        """Return [θ̲0, θ̄0], the reserved interval containing zero."""
        intervals = self.partition.of(RegionLabel.RESERVED)
        if not intervals:
            raise ParameterError("book has no reserved interval")
        return min(intervals, key=lambda iv: 0.0 if iv[0] <= 0 <= iv[1] else min(abs(iv[0]), abs(iv[1])))

    def intervals_of(self, label: RegionLabel) -> List[Tuple[float, float]]:
        """Return the intervals carrying a label."""
        return self.partition.of(label)

    def mask(self, label: RegionLabel) -> np.ndarray:
        """Return the grid nodes carrying a label."""
        return label_mask(self.labels, label)

    def welfare(self) -> np.ndarray:
        """Return the utility each type obtains, u0 for excluded types."""
        return np.where(self.mask(RegionLabel.EXCLUDED), self.u0, self.v)

    def check_invariants(self, tol: float = 1e-7) -> "InvariantReport":
        """Check the structural properties every solved book must have.

        Args:
            tol (float, optional): relative tolerance. Defaults to 1e-7.

        Returns:
            InvariantReport: one check per property
        """
        return check_invariants(self, tol)

    def summary(self) -> Dict[str, Any]:
        """Return the headline numbers of the book."""
        lo0, hi0 = self.reserved_interval()
        return {
            "pi": list(self.pi.as_tuple()),
            "theta_lo0": lo0,
            "theta_hi0": hi0,
            "gamma_minus": self.plateau[0],
            "gamma_plus": self.plateau[1],
            "dealer_profit": self.dealer_profit,
            "spread": None if self.spread is None else self.spread.to_dict(),
            "flags": {k: v for k, v in self.flags.items() if isinstance(v, (bool, int, float, str))},
        }


class InvariantReport(ValidationReport):
    """Outcome of the structural checks of a book."""


def build_grid(lo: float, hi: float, n: int, mandatory: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid on [lo, hi] merged with mandatory nodes.

    Uniform nodes closer than 1e-9 of the width to a mandatory node are dropped.

    Args:
        lo (float): left end
        hi (float): right end
        n (int): number of uniform nodes
        mandatory (Sequence[float], optional): nodes that must be present. Defaults to ().

    Raises:
        ParameterError: n < 3

    Returns:
        np.ndarray: sorted unique nodes
    """
    if n < 3:
        raise ParameterError(f"grid needs at least 3 nodes, got {n}")
    points = np.unique([float(x) for x in mandatory if lo <= x <= hi] + [lo, hi, 0.0] * (lo <= 0 <= hi))
    points = points[(points >= lo) & (points <= hi)]
    base = np.linspace(lo, hi, n)
    if points.size:
        gap = np.min(np.abs(base[:, None] - points[None, :]), axis=1)
        base = base[gap > 1e-9 * (hi - lo)]
    return np.union1d(base, points)


def region_profit(
    spec: ModelSpec,
    start: float,
    end: float,
    gamma: float,
    v_start: float,
    panels: int = 32,
    order: int = 8,
) -> float:
    """Dealer profit of a full service piece with quantities l(θ, Γ).

    ∫ v f is taken by parts, ∫ v f = [v F] - ∫ ψ1(q) F, so the profit is a single
    integral anchored at v(start) = v_start.

    Args:
        spec (ModelSpec): the problem
        start (float): inner end, where v is known
        end (float): outer end
        gamma (float): multiplier level
        v_start (float): v at start
        panels (int, optional): Gauss-Legendre panels. Defaults to 32.
        order (int, optional): nodes per panel. Defaults to 8.

    Returns:
        float: ∫ (τ - C(q)) f over the piece
    """
    if start == end:
        return 0.0
    lo, hi = min(start, end), max(start, end)
    edges = np.union1d(
        np.linspace(lo, hi, panels + 1),
        [b for b in spec.density.breakpoints if lo < b < hi],
    )
    F_lo, F_hi = float(spec.density.cdf(lo)), float(spec.density.cdf(hi))
    anchored_low = start <= end

    def integrand(s: np.ndarray) -> np.ndarray:
        q = spec.virtual_quantity_array(s, gamma)
        slope = spec.prefs.psi1(q)
        F = spec.density.cdf(s)
        surplus = (s * slope - spec.c_tilde(q)) * spec.density.pdf(s)
        weight = slope * (F_hi - F) if anchored_low else -slope * (F - F_lo)
        return surplus - weight

    return float(np.sum(panel_integrals(integrand, edges, order))) - v_start * (F_hi - F_lo)


def support_lines_value(lines: Sequence[SupportLine], theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate the upper envelope of support lines.

    Args:
        lines (Sequence[SupportLine]): the lines
        theta (np.ndarray): types

    Returns:
        Tuple[np.ndarray, np.ndarray]: envelope values and the slope of the active line
    """
    values = np.stack([line(theta) for line in lines])
    active = np.argmax(values, axis=0)
    slopes = np.array([line.slope for line in lines])[active]
    return values[active, np.arange(theta.size)], slopes


def fill_segments(
    spec: ModelSpec, pi: PricePair, grid: np.ndarray, segments: Sequence[Segment], order: int = 8
) -> Dict[str, np.ndarray]:
    """Sample a book described by segments on a grid.

    Segments must be listed inner first on each side: a node shared by two
    segments takes the values of the first one listed.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        grid (np.ndarray): sorted types
        segments (Sequence[Segment]): the pieces of the book
        order (int, optional): Gauss-Legendre nodes per grid panel. Defaults to 8.

    Raises:
        ParameterError: some node is not covered

    Returns:
        Dict[str, np.ndarray]: q, tau, v, gamma, profit, labels and reporting-only mask
    """
    n = grid.size
    out = {
        "q": np.zeros(n),
        "v": np.zeros(n),
        "tau": np.zeros(n),
        "gamma": np.zeros(n),
        "profit": np.zeros(n),
        "labels": np.full(n, RegionLabel.RESERVED.value, dtype=LABEL_DTYPE),
        "reporting_only": np.zeros(n, dtype=bool),
    }
    assigned = np.zeros(n, dtype=bool)
    psi1 = spec.prefs.psi1
    for seg in segments:
        mask = (grid >= seg.lo) & (grid <= seg.hi) & ~assigned
        if not np.any(mask):
            continue
        index = np.flatnonzero(mask)
        theta = grid[index]
        assigned[index] = True
        out["labels"][index] = RegionLabel(seg.label).value
        if seg.label == RegionLabel.RESERVED:
            out["gamma"][index] = np.clip(spec.reserved_multiplier(theta), 0.0, 1.0)
            continue
        if seg.label == RegionLabel.FULL_SERVICE:
            outward = np.argsort(np.abs(theta - seg.start), kind="stable")
            nodes = theta[outward]
            gamma = float(seg.gamma)
            running = cumulative_integral(
                lambda s: psi1(spec.virtual_quantity_array(s, gamma)),
                np.concatenate(([seg.start], nodes)),
                order,
            )
            v = np.empty_like(nodes)
            v[:] = seg.anchor_value + running[1:]
            q = spec.virtual_quantity_array(nodes, gamma)
            sel = index[outward]
            out["v"][sel] = v
            out["q"][sel] = q
            out["tau"][sel] = spec.utility(nodes, q) - v
            out["gamma"][sel] = gamma
            out["profit"][sel] = out["tau"][sel] - spec.cost.c(q)
        elif seg.label == RegionLabel.MATCHED:
            q_c, tau_c, margin = matching_arrays(spec, pi, theta, seg.direction)
            out["v"][index] = spec.u0(theta, pi)
            out["q"][index] = q_c
            out["tau"][index] = tau_c
            out["profit"][index] = margin
            f = spec.density.pdf(theta)
            out["gamma"][index] = spec.density.cdf(theta) + theta * f - f * spec.k(q_c)
        else:
            v, slopes = support_lines_value(seg.lines, theta)
            q = spec.psi1_inverse(slopes)
            out["v"][index] = v
            out["q"][index] = q
            out["tau"][index] = spec.utility(theta, q) - v
            out["gamma"][index] = spec.density.cdf(theta)
            out["reporting_only"][index] = True
    if not np.all(assigned):
        raise ParameterError(f"segments leave theta={grid[~assigned][0]} uncovered")
    return out


def assemble_book(
    spec: ModelSpec,
    pi: PricePair,
    segments: Sequence[Segment],
    grid_n: int,
    plateau: Tuple[float, float],
    dealer_profit: float,
    flags: Optional[Dict[str, Any]] = None,
    side_states: Tuple[Any, ...] = (),
    extra_points: Sequence[float] = (),
    order: int = 8,
) -> BookSolution:
    """Sample segments on the book grid and compute the spread.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        segments (Sequence[Segment]): inner first on each side, reserved first overall
        grid_n (int): number of uniform nodes
        plateau (Tuple[float, float]): multiplier levels next to the reserved set
        dealer_profit (float): expected dealer profit
        flags (Optional[Dict[str, Any]], optional): solver flags. Defaults to None.
        side_states (Tuple[Any, ...], optional): per side solver state. Defaults to ().
        extra_points (Sequence[float], optional): additional mandatory nodes. Defaults to ().
        order (int, optional): Gauss-Legendre nodes per grid panel. Defaults to 8.

    Returns:
        BookSolution: the sampled book
    """
    lo, hi = spec.theta.lo, spec.theta.hi
    mandatory = [0.0, *spec.breakpoints(pi), *extra_points]
    for seg in segments:
        mandatory += [seg.start, seg.end]
        if len(seg.lines) == 2:
            crossing = _crossing(seg.lines[0], seg.lines[1])
            if crossing is not None and seg.lo < crossing < seg.hi:
                mandatory.append(crossing)
    grid = build_grid(lo, hi, grid_n, mandatory)
    arrays = fill_segments(spec, pi, grid, segments, order)
    pieces = sorted(((s.lo, s.hi, s.label) for s in segments), key=lambda p: (p[0], p[1]))
    sol = BookSolution(
        spec=spec,
        pi=pi,
        grid=grid,
        q=arrays["q"],
        tau=arrays["tau"],
        v=arrays["v"],
        gamma=arrays["gamma"],
        u0=spec.u0(grid, pi),
        labels=arrays["labels"],
        partition=Partition.from_pieces(pieces),
        dealer_profit=float(dealer_profit),
        per_type_profit=arrays["profit"],
        plateau=plateau,
        gamma_reporting_only=arrays["reporting_only"],
        flags=dict(flags or {}),
        side_states=side_states,
    )
    return replace(sol, spread=compute_spread(spec, sol))


def _crossing(first: SupportLine, second: SupportLine) -> Optional[float]:
    if first.slope == second.slope:
        return None
    return (second.value - second.slope * second.anchor - first.value + first.slope * first.anchor) / (
        first.slope - second.slope
    )


def boundary_quantity_slope(spec: ModelSpec, theta0: float, gamma: float, direction: int) -> float:
    """Analytic q'(θ0) of l(·, Γ) at an end of the reserved set.

    q' = x'(θ0) / K'(q(θ0)) with x(θ) = θ + (F - Γ)/f and the one sided f'.

    Args:
        spec (ModelSpec): the problem
        theta0 (float): end of the reserved set
        gamma (float): multiplier level beyond it
        direction (int): +1 for the right end, -1 for the left end

    Returns:
        float: the outward derivative of the quantity schedule
    """
    f = float(spec.density.pdf(theta0))
    F = float(spec.density.cdf(theta0))
    fp = float(spec.density.derivative(theta0, direction))
    x_prime = 2.0 - (F - gamma) * fp / f**2
    q0 = float(spec.virtual_quantity_array(theta0, gamma))
    return x_prime / float(spec.k_prime(q0))


def _finite_difference_slope(sol: BookSolution, theta0: float, direction: int) -> float:
    i = int(np.argmin(np.abs(sol.grid - theta0)))
    j = min(max(i + direction, 0), sol.grid.size - 1)
    if i == j:
        return 0.0
    return float((sol.q[j] - sol.q[i]) / (sol.grid[j] - sol.grid[i]))


def compute_spread(spec: ModelSpec, sol: BookSolution) -> SpreadReport:
    """Compute the bid and ask marginal prices t(0∓) = q'(θ0∓)(θ0 φ1 + φ2).

    Args:
        spec (ModelSpec): the problem
        sol (BookSolution): a solved book

    Returns:
        SpreadReport: both marginal prices and the width
    """
    lo0, hi0 = sol.reserved_interval()
    lo, hi = spec.theta.lo, spec.theta.hi
    degenerate = lo0 <= lo or hi0 >= hi or lo0 == hi0
    prices = []
    for theta0, gamma, direction in ((lo0, sol.plateau[0], -1), (hi0, sol.plateau[1], 1)):
        if sol.flags.get("ironed") or sol.flags.get("oracle") or theta0 in (lo, hi):
            slope = _finite_difference_slope(sol, theta0, direction)
        else:
            slope = boundary_quantity_slope(spec, theta0, gamma, direction)
        prices.append(slope * (theta0 * spec.phi1 + spec.phi2))
    if degenerate:
        logger.warning("degenerate reserved set [%g, %g]", lo0, hi0)
    return SpreadReport(prices[0], prices[1], abs(prices[1] - prices[0]), lo0, hi0, degenerate)


def resample(sol: BookSolution, grid: np.ndarray) -> BookSolution:
    """Interpolate a book onto another grid inside its type range.

    Args:
        sol (BookSolution): the book
        grid (np.ndarray): sorted target types

    Raises:
        GridError: the target grid leaves the range of the book

    Returns:
        BookSolution: the resampled book
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < sol.grid[0] - 1e-12 or grid[-1] > sol.grid[-1] + 1e-12):
        raise GridError(
            f"grid [{grid[0]}, {grid[-1]}] leaves the book range [{sol.grid[0]}, {sol.grid[-1]}]"
        )
    if grid.size == sol.grid.size and np.array_equal(grid, sol.grid):
        return sol

    def interp(values: np.ndarray) -> np.ndarray:
        return np.interp(grid, sol.grid, values)

    labels = label_array(sol.partition.label_at(float(t)) for t in grid)
    reporting = interp(sol.gamma_reporting_only.astype(float)) > 0.5 if sol.gamma_reporting_only.size else np.zeros(grid.size, dtype=bool)
    return replace(
        sol,
        grid=grid,
        q=interp(sol.q),
        tau=interp(sol.tau),
        v=interp(sol.v),
        gamma=interp(sol.gamma),
        u0=sol.spec.u0(grid, sol.pi),
        labels=labels,
        per_type_profit=interp(sol.per_type_profit),
        gamma_reporting_only=reporting,
        flags={**sol.flags, "resampled": True},
    )


@dataclass(frozen=True)
class DominanceCheck:
    """One dominance comparison.

    Attrs:
        holds (bool): whether the comparison holds within tolerance
        violation (float): largest violation, 0 if none
    """

    holds: bool
    violation: float


@dataclass(frozen=True)
class DominanceReport:
    """Comparison of two books on a common grid.

    Attrs:
        welfare (DominanceCheck): v_base <= v_other pointwise
        reserved_inclusion (DominanceCheck): reserved set of other inside that of base
        spread (DominanceCheck): spread of other no wider than base
    """

    welfare: DominanceCheck
    reserved_inclusion: DominanceCheck
    spread: DominanceCheck

    @property
    def all_hold(self) -> bool:
        """Return True if every comparison holds."""
        return self.welfare.holds and self.reserved_inclusion.holds and self.spread.holds

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            name: {"holds": check.holds, "violation": check.violation}
            for name, check in (
                ("welfare", self.welfare),
                ("reserved_inclusion", self.reserved_inclusion),
                ("spread", self.spread),
            )
        }


def welfare_compare(base: BookSolution, other: BookSolution, tol: float = 1e-8) -> DominanceReport:
    """Check whether ``other`` dominates ``base`` for traders.

    Welfare is v for participating types and u0 for excluded ones.

    Args:
        base (BookSolution): reference book
        other (BookSolution): candidate dominating book
        tol (float, optional): slack. Defaults to 1e-8.

    Raises:
        GridError: the books cover different type ranges

    Returns:
        DominanceReport: welfare, reserved set and spread comparisons
    """
    if abs(base.grid[0] - other.grid[0]) > 1e-12 or abs(base.grid[-1] - other.grid[-1]) > 1e-12:
        raise GridError("books cover different type spaces")
    other_on_base = resample(other, base.grid)
    excess = np.max(base.welfare() - other_on_base.welfare())
    welfare = DominanceCheck(bool(excess <= tol), float(max(excess, 0.0)))
    base_lo, base_hi = base.reserved_interval()
    other_lo, other_hi = other.reserved_interval()
    spill = max(base_lo - other_lo, other_hi - base_hi, 0.0)
    reserved = DominanceCheck(bool(spill <= tol), float(spill))
    if base.spread is None or other.spread is None:
        raise GridError("both books need a spread")
    wider = other.spread.width - base.spread.width
    spread = DominanceCheck(bool(wider <= tol), float(max(wider, 0.0)))
    return DominanceReport(welfare, reserved, spread)


def check_invariants(sol: BookSolution, tol: float = 1e-7) -> InvariantReport:
    """Check the structural properties of a book.

    Args:
        sol (BookSolution): the book
        tol (float, optional): relative tolerance. Defaults to 1e-7.

    Returns:
        InvariantReport: one check per property
    """
    grid, v, q = sol.grid, sol.v, sol.q
    participating = ~sol.mask(RegionLabel.EXCLUDED)
    scale = max(1.0, float(np.max(np.abs(v))))
    checks: List[Check] = []

    def add(name: str, points: np.ndarray, bad: np.ndarray, detail: str) -> None:
        index = np.flatnonzero(bad)
        where = float(points[index[0]]) if index.size else None
        checks.append(Check(name, where is None, "" if where is None else detail, where))

    add("v_nonnegative", grid, v < -tol * scale, "v must be nonnegative")
    zero = int(np.argmin(np.abs(grid)))
    add("v_zero_at_origin", grid[zero:zero + 1], np.array([abs(v[zero]) > tol * scale]), "v(0) must be 0")
    reserved = sol.mask(RegionLabel.RESERVED)
    add("v_zero_on_reserved", grid, reserved & (np.abs(v) > tol * scale), "v must vanish on reserved types")

    h = np.diff(grid)
    positive = h > 0
    slopes = np.diff(v)[positive] / h[positive]
    mid = grid[1:][positive]
    add("v_convex", mid[1:], np.diff(slopes) < -tol * scale / np.maximum(h[positive][1:], 1e-300), "v must be convex")

    psi_q = sol.spec.prefs.psi1(q)
    env_tol = 100 * tol * max(1.0, float(np.max(np.abs(psi_q))))
    left, right = psi_q[:-1][positive], psi_q[1:][positive]
    add(
        "envelope_identity",
        mid,
        (slopes < np.minimum(left, right) - env_tol) | (slopes > np.maximum(left, right) + env_tol),
        "v' must equal ψ1(q)",
    )
    add("q_monotone", grid[1:], np.diff(q) < -tol * max(1.0, float(np.max(np.abs(q)))), "q must be nondecreasing")
    with np.errstate(invalid="ignore"):
        identity = np.abs(sol.tau - (sol.spec.utility(grid, q) - v))
    add("transfer_identity", grid, identity > tol * scale, "τ must equal u(θ, q) - v")
    add(
        "profit_nonnegative",
        grid,
        participating & (sol.per_type_profit < -1e-8),
        "participating types must be profitable",
    )
    gamma_nodes = ~sol.gamma_reporting_only if sol.gamma_reporting_only.size else np.ones(grid.size, dtype=bool)
    gamma = sol.gamma[gamma_nodes]
    add("gamma_range", grid[gamma_nodes], (gamma < -tol) | (gamma > 1 + tol), "γ must lie in [0, 1]")
    add("gamma_monotone", grid[gamma_nodes][1:], np.diff(gamma) < -1e3 * tol, "γ must be nondecreasing")
    return InvariantReport(tuple(checks))


def write_book_csv(sol: BookSolution, path: str) -> None:
    """Write the sampled book, 12 significant digits.

    Args:
        sol (BookSolution): the book
        path (str): target file
    """
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["theta", "q", "tau", "v", "gamma", "u0", "region", "per_type_profit"])
        for i in range(sol.grid.size):
            writer.writerow(
                [
                    _fmt(sol.grid[i]),
                    _fmt(sol.q[i]),
                    _fmt(sol.tau[i]),
                    _fmt(sol.v[i]),
                    _fmt(sol.gamma[i]),
                    _fmt(sol.u0[i]),
                    RegionLabel(str(sol.labels[i])).value,
                    _fmt(sol.per_type_profit[i]),
                ]
            )


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def write_json(obj: Any, path: str) -> None:
    """Write a JSON report with deterministic key order.

    Args:
        obj (Any): JSON serialisable object
        path (str): target file
    """
    with open(path, "w") as fp:
        json.dump(obj, fp, indent=2, sort_keys=True, default=_json_default)
        fp.write("\n")


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")
