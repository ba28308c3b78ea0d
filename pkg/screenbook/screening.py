#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.book import (
    BookSolution,
    RegionLabel,
    Segment,
    SupportLine,
    assemble_book,
    region_profit,
    support_lines_value,
)
from screenbook.benchmark import BenchmarkConfig, reserved_boundary, solve_benchmark
from screenbook.benchmark import clear_cache as clear_benchmark_cache
from screenbook.errors import (
    BracketError,
    DegenerateReservedSet,
    ParameterError,
    SolverError,
    StructureError,
)
from screenbook.numerics import RootConfig, cumulative_integral, find_root, maximize_1d, panel_integrals
from screenbook.model import ModelSpec, matching_arrays
from screenbook.families import PricePair
from scipy.optimize import minimize_scalar
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple
from enum import Enum
import numpy as np
import warnings
import logging

logger = logging.getLogger(__name__)

_cn_cache: Dict[Tuple[ModelSpec, PricePair, "CnConfig"], BookSolution] = {}


def clear_cache():
    """Clear the cache of crossing network books, benchmark books included."""
    global _cn_cache
    _cn_cache = {}
    clear_benchmark_cache()


class Side(Enum):
    """Side of the book."""

    NEGATIVE = -1
    POSITIVE = 1

    @property
    def sign(self) -> int:
        """Return -1 or +1."""
        return self.value


class BindingClass(str, Enum):
    """Classification of types against the outside option."""

    PROFITABLE_MATCH = "profitable_match"
    UNPROFITABLE_MATCH = "unprofitable_match"
    NO_BIND = "no_bind"


@dataclass(frozen=True)
class BindingInterval:
    """A maximal interval of one binding class.

    Attrs:
        lo (float): left end
        hi (float): right end
        kind (BindingClass): classification
    """

    lo: float
    hi: float
    kind: BindingClass


@dataclass(frozen=True)
class CnConfig:
    """Controls of the crossing network solver.

    Attrs:
        benchmark (BenchmarkConfig): grid, quadrature and strictness
        gamma_search (RootConfig): tolerances of the multiplier search
        binding_scan_n (int): scan nodes per side
        touch_tol (float): largest gap v - u0 still counted as a tangency, relative to max(1, max |u0|)
        gamma_scan_n (int): coarse scan size of the profit maximisation
    """

    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    gamma_search: RootConfig = field(default_factory=lambda: RootConfig(abs_tol=1e-11))
    binding_scan_n: int = 512
    touch_tol: float = 1e-9
    gamma_scan_n: int = 33

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: too coarse scan or non positive tolerance
        """
        if self.binding_scan_n < 64:
            raise ParameterError(f"binding_scan_n must be >= 64, got {self.binding_scan_n}")
        if not self.touch_tol > 0:
            raise ParameterError(f"touch_tol must be positive, got {self.touch_tol}")
        if self.gamma_scan_n < 3:
            raise ParameterError(f"gamma_scan_n must be >= 3, got {self.gamma_scan_n}")


@dataclass(frozen=True)
class SideSolveState:
    """Outcome of the solve of one side.

    Attrs:
        side (Side): the side
        gamma (float): constant multiplier between the reserved set and the first contact
        theta0 (float): end of the reserved set on this side
        touch_points (Tuple[float, ...]): first contacts of v with u0
        binding_intervals (Tuple[Tuple[float, float, bool], ...]): (lo, hi, profitable) pieces where u0 binds
        contact_kind (str): none, tangency, crossing or edge
        exit_point (Optional[float]): where full service with the boundary multiplier resumes
        profit (float): dealer profit of the side
        smooth_paste_residual (float): largest slope mismatch at smooth pasting points
        benchmark (bool): the side coincides with the benchmark
        clamped (bool): the reserved set reaches the boundary of Θ
    """

    side: Side
    gamma: float
    theta0: float
    touch_points: Tuple[float, ...] = ()
    binding_intervals: Tuple[Tuple[float, float, bool], ...] = ()
    contact_kind: str = "none"
    exit_point: Optional[float] = None
    profit: float = 0.0
    smooth_paste_residual: float = 0.0
    benchmark: bool = False
    clamped: bool = False

    def to_dict(self) -> dict:
        """Return a JSON serialisable view."""
        return {
            "side": self.side.name.lower(),
            "gamma": self.gamma,
            "theta0": self.theta0,
            "touch_points": list(self.touch_points),
            "binding_intervals": [list(iv) for iv in self.binding_intervals],
            "contact_kind": self.contact_kind,
            "exit_point": self.exit_point,
            "profit": self.profit,
            "smooth_paste_residual": self.smooth_paste_residual,
            "benchmark": self.benchmark,
            "clamped": self.clamped,
        }


@dataclass(frozen=True)
class SideSolution:
    """A solved side: its state, its segments listed inner first, its profit."""

    state: SideSolveState
    segments: Tuple[Segment, ...]
    profit: float


@dataclass
class _Plan:
    gamma: float
    theta0: float
    clamped: bool
    profit: float
    contact: Optional[float] = None
    kind: str = "none"
    exit_point: Optional[float] = None
    pieces: List[Tuple[float, float, RegionLabel]] = field(default_factory=list)
    contact_value: float = 0.0
    contact_slope: float = 0.0


class _Profile:
    """v(·; Γ) on one side, started at the reserved boundary θ0(Γ)."""

    def __init__(self, problem: "_SideProblem", gamma: float):
        self.problem = problem
        self.gamma = gamma
        spec, s = problem.spec, problem.sign
        self.theta0, self.clamped = reserved_boundary(spec, gamma, s, problem.cfg.gamma_search)
        nodes = problem.nodes[: problem.stop]
        self.beyond = s * (nodes - self.theta0) > 0
        self.v = np.zeros(nodes.size)
        if np.any(self.beyond):
            edges = np.concatenate(([self.theta0], nodes[self.beyond]))
            self.v[self.beyond] = cumulative_integral(self.slope, edges, problem.order)[1:]

    def slope(self, theta: np.ndarray) -> np.ndarray:
        """Evaluate ψ1(l(θ, Γ))."""
        spec = self.problem.spec
        return spec.prefs.psi1(spec.virtual_quantity_array(theta, self.gamma))

    def v_at(self, theta: float) -> float:
        """Evaluate v(θ; Γ) anywhere on the side."""
        s = self.problem.sign
        if s * (theta - self.theta0) <= 0:
            return 0.0
        nodes = self.problem.nodes[: self.problem.stop]
        before = np.flatnonzero(self.beyond & (s * (nodes - theta) <= 0))
        if before.size:
            j = int(before[-1])
            start, value = float(nodes[j]), float(self.v[j])
        else:
            start, value = self.theta0, 0.0
        if start == theta:
            return value
        return value + float(panel_integrals(self.slope, np.array([start, theta]), self.problem.order)[0])

    def gap(self, theta: float) -> float:
        """Evaluate v(θ; Γ) - u0(θ)."""
        return self.v_at(theta) - float(self.problem.spec.u0(theta, self.problem.pi))


class _SideProblem:
    """Multiplier search on one side of the book."""

    def __init__(self, spec: ModelSpec, pi: PricePair, side: Side, cfg: CnConfig):
        self.spec, self.pi, self.side, self.cfg = spec, pi, side, cfg
        self.sign = s = side.sign
        self.order = cfg.benchmark.order
        self.edge = spec.theta.hi if s > 0 else spec.theta.lo
        self.gamma_b = 1.0 if s > 0 else 0.0
        nodes = np.linspace(0.0, self.edge, cfg.binding_scan_n)
        extra = [b for b in spec.breakpoints(pi) if 0 < s * b < s * self.edge]
        nodes = np.unique(np.concatenate((nodes, extra)))
        self.nodes = nodes if s > 0 else nodes[::-1]
        self.u0 = spec.u0(self.nodes, pi)
        infinite = ~np.isfinite(self.u0)
        self.stop = int(np.argmax(infinite)) if np.any(infinite) else self.nodes.size
        self.theta_inf = float(self.nodes[self.stop - 1]) if self.stop < self.nodes.size else None
        self.active = (self.u0 > 0) & ~infinite
        self.active[self.stop:] = False
        self.level = max(1.0, float(np.max(np.abs(self.u0[self.active]), initial=0.0)))
        # absolute tolerance, shared by the multiplier search and the contact classification
        self.touch_tol = cfg.touch_tol * self.level
        positive = self.u0 > 0
        self.anchor = float(np.clip(spec.reserved_multiplier(0.0), 0.0, 1.0))
        if np.any(positive):
            self.theta_on: Optional[float] = float(self.nodes[max(int(np.argmax(positive)) - 1, 0)])
            self.cap = float(np.clip(spec.reserved_multiplier(self.theta_on), 0.0, 1.0))
        else:
            self.theta_on = None
            self.cap = self.gamma_b
        self._plans: Dict[float, _Plan] = {}

    # Contact search

    def _refine_min(self, profile: _Profile, i: int) -> Tuple[float, float]:
        a = float(self.nodes[max(i - 1, 0)])
        b = float(self.nodes[min(i + 1, self.stop - 1)])
        node_gap = float(profile.v[i] - self.u0[i])
        if a == b:
            return float(self.nodes[i]), node_gap
        try:
            res = minimize_scalar(
                profile.gap,
                bounds=(min(a, b), max(a, b)),
                method="bounded",
                options={"xatol": 1e-13, "maxiter": self.cfg.gamma_search.max_iter},
            )
        except ValueError as exc:
            raise SolverError(f"contact refinement failed on [{a}, {b}]: {exc}") from exc
        if float(res.fun) < node_gap:
            return float(res.x), float(res.fun)
        return float(self.nodes[i]), node_gap

    def _node_gaps(self, profile: _Profile) -> np.ndarray:
        active = self.active[: self.stop]
        return np.where(active, profile.v - self.u0[: self.stop], np.inf)

    def min_gap(self, gamma: float) -> float:
        """Return m(Γ), the smallest gap v(·; Γ) - u0 where u0 is active and finite."""
        profile = _Profile(self, gamma)
        gaps = self._node_gaps(profile)
        if not np.any(np.isfinite(gaps)):
            return np.inf
        k = int(np.argmin(gaps))
        return min(float(gaps[k]), self._refine_min(profile, k)[1])

    def _contact(self, profile: _Profile) -> Tuple[Optional[float], str]:
        gaps = self._node_gaps(profile)
        finite = np.isfinite(gaps)
        if not np.any(finite):
            return (self.theta_inf, "edge") if self.theta_inf is not None else (None, "none")
        tol = self.touch_tol
        negative = np.flatnonzero(finite & (gaps < -tol))
        first_negative = int(negative[0]) if negative.size else self.stop
        scale = 1e-2 * self.level
        for i in np.flatnonzero(finite[:first_negative]):
            left = gaps[i - 1] if i > 0 else np.inf
            right = gaps[i + 1] if i + 1 < gaps.size else np.inf
            if gaps[i] > min(left, right) or gaps[i] > scale:
                continue
            theta_m, gap_m = self._refine_min(profile, int(i))
            if gap_m < -tol:
                return self._crossing(profile, max(int(i) - 1, 0), theta_m), "crossing"
            if gap_m <= tol:
                return theta_m, "tangency"
        if negative.size:
            j = first_negative
            return self._crossing(profile, max(j - 1, 0), float(self.nodes[j])), "crossing"
        if self.theta_inf is not None:
            return self.theta_inf, "edge"
        return None, "none"

    def _crossing(self, profile: _Profile, k: int, end: float) -> float:
        """First zero of the gap before ``end``, bracketed from node ``k`` backward.

        A node whose gap is zero up to rounding is the crossing itself.
        """
        finite = np.isfinite(self.u0[: self.stop])
        zero_tol = 1e-12 * max(1.0, float(np.max(np.abs(self.u0[: self.stop][finite]), initial=0.0)))
        while True:
            start = float(self.nodes[k])
            g = profile.gap(start)
            if abs(g) <= zero_tol:
                return start
            if g > 0:
                return find_root(profile.gap, start, end, self.cfg.gamma_search)
            if k == 0:
                return start
            end, k = start, k - 1

    # Binding stretch

    def _matching(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return matching_arrays(self.spec, self.pi, theta, self.sign)

    def _exit_gap(self, theta: float) -> float:
        q_c = self._matching(np.array([theta]))[0][0]
        q_b = float(self.spec.virtual_quantity_array(theta, self.gamma_b))
        return self.sign * (q_c - q_b)

    def _between(self, a: float, b: float) -> np.ndarray:
        s = self.sign
        inside = (s * (self.nodes - a) > 0) & (s * (self.nodes - b) < 0)
        return self.nodes[inside]

    def _exit(self, theta_x: float) -> float:
        s = self.sign
        points = np.concatenate(([theta_x], self._between(theta_x, self.edge)))
        finite = np.isfinite(self.spec.u0(points, self.pi))
        points = points[finite]
        q_c = self._matching(points)[0]
        q_b = self.spec.virtual_quantity_array(points, self.gamma_b)
        with np.errstate(invalid="ignore"):
            inside = s * (q_c - q_b) <= 0
        if not np.any(inside):
            return self.edge
        k = int(np.argmax(inside))
        if k == 0:
            return theta_x
        return find_root(self._exit_gap, float(points[k - 1]), float(points[k]), self.cfg.gamma_search)

    def _margin(self, theta: float) -> float:
        return float(self._matching(np.array([theta]))[2][0])

    def _pieces(self, a: float, b: float) -> List[Tuple[float, float, RegionLabel]]:
        if a == b:
            return []
        points = np.concatenate(([a], self._between(a, b), [b]))
        margin = self._matching(points)[2]
        cuts = [a]
        for i in range(points.size - 1):
            m0, m1 = margin[i], margin[i + 1]
            if np.isfinite(m0) and np.isfinite(m1):
                if (m0 < 0) != (m1 < 0):
                    cuts.append(find_root(self._margin, float(points[i]), float(points[i + 1]), self.cfg.gamma_search))
            elif np.isfinite(m0) != np.isfinite(m1):
                cuts.append(float(points[i] if np.isfinite(m0) else points[i + 1]))
        cuts.append(b)
        pieces: List[Tuple[float, float, RegionLabel]] = []
        for start, end in zip(cuts[:-1], cuts[1:]):
            if start == end:
                continue
            mid = self._margin(0.5 * (start + end))
            label = RegionLabel.MATCHED if np.isfinite(mid) and mid >= 0 else RegionLabel.EXCLUDED
            if pieces and pieces[-1][2] == label:
                pieces[-1] = (pieces[-1][0], end, label)
            else:
                pieces.append((start, end, label))
        return pieces

    def _matched_profit(self, a: float, b: float) -> float:
        lo, hi = min(a, b), max(a, b)
        edges = np.union1d(
            np.linspace(lo, hi, 33), [x for x in self.spec.breakpoints(self.pi) if lo < x < hi]
        )

        def integrand(theta: np.ndarray) -> np.ndarray:
            margin = np.nan_to_num(self._matching(theta)[2], nan=0.0)
            return np.maximum(margin, 0.0) * self.spec.density.pdf(theta)

        return float(np.sum(panel_integrals(integrand, edges, self.order)))

    def plan(self, gamma: float) -> _Plan:
        """Lay out the side for a multiplier level and return its profit."""
        if gamma in self._plans:
            return self._plans[gamma]
        spec, cfg = self.spec, self.cfg.benchmark
        profile = _Profile(self, gamma)
        theta_x, kind = self._contact(profile)
        if theta_x is None:
            profit = region_profit(spec, profile.theta0, self.edge, gamma, 0.0, cfg.profit_panels, cfg.order)
            plan = _Plan(gamma, profile.theta0, profile.clamped, profit)
        else:
            profit = region_profit(spec, profile.theta0, theta_x, gamma, 0.0, cfg.profit_panels, cfg.order)
            if kind == "edge":
                exit_point = self.edge
                pieces = [(theta_x, self.edge, RegionLabel.EXCLUDED)] if theta_x != self.edge else []
            else:
                exit_point = self._exit(theta_x)
                pieces = self._pieces(theta_x, exit_point)
                for start, end, label in pieces:
                    if label == RegionLabel.MATCHED:
                        profit += self._matched_profit(start, end)
                if exit_point != self.edge:
                    v_exit = float(spec.u0(exit_point, self.pi))
                    profit += region_profit(
                        spec, exit_point, self.edge, self.gamma_b, v_exit, cfg.profit_panels, cfg.order
                    )
            plan = _Plan(
                gamma,
                profile.theta0,
                profile.clamped,
                profit,
                theta_x,
                kind,
                exit_point,
                pieces,
                profile.v_at(theta_x),
                float(profile.slope(np.array([theta_x]))[0]),
            )
        logger.debug("side %s: Γ=%.12g profit=%.12g contact=%s", self.side.name, gamma, plan.profit, kind)
        self._plans[gamma] = plan
        return plan

    def search(self) -> Tuple[Optional[_Plan], Dict[str, float]]:
        """Find the profit maximising multiplier level, None when the side does not bind."""
        tol = self.touch_tol
        has_finite = bool(np.any(self.active))
        diagnostics = {"anchor": self.anchor, "cap": self.cap, "gamma_b": self.gamma_b}
        if not has_finite and self.theta_inf is None:
            return None, diagnostics
        if has_finite and self.theta_inf is None:
            m_b = self.min_gap(self.gamma_b)
            diagnostics["min_gap_benchmark"] = m_b
            if m_b > tol:
                return None, diagnostics
            m_anchor = self.min_gap(self.anchor)
            diagnostics["min_gap_anchor"] = m_anchor
            if m_anchor <= tol:
                gamma_star = self.anchor
            else:
                try:
                    gamma_star = find_root(
                        lambda g: self.min_gap(g) - 0.5 * tol, self.anchor, self.cap, self.cfg.gamma_search
                    )
                except BracketError as exc:
                    diagnostics["min_gap_cap"] = self.min_gap(self.cap)
                    raise SolverError(
                        f"multiplier search on the {self.side.name.lower()} side has no contact level",
                        diagnostics,
                    ) from exc
        else:
            gamma_star = self.anchor
        diagnostics["gamma_star"] = gamma_star
        lo, hi = sorted((gamma_star, self.cap))
        logger.debug("side %s: multiplier search on [%.12g, %.12g]", self.side.name, lo, hi)
        if hi - lo <= self.cfg.gamma_search.abs_tol:
            return self.plan(gamma_star), diagnostics
        gamma_opt, _ = maximize_1d(
            lambda g: self.plan(g).profit, lo, hi, self.cfg.gamma_search, self.cfg.gamma_scan_n
        )
        return self.plan(gamma_opt), diagnostics


def detect_binding_structure(
    spec: ModelSpec, pi: PricePair, side: Side, cfg: Optional[CnConfig] = None
) -> List[BindingInterval]:
    """Classify the types of one side against the outside option.

    A type binds where u0 > 0; it is an unprofitable match where the matching margin
    is negative or u0 is infinite, and a profitable match where in addition
    l(θ, 1) <= q_c(θ) <= l(θ, 0).

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        side (Side): the side
        cfg (Optional[CnConfig], optional): scan controls. Defaults to None.

    Returns:
        List[BindingInterval]: maximal intervals tiling the side, empty when u0 vanishes there
    """
    cfg = cfg or CnConfig()
    problem = _SideProblem(spec, pi, side, cfg)
    nodes = problem.nodes
    if not np.any(problem.u0 > 0):
        return []
    q_c, _, margin = matching_arrays(spec, pi, nodes, side.sign)
    q_hi = spec.virtual_quantity_array(nodes, 0.0)
    q_lo = spec.virtual_quantity_array(nodes, 1.0)
    kinds = []
    for i in range(nodes.size):
        if not problem.u0[i] > 0:
            kinds.append(BindingClass.NO_BIND)
        elif not np.isfinite(problem.u0[i]) or margin[i] < 0:
            kinds.append(BindingClass.UNPROFITABLE_MATCH)
        elif q_lo[i] <= q_c[i] <= q_hi[i]:
            kinds.append(BindingClass.PROFITABLE_MATCH)
        else:
            kinds.append(BindingClass.NO_BIND)

    def margin_at(t: float) -> float:
        return float(matching_arrays(spec, pi, [t], side.sign)[2][0])

    def window(gamma: float):
        return lambda t: float(spec.virtual_quantity_array(t, gamma)) - float(
            matching_arrays(spec, pi, [t], side.sign)[0][0]
        )

    def refine(a: float, b: float) -> float:
        for g in (margin_at, window(1.0), window(0.0)):
            ga, gb = g(a), g(b)
            if np.isfinite(ga) and np.isfinite(gb) and ga * gb < 0:
                return find_root(g, a, b, cfg.gamma_search)
        return a if problem.u0[np.flatnonzero(nodes == a)[0]] > 0 else b

    cuts = [float(nodes[0])]
    labels = [kinds[0]]
    for i in range(1, nodes.size):
        if kinds[i] != labels[-1]:
            cuts.append(refine(float(nodes[i - 1]), float(nodes[i])))
            labels.append(kinds[i])
    cuts.append(float(nodes[-1]))
    intervals = [
        BindingInterval(min(a, b), max(a, b), kind)
        for a, b, kind in zip(cuts[:-1], cuts[1:], labels)
        if a != b
    ]
    return sorted(intervals, key=lambda iv: iv.lo)


def _support_line(spec: ModelSpec, pi: PricePair, theta: float, direction: int) -> SupportLine:
    q_c = matching_arrays(spec, pi, [theta], direction)[0][0]
    return SupportLine(theta, float(spec.u0(theta, pi)), float(spec.prefs.psi1(q_c)))


def solve_side(spec: ModelSpec, pi: PricePair, side: Side, cfg: Optional[CnConfig] = None) -> SideSolution:
    """Solve one side of the book in the presence of the crossing network.

    The multiplier Γ between the reserved set and the first contact with u0 is the
    profit maximiser over the levels for which v(·; Γ) touches u0; past the contact
    the book matches u0 where the margin is nonnegative, excludes where it is
    negative, and resumes full service with the boundary multiplier once the
    matching quantity re-enters the interior schedule.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        side (Side): the side
        cfg (Optional[CnConfig], optional): solver controls. Defaults to None.

    Raises:
        SolverError: no contact level found
        StructureError: the outside option binds again after full service resumed

    Returns:
        SideSolution: state, segments inner first, profit
    """
    cfg = cfg or CnConfig()
    problem = _SideProblem(spec, pi, side, cfg)
    s, edge, bcfg = side.sign, problem.edge, cfg.benchmark
    plan, diagnostics = problem.search()

    if plan is None:
        theta0, clamped = reserved_boundary(spec, problem.gamma_b, s, cfg.gamma_search)
        profit = region_profit(spec, theta0, edge, problem.gamma_b, 0.0, bcfg.profit_panels, bcfg.order)
        state = SideSolveState(side, problem.gamma_b, theta0, profit=profit, benchmark=True, clamped=clamped)
        segment = Segment(theta0, edge, RegionLabel.FULL_SERVICE, gamma=problem.gamma_b, direction=s)
        return SideSolution(state, (segment,) if theta0 != edge else (), profit)

    segments: List[Segment] = []
    inner_end = plan.contact if plan.contact is not None else edge
    if inner_end != plan.theta0:
        segments.append(Segment(plan.theta0, inner_end, RegionLabel.FULL_SERVICE, gamma=plan.gamma, direction=s))
    residuals = []
    if plan.kind == "tangency":
        slope = float(spec.outside.derivative(plan.contact, pi, s))
        residuals.append(abs(plan.contact_slope - slope))
    for start, end, label in plan.pieces:
        if label == RegionLabel.MATCHED:
            segments.append(Segment(start, end, label, direction=s))
            continue
        if start == plan.contact:
            lines = [SupportLine(start, plan.contact_value, plan.contact_slope)]
        else:
            lines = [_support_line(spec, pi, start, -s)]
        if end != edge and np.isfinite(spec.u0(end, pi)):
            outer = _support_line(spec, pi, end, s)
            if outer.slope != lines[0].slope:
                lines.append(outer)
        segments.append(Segment(start, end, label, lines=tuple(lines), direction=s))

    if plan.exit_point is not None and plan.exit_point != edge:
        v_exit = float(spec.u0(plan.exit_point, pi))
        tail = Segment(
            plan.exit_point, edge, RegionLabel.FULL_SERVICE, gamma=problem.gamma_b, anchor_value=v_exit, direction=s
        )
        _check_tail(problem, tail)
        segments.append(tail)
        if plan.pieces and plan.pieces[-1][2] == RegionLabel.MATCHED:
            q_c = matching_arrays(spec, pi, [plan.exit_point], s)[0][0]
            q_b = float(spec.virtual_quantity_array(plan.exit_point, problem.gamma_b))
            residuals.append(abs(float(spec.prefs.psi1(q_c)) - float(spec.prefs.psi1(q_b))))

    state = SideSolveState(
        side=side,
        gamma=plan.gamma,
        theta0=plan.theta0,
        touch_points=() if plan.contact is None else (plan.contact,),
        binding_intervals=tuple((min(a, b), max(a, b), label == RegionLabel.MATCHED) for a, b, label in plan.pieces),
        contact_kind=plan.kind,
        exit_point=plan.exit_point,
        profit=plan.profit,
        smooth_paste_residual=max(residuals, default=0.0),
        clamped=plan.clamped,
    )
    logger.info(
        "side %s: Γ=%.6g θ0=%.6g contact=%s at %s exit=%s",
        side.name.lower(),
        plan.gamma,
        plan.theta0,
        plan.kind,
        plan.contact,
        plan.exit_point,
    )
    logger.debug("side %s diagnostics: %s", side.name.lower(), diagnostics)
    return SideSolution(state, tuple(segments), plan.profit)


def _check_tail(problem: _SideProblem, tail: Segment) -> None:
    spec, s = problem.spec, problem.sign
    nodes = problem.nodes[s * (problem.nodes - tail.start) > 0]
    if nodes.size == 0:
        return
    u0 = spec.u0(nodes, problem.pi)
    v = tail.anchor_value + cumulative_integral(
        lambda t: spec.prefs.psi1(spec.virtual_quantity_array(t, tail.gamma)),
        np.concatenate(([tail.start], nodes)),
        problem.order,
    )[1:]
    finite = np.isfinite(u0)
    scale = max(1.0, float(np.max(np.abs(v))))
    bad = ~finite | (v - u0 < -1e-7 * scale)
    if np.any(bad):
        where = float(nodes[int(np.argmax(bad))])
        raise StructureError(
            f"outside option binds again at theta={where:.6g} after full service resumed at {tail.start:.6g}",
            {"exit": tail.start, "theta": where},
        )


@dataclass(frozen=True)
class ExclusionExtension:
    """Incentive compatible contracts offered on an excluded interval.

    Attrs:
        interval (Tuple[float, float]): the excluded interval
        lines (Tuple[SupportLine, ...]): supporting lines, inner first
        crossing (float): kink of the extension
        theta (np.ndarray): interior grid nodes
        v (np.ndarray): extension values
        q (np.ndarray): quantities
        tau (np.ndarray): transfers
    """

    interval: Tuple[float, float]
    lines: Tuple[SupportLine, ...]
    crossing: float
    theta: np.ndarray
    v: np.ndarray
    q: np.ndarray
    tau: np.ndarray


def extend_over_excluded(sol: BookSolution, interval: Tuple[float, float]) -> ExclusionExtension:
    """Extend v over an excluded interval by the supporting lines at its ends.

    The line at the end nearer the reserved set always exists; the line at the outer
    end is dropped at the boundary of Θ, where u0 is infinite, or when both slopes
    agree (the crossing is then the midpoint).

    Args:
        sol (BookSolution): a book with v and q known at both ends
        interval (Tuple[float, float]): the excluded interval

    Raises:
        StructureError: the extension rises above u0

    Returns:
        ExclusionExtension: the extension on the interior nodes
    """
    spec, grid = sol.spec, sol.grid
    a, b = sorted(interval)
    r_lo, _ = sol.reserved_interval()
    inner, outer = (b, a) if b <= r_lo else (a, b)

    def line_at(theta: float) -> SupportLine:
        i = int(np.argmin(np.abs(grid - theta)))
        return SupportLine(theta, float(sol.v[i]), float(spec.prefs.psi1(sol.q[i])))

    lines = [line_at(inner)]
    at_boundary = outer in (spec.theta.lo, spec.theta.hi)
    if not at_boundary and np.isfinite(spec.u0(outer, sol.pi)):
        outer_line = line_at(outer)
        if outer_line.slope != lines[0].slope:
            lines.append(outer_line)
    crossing = 0.5 * (a + b)
    if len(lines) == 2:
        first, second = lines
        crossing = (second.value - second.slope * second.anchor - first.value + first.slope * first.anchor) / (
            first.slope - second.slope
        )
    interior = (grid > a) & (grid < b)
    theta = grid[interior]
    if theta.size == 0:
        empty = np.zeros(0)
        return ExclusionExtension((a, b), tuple(lines), crossing, empty, empty, empty, empty)
    v, slopes = support_lines_value(lines, theta)
    q = spec.psi1_inverse(slopes)
    u0 = spec.u0(theta, sol.pi)
    scale = max(1.0, float(np.max(np.abs(v))))
    above = v > u0 + 1e-9 * scale
    if np.any(above):
        where = float(theta[int(np.argmax(above))])
        raise StructureError(
            f"extension over ({a:.6g}, {b:.6g}) rises above the outside option at theta={where:.6g}",
            {"interval": (a, b), "theta": where},
        )
    return ExclusionExtension((a, b), tuple(lines), crossing, theta, v, q, spec.utility(theta, q) - v)


def solve_cn(spec: ModelSpec, pi: Optional[PricePair] = None, cfg: Optional[CnConfig] = None) -> BookSolution:
    """Solve the dealer problem in the presence of a crossing network.

    Args:
        spec (ModelSpec): the problem
        pi (Optional[PricePair], optional): crossing network prices. Defaults to (0, 0).
        cfg (Optional[CnConfig], optional): solver controls. Defaults to None.

    Raises:
        ParameterError: inadmissible prices
        SolverError: no contact level found on a binding side
        StructureError: unsupported binding topology
        DegenerateReservedSet: the reserved set touches ∂Θ and strict solving is set

    Returns:
        BookSolution: the glued book
    """
    pi = pi or PricePair()
    cfg = cfg or CnConfig()
    key = (spec, pi, cfg)
    if key in _cn_cache:
        return _cn_cache[key]
    spec.outside.check_price(pi)
    if spec.outside.is_trivial(pi, spec.theta.lo, spec.theta.hi):
        sol = solve_benchmark(spec, cfg.benchmark)
        _cn_cache[key] = sol
        return sol

    minus = solve_side(spec, pi, Side.NEGATIVE, cfg)
    plus = solve_side(spec, pi, Side.POSITIVE, cfg)
    theta_lo0, theta_hi0 = minus.state.theta0, plus.state.theta0
    segments = [Segment(theta_lo0, theta_hi0, RegionLabel.RESERVED), *minus.segments, *plus.segments]
    extra = []
    for state in (minus.state, plus.state):
        extra += list(state.touch_points)
        if state.exit_point is not None:
            extra.append(state.exit_point)
    sol = assemble_book(
        spec,
        pi,
        segments,
        cfg.benchmark.grid_n,
        plateau=(minus.state.gamma, plus.state.gamma),
        dealer_profit=minus.profit + plus.profit,
        flags={
            "binding_minus": not minus.state.benchmark,
            "binding_plus": not plus.state.benchmark,
            "degenerate": minus.state.clamped or plus.state.clamped,
        },
        side_states=(minus.state, plus.state),
        extra_points=extra,
        order=cfg.benchmark.order,
    )
    excluded = sol.intervals_of(RegionLabel.EXCLUDED)
    if excluded:
        v, q, tau, profit = sol.v.copy(), sol.q.copy(), sol.tau.copy(), sol.per_type_profit.copy()
        for interval in excluded:
            ext = extend_over_excluded(sol, interval)
            index = np.flatnonzero((sol.grid > ext.interval[0]) & (sol.grid < ext.interval[1]))
            v[index], q[index], tau[index] = ext.v, ext.q, ext.tau
            profit[index] = 0.0
        sol = replace(sol, v=v, q=q, tau=tau, per_type_profit=profit)

    if minus.state.clamped or plus.state.clamped:
        message = f"reserved set [{theta_lo0:.6g}, {theta_hi0:.6g}] touches the boundary of the type space"
        if cfg.benchmark.strict:
            raise DegenerateReservedSet(message, solution=sol)
        warnings.warn(DegenerateReservedSet(message), stacklevel=2)
    _cn_cache[key] = sol
    return sol
