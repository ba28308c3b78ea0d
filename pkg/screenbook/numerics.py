#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.errors import (
    BracketError,
    QuadratureError,
    ParameterError,
    ScreenbookError,
    SolverError,
    attach_history,
)
from typing import Callable, Generic, List, Optional, Sequence, Tuple, TypeVar
from scipy.optimize import brentq, minimize_scalar
from numpy.polynomial.legendre import leggauss
from dataclasses import dataclass, field
from scipy.integrate import quad
from functools import lru_cache
from enum import Enum
import numpy as np
import logging
import math

logger = logging.getLogger(__name__)

X = TypeVar("X")
P = TypeVar("P")


@dataclass(frozen=True)
class RootConfig:
    """Root finding and 1-D search controls.

    Attrs:
        abs_tol (float): absolute tolerance on the argument
        max_iter (int): iteration budget
        bracket_expansion (float): growth factor used when a bracket must be widened
    """

    abs_tol: float = 1e-10
    max_iter: int = 200
    bracket_expansion: float = 2.0

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: non positive tolerance, empty budget or non expanding factor
        """
        if not self.abs_tol > 0:
            raise ParameterError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.bracket_expansion > 1:
            raise ParameterError(
                f"bracket_expansion must be > 1, got {self.bracket_expansion}"
            )


@dataclass(frozen=True)
class QuadratureConfig:
    """Adaptive quadrature controls.

    Attrs:
        abs_tol (float): absolute error target
        max_depth (int): subdivision budget
        breakpoints (Tuple[float, ...]): points where the integrand may be non-smooth
    """

    abs_tol: float = 1e-9
    max_depth: int = 200
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: non positive tolerance or budget
        """
        if not self.abs_tol > 0:
            raise ParameterError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_depth < 1:
            raise ParameterError(f"max_depth must be >= 1, got {self.max_depth}")
        object.__setattr__(self, "breakpoints", tuple(sorted(self.breakpoints)))

    def with_breakpoints(self, points: Sequence[float]) -> "QuadratureConfig":
        """Return a copy with additional breakpoints.

        Args:
            points (Sequence[float]): extra breakpoints

        Returns:
            QuadratureConfig: the extended configuration
        """
        merged = tuple(sorted(set(self.breakpoints) | set(float(p) for p in points)))
        return QuadratureConfig(self.abs_tol, self.max_depth, merged)


def find_root(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    cfg: Optional[RootConfig] = None,
) -> float:
    """Find a root of g on a sign changing bracket.

    Brent's method: bisection safeguarded by inverse quadratic and secant steps.

    Args:
        g (Callable[[float], float]): scalar function
        lo (float): left end of the bracket
        hi (float): right end of the bracket
        cfg (Optional[RootConfig], optional): tolerances. Defaults to None.

    Raises:
        BracketError: g(lo) and g(hi) have the same strict sign
        SolverError: Brent iteration did not converge

    Returns:
        float: the root
    """
    cfg = cfg or RootConfig()
    if lo > hi:
        lo, hi = hi, lo
    g_lo, g_hi = float(g(lo)), float(g(hi))
    if g_lo == 0.0:
        return float(lo)
    if g_hi == 0.0:
        return float(hi)
    if not (math.isfinite(g_lo) and math.isfinite(g_hi)) or g_lo * g_hi > 0:
        raise BracketError(lo, hi, g_lo, g_hi)
    try:
        return float(
            brentq(g, lo, hi, xtol=cfg.abs_tol, rtol=4 * np.finfo(float).eps, maxiter=cfg.max_iter)
        )
    except (RuntimeError, ValueError) as exc:
        raise SolverError(f"root finding failed on [{lo}, {hi}]: {exc}") from exc


def expand_bracket(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    limit_lo: float,
    limit_hi: float,
    cfg: Optional[RootConfig] = None,
) -> Tuple[float, float]:
    """Widen [lo, hi] geometrically until g changes sign, never past the limits.

    Args:
        g (Callable[[float], float]): scalar function
        lo (float): initial left end
        hi (float): initial right end
        limit_lo (float): hard left limit
        limit_hi (float): hard right limit
        cfg (Optional[RootConfig], optional): expansion factor and budget. Defaults to None.

    Raises:
        BracketError: no sign change inside the limits

    Returns:
        Tuple[float, float]: a sign changing bracket
    """
    cfg = cfg or RootConfig()
    g_lo, g_hi = float(g(lo)), float(g(hi))
    for _ in range(cfg.max_iter):
        if g_lo * g_hi <= 0:
            return lo, hi
        width = (hi - lo) * cfg.bracket_expansion
        if lo <= limit_lo and hi >= limit_hi:
            break
        lo, hi = max(limit_lo, hi - width), min(limit_hi, lo + width)
        g_lo, g_hi = float(g(lo)), float(g(hi))
    if g_lo * g_hi <= 0:
        return lo, hi
    raise BracketError(lo, hi, g_lo, g_hi)


def integrate(
    g: Callable[[float], float],
    a: float,
    b: float,
    cfg: Optional[QuadratureConfig] = None,
) -> float:
    """Integrate g over [a, b] adaptively, splitting at the configured breakpoints.

    Args:
        g (Callable[[float], float]): scalar integrand
        a (float): lower limit
        b (float): upper limit
        cfg (Optional[QuadratureConfig], optional): tolerance, budget and breakpoints. Defaults to None.

    Raises:
        ParameterError: a > b
        QuadratureError: the subdivision budget is exhausted

    Returns:
        float: the integral
    """
    cfg = cfg or QuadratureConfig()
    if a > b:
        raise ParameterError(f"integration limits out of order: {a} > {b}")
    if a == b:
        return 0.0
    points = [p for p in cfg.breakpoints if a < p < b]
    try:
        result = quad(
            g,
            a,
            b,
            points=points or None,
            epsabs=cfg.abs_tol,
            epsrel=0.0,
            limit=cfg.max_depth,
            full_output=1,
        )
    except ValueError as exc:
        raise SolverError(f"quadrature failed on [{a}, {b}]: {exc}") from exc
    if len(result) > 3:
        raise QuadratureError(str(result[3]).splitlines()[0], result[0], result[1])
    return float(result[0])


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1].

    Args:
        order (int): number of nodes

    Returns:
        Tuple[np.ndarray, np.ndarray]: nodes and weights
    """
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_integrals(
    g: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, order: int = 8
) -> np.ndarray:
    """Integrate a vectorised g over every panel [edges[i], edges[i+1]].

    Panels may run in either direction; a reversed panel yields a negated integral.

    Args:
        g (Callable[[np.ndarray], np.ndarray]): vectorised integrand
        edges (np.ndarray): panel edges
        order (int, optional): Gauss-Legendre nodes per panel. Defaults to 8.

    Returns:
        np.ndarray: one integral per panel
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return np.zeros(0)
    nodes, weights = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    points = mid[:, None] + half[:, None] * nodes[None, :]
    values = np.asarray(g(points.ravel()), dtype=float).reshape(points.shape)
    return half * (values @ weights)


def cumulative_integral(
    g: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, order: int = 8
) -> np.ndarray:
    """Running integral of g from edges[0] to every edge.

    Args:
        g (Callable[[np.ndarray], np.ndarray]): vectorised integrand
        edges (np.ndarray): panel edges
        order (int, optional): Gauss-Legendre nodes per panel. Defaults to 8.

    Returns:
        np.ndarray: array of the same length as edges starting at 0
    """
    return np.concatenate(([0.0], np.cumsum(panel_integrals(g, edges, order))))


def maximize_1d(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    cfg: Optional[RootConfig] = None,
    scan_n: int = 33,
) -> Tuple[float, float]:
    """Maximize a scalar function on [lo, hi].

    A coarse scan picks the best node (smallest argument on ties); bounded Brent
    (golden section with parabolic steps) then refines between its neighbours.
    Exact for unimodal g, best effort otherwise.

    Args:
        g (Callable[[float], float]): objective
        lo (float): left end
        hi (float): right end
        cfg (Optional[RootConfig], optional): tolerance and budget. Defaults to None.
        scan_n (int, optional): coarse scan size. Defaults to 33.

    Raises:
        ParameterError: lo >= hi

    Returns:
        Tuple[float, float]: maximizer and maximum
    """
    cfg = cfg or RootConfig()
    if not lo < hi:
        raise ParameterError(f"empty search interval [{lo}, {hi}]")
    xs = np.linspace(lo, hi, max(3, scan_n))
    values = np.array([g(float(x)) for x in xs])
    k = int(np.argmax(values))
    best_x, best_g = float(xs[k]), float(values[k])
    a, b = float(xs[max(k - 1, 0)]), float(xs[min(k + 1, xs.size - 1)])
    try:
        res = minimize_scalar(
            lambda x: -g(x),
            bounds=(a, b),
            method="bounded",
            options={"xatol": cfg.abs_tol, "maxiter": cfg.max_iter},
        )
    except ValueError as exc:
        raise SolverError(f"maximisation failed on [{a}, {b}]: {exc}") from exc
    refined_x, refined_g = float(res.x), float(-res.fun)
    if refined_g > best_g or (refined_g == best_g and refined_x < best_x):
        best_x, best_g = refined_x, refined_g
    logger.debug("maximize_1d on [%g, %g]: x*=%.12g g*=%.12g", lo, hi, best_x, best_g)
    return best_x, best_g


class FixedPointStatus(Enum):
    """Outcome of a fixed-point iteration."""

    CONVERGED = "converged"
    CYCLE_DETECTED = "cycle"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class FixedPointStep(Generic[X, P]):
    """One application of the map.

    Attrs:
        point (X): the evaluated point
        image (X): its image under the map
        payload (P): whatever the map computed on the way
        change (float): distance between this payload and the previous one
    """

    point: X
    image: X
    payload: P
    change: float


@dataclass
class FixedPointTrace(Generic[X, P]):
    """History and outcome of a fixed-point iteration.

    Attrs:
        steps (List[FixedPointStep]): iterates in order
        status (FixedPointStatus): how the iteration stopped
        fixed_point (Optional[X]): the converged point
        cycle (List[X]): the revisited points when a cycle was detected
    """

    steps: List[FixedPointStep] = field(default_factory=list)
    status: FixedPointStatus = FixedPointStatus.MAX_ITERS
    fixed_point: Optional[X] = None
    cycle: List[X] = field(default_factory=list)


def iterate_fixed_point(
    step: Callable[[X], Tuple[X, P]],
    x0: X,
    change: Callable[[P, P], float],
    distance: Callable[[X, X], float],
    tol: float,
    max_iters: int,
    cycle_window: int = 8,
    cycle_tol: float = 1e-9,
) -> FixedPointTrace:
    """Iterate x -> step(x) until the payloads stop changing.

    The run stops when consecutive payloads are within ``tol`` (or the map sends
    a point onto itself), when an image revisits one of the last ``cycle_window``
    points, or after ``max_iters`` evaluations. An image within ``cycle_tol`` of its
    own point is a converging step, never a revisit, and a revisit of the previous
    point only counts once an older point is revisited as well. The reported cycle
    starts at the most recent revisited point.

    Args:
        step (Callable[[X], Tuple[X, P]]): the map, returning the image and a payload
        x0 (X): starting point
        change (Callable[[P, P], float]): payload distance used as convergence metric
        distance (Callable[[X, X], float]): point distance used for cycle detection
        tol (float): convergence tolerance on the payload distance
        max_iters (int): evaluation budget
        cycle_window (int, optional): number of recent points kept. Defaults to 8.
        cycle_tol (float, optional): revisit tolerance. Defaults to 1e-9.

    Raises:
        ParameterError: non positive tolerance or budget

    Returns:
        FixedPointTrace: the iteration history
    """
    if not tol > 0 or max_iters < 1:
        raise ParameterError("fixed-point iteration needs tol > 0 and max_iters >= 1")
    trace: FixedPointTrace = FixedPointTrace()
    x = x0
    previous: Optional[P] = None
    for i in range(max_iters):
        try:
            image, payload = step(x)
        except ScreenbookError as exc:
            raise attach_history(exc, trace.steps)
        delta = math.inf if previous is None else float(change(previous, payload))
        trace.steps.append(FixedPointStep(x, image, payload, delta))
        logger.info("fixed point iterate %d: change=%.3e", i, delta)
        if delta <= tol or distance(image, x) == 0.0:
            trace.status = FixedPointStatus.CONVERGED
            trace.fixed_point = x
            return trace
        if distance(image, x) > cycle_tol:
            recent = [s.point for s in trace.steps[-cycle_window:-1]]
            hits = [j for j, earlier in enumerate(recent) if distance(image, earlier) <= cycle_tol]
            # the previous point alone is also revisited by a slowly oscillating contraction
            if hits and hits[0] < len(recent) - 1:
                trace.status = FixedPointStatus.CYCLE_DETECTED
                trace.cycle = recent[hits[-1] :] + [x]
                return trace
        previous = payload
        x = image
    return trace
