#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.book import (
    BookSolution,
    RegionLabel,
    Segment,
    assemble_book,
    compute_spread,
    region_profit,
)
from screenbook.errors import DegenerateReservedSet, ParameterError, SolverError
from screenbook.numerics import QuadratureConfig, RootConfig, find_root
from sklearn.isotonic import IsotonicRegression
from scipy.integrate import cumulative_trapezoid, trapezoid
from screenbook.families import PricePair, TrivialOutside
from screenbook.model import ModelSpec
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple
import numpy as np
import warnings
import logging

logger = logging.getLogger(__name__)

_benchmark_cache: Dict[Tuple[ModelSpec, "BenchmarkConfig"], BookSolution] = {}


def clear_cache():
    """Clear the cache of benchmark books."""
    global _benchmark_cache
    _benchmark_cache = {}


@dataclass(frozen=True)
class BenchmarkConfig:
    """Controls of the book solvers.

    Attrs:
        grid_n (int): uniform nodes of the output grid, before mandatory nodes
        order (int): Gauss-Legendre nodes per panel
        profit_panels (int): panels of every profit integral
        root (RootConfig): root finding tolerances
        quadrature (QuadratureConfig): adaptive quadrature tolerances
        strict (bool): raise instead of warn on a degenerate reserved set
    """

    grid_n: int = 2001
    order: int = 8
    profit_panels: int = 64
    root: RootConfig = field(default_factory=RootConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    strict: bool = False

    def __post_init__(self):
        """Validate the configuration.

        Raises:
            ParameterError: too coarse grid or quadrature
        """
        if self.grid_n < 16:
            raise ParameterError(f"grid_n must be >= 16, got {self.grid_n}")
        if self.order < 2 or self.profit_panels < 1:
            raise ParameterError("order must be >= 2 and profit_panels >= 1")


def reserved_boundary(spec: ModelSpec, gamma: float, direction: int, cfg: Optional[RootConfig] = None) -> Tuple[float, bool]:
    """Solve ρ(θ) = Γ on one side of the reserved set.

    Args:
        spec (ModelSpec): the problem
        gamma (float): multiplier level, 0 on the negative side and 1 on the positive side in the benchmark
        direction (int): -1 for the left end, +1 for the right end
        cfg (Optional[RootConfig], optional): root tolerances. Defaults to None.

    Returns:
        Tuple[float, bool]: the boundary and whether it was clamped to the edge of Θ
    """
    lo, hi = spec.theta.lo, spec.theta.hi
    inset = 1e-12 * spec.theta.width
    scan = np.linspace(lo + inset, hi - inset, 513)
    gap = spec.reserved_multiplier(scan) - gamma
    changes = np.flatnonzero(np.sign(gap[:-1]) != np.sign(gap[1:]))
    if changes.size == 0:
        edge = lo if direction < 0 else hi
        return edge, True
    # the crossing nearest to the interior of the reserved set
    i = int(changes[-1] if direction < 0 else changes[0])
    root = find_root(lambda t: float(spec.reserved_multiplier(t)) - gamma, scan[i], scan[i + 1], cfg)
    return root, False


def benchmark_segments(spec: ModelSpec, theta_lo0: float, theta_hi0: float) -> Tuple[Segment, ...]:
    """Return the reserved set and the two fully serviced sides of the benchmark book."""
    return (
        Segment(theta_lo0, theta_hi0, RegionLabel.RESERVED),
        Segment(theta_lo0, spec.theta.lo, RegionLabel.FULL_SERVICE, gamma=0.0, direction=-1),
        Segment(theta_hi0, spec.theta.hi, RegionLabel.FULL_SERVICE, gamma=1.0, direction=1),
    )


def solve_benchmark(spec: ModelSpec, cfg: Optional[BenchmarkConfig] = None) -> BookSolution:
    """Solve the dealer problem without crossing network.

    The reserved set is [θ̲0, θ̄0] with ρ(θ̲0) = 0 and ρ(θ̄0) = 1, quantities are
    l(θ, 0) on the left and l(θ, 1) on the right, and v vanishes on the reserved set.
    If l is not monotone the quantities are ironed and the book flagged.

    Args:
        spec (ModelSpec): the problem, its outside option is ignored
        cfg (Optional[BenchmarkConfig], optional): solver controls. Defaults to None.

    Raises:
        DegenerateReservedSet: the reserved set touches ∂Θ and cfg.strict is set

    Returns:
        BookSolution: the benchmark book
    """
    cfg = cfg or BenchmarkConfig()
    key = (spec, cfg)
    if key in _benchmark_cache:
        return _benchmark_cache[key]

    theta_lo0, clamped_lo = reserved_boundary(spec, 0.0, -1, cfg.root)
    theta_hi0, clamped_hi = reserved_boundary(spec, 1.0, 1, cfg.root)
    logger.debug("benchmark reserved set [%.12g, %.12g]", theta_lo0, theta_hi0)

    profit = region_profit(spec, theta_lo0, spec.theta.lo, 0.0, 0.0, cfg.profit_panels, cfg.order)
    profit += region_profit(spec, theta_hi0, spec.theta.hi, 1.0, 0.0, cfg.profit_panels, cfg.order)
    sol = assemble_book(
        spec.with_outside(TrivialOutside()),
        PricePair(),
        benchmark_segments(spec, theta_lo0, theta_hi0),
        cfg.grid_n,
        plateau=(0.0, 1.0),
        dealer_profit=profit,
        flags={"benchmark": True, "degenerate": clamped_lo or clamped_hi},
        order=cfg.order,
    )
    if np.any(np.diff(sol.q) < -1e-12 * max(1.0, float(np.max(np.abs(sol.q))))):
        warnings.warn(
            "hazard rate conditions fail, quantities are ironed", UserWarning, stacklevel=2
        )
        sol = _iron(sol)

    if clamped_lo or clamped_hi:
        message = f"reserved set [{theta_lo0:.6g}, {theta_hi0:.6g}] touches the boundary of the type space"
        if cfg.strict:
            raise DegenerateReservedSet(message, solution=sol)
        warnings.warn(DegenerateReservedSet(message), stacklevel=2)

    _benchmark_cache[key] = sol
    return sol


def _iron(sol: BookSolution) -> BookSolution:
    spec, grid = sol.spec, sol.grid
    cells = np.gradient(grid)
    weights = spec.density.pdf(grid) * cells
    try:
        q = IsotonicRegression(increasing=True).fit_transform(grid, sol.q, sample_weight=weights)
    except ValueError as exc:
        raise SolverError(f"ironing failed: {exc}") from exc
    v = cumulative_trapezoid(spec.prefs.psi1(q), grid, initial=0.0)
    v -= v[int(np.argmin(np.abs(grid)))]
    logger.info("ironed %d nodes", int(np.count_nonzero(np.abs(q - sol.q) > 1e-12)))
    tau = spec.utility(grid, q) - v
    profit = tau - spec.cost.c(q)
    ironed = replace(
        sol,
        q=q,
        v=v,
        tau=tau,
        per_type_profit=profit,
        dealer_profit=float(trapezoid(profit * spec.density.pdf(grid), grid)),
        flags={**sol.flags, "ironed": True},
    )
    return replace(ironed, spread=compute_spread(spec, ironed))


def dp_value_coefficients(alpha: float, beta: float, eps: float, gamma: float) -> Tuple[float, float, float]:
    """Return (a, b, c) with v(θ; Γ) = a θ² + b θ + c on a serviced band of the dark pool model.

    The constant c makes v vanish at the reserved boundary θ0(Γ).

    Args:
        alpha (float): inventory sensitivity
        beta (float): quadratic dealer cost
        eps (float): linear dealer cost
        gamma (float): multiplier level

    Returns:
        Tuple[float, float, float]: polynomial coefficients
    """
    a = 2 * alpha**2 / (alpha + beta)
    b = 2 * alpha * (alpha * (1 - 2 * gamma) / (alpha + beta) - eps / (2 * (alpha + beta)))
    theta0 = 0.5 * (eps / (2 * alpha) + 2 * gamma - 1)
    return a, b, -(a * theta0**2 + b * theta0)


@dataclass(frozen=True)
class DarkPoolBenchmark:
    """Closed forms of the benchmark book in the dark pool model.

    Attrs:
        alpha (float): inventory sensitivity
        beta (float): quadratic dealer cost
        eps (float): linear dealer cost
        theta_lo0 (float): left end of the reserved set
        theta_hi0 (float): right end of the reserved set
        q_slope (float): q' on both fully serviced sides
        t_minus (float): best bid
        t_plus (float): best ask
        c1 (float): constant of v on the left side
        c2 (float): constant of v on the right side
    """

    alpha: float
    beta: float
    eps: float
    theta_lo0: float
    theta_hi0: float
    q_slope: float
    t_minus: float
    t_plus: float
    c1: float
    c2: float

    def quantity(self, theta: np.ndarray, gamma: float) -> np.ndarray:
        """Evaluate l(θ, Γ) = α/(α+β)(2θ + 1 - 2Γ) - ε/(2(α+β))."""
        s = self.alpha + self.beta
        return self.alpha / s * (2 * np.asarray(theta, dtype=float) + 1 - 2 * gamma) - self.eps / (2 * s)

    def value(self, theta: np.ndarray) -> np.ndarray:
        """Evaluate the benchmark indirect utility."""
        theta = np.asarray(theta, dtype=float)
        a, b0, _ = dp_value_coefficients(self.alpha, self.beta, self.eps, 0.0)
        _, b1, _ = dp_value_coefficients(self.alpha, self.beta, self.eps, 1.0)
        left = a * theta**2 + b0 * theta + self.c1
        right = a * theta**2 + b1 * theta + self.c2
        return np.where(theta < self.theta_lo0, left, np.where(theta > self.theta_hi0, right, 0.0))

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "eps": self.eps,
            "theta_lo0": self.theta_lo0,
            "theta_hi0": self.theta_hi0,
            "q_slope": self.q_slope,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "c1": self.c1,
            "c2": self.c2,
        }


def closed_form_check_dp(alpha: float, beta: float, eps: float) -> DarkPoolBenchmark:
    """Evaluate the closed-form benchmark book of the dark pool model.

    Args:
        alpha (float): inventory sensitivity, > 0
        beta (float): quadratic dealer cost, > 0
        eps (float): linear dealer cost in [0, 2α)

    Raises:
        ParameterError: parameters outside their domain

    Returns:
        DarkPoolBenchmark: boundaries, slopes, spread and integration constants
    """
    if not (alpha > 0 and beta > 0):
        raise ParameterError(f"alpha and beta must be positive, got ({alpha}, {beta})")
    if not 0 <= eps < 2 * alpha:
        raise ParameterError(f"eps must lie in [0, 2 alpha) = [0, {2 * alpha}), got {eps}")
    theta_lo0 = 0.5 * (eps / (2 * alpha) - 1)
    theta_hi0 = 0.5 * (eps / (2 * alpha) + 1)
    spread = 4 * alpha**2 / (alpha + beta)
    return DarkPoolBenchmark(
        alpha=alpha,
        beta=beta,
        eps=eps,
        theta_lo0=theta_lo0,
        theta_hi0=theta_hi0,
        q_slope=2 * alpha / (alpha + beta),
        t_minus=spread * theta_lo0,
        t_plus=spread * theta_hi0,
        c1=dp_value_coefficients(alpha, beta, eps, 0.0)[2],
        c2=dp_value_coefficients(alpha, beta, eps, 1.0)[2],
    )
