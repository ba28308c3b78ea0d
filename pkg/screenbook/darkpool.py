#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.equilibrium import EquilibriumConfig, EquilibriumMode, EquilibriumResult, iterate_equilibrium
from screenbook.benchmark import DarkPoolBenchmark, closed_form_check_dp, dp_value_coefficients, solve_benchmark
from screenbook.families import DarkPoolQuadraticOutside, PolynomialFunction, PricePair, UniformDensity
from screenbook.model import CostSpec, ModelSpec, PreferenceSpec, TypeSpace
from screenbook.book import BookSolution, boundary_quantity_slope
from screenbook.errors import DegeneracyError, ParameterError
from screenbook.screening import CnConfig, solve_cn
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple
import numpy as np
import logging
import math

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DarkPoolParams:
    """Portfolio liquidation with a dark pool.

    Attrs:
        alpha (float): inventory sensitivity, > 0
        beta (float): quadratic dealer cost, > 0
        eps (float): linear dealer cost in [0, 2α)
        p (float): execution probability in [0, 1]
        kappa (float): access cost of the pool, > 0
    """

    alpha: float
    beta: float
    eps: float = 0.0
    p: float = 0.5
    kappa: float = 0.1

    def __post_init__(self):
        """Validate the parameters.

        Raises:
            ParameterError: a parameter outside its domain
        """
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError(f"alpha and beta must be positive, got ({self.alpha}, {self.beta})")
        if not 0 <= self.eps < 2 * self.alpha:
            raise ParameterError(
                f"eps must lie in [0, 2 alpha) = [0, {2 * self.alpha}) for an interior reserved set, got {self.eps}"
            )
        if not 0 <= self.p <= 1:
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")
        if not self.kappa > 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")

    @property
    def boundary_slope(self) -> float:
        """Return q' at both ends of the reserved set, 2α/(α+β)."""
        return 2 * self.alpha / (self.alpha + self.beta)

    @property
    def spread_factor(self) -> float:
        """Return 4α²/(α+β), the factor turning reserved endpoints into prices."""
        return 4 * self.alpha**2 / (self.alpha + self.beta)


def price_bound(params: DarkPoolParams) -> float:
    """Return the hard upper bound 2 sqrt(ακ/p) on admissible pool prices."""
    if params.p == 0:
        return math.inf
    return 2 * math.sqrt(params.alpha * params.kappa / params.p)


def _check_price(params: DarkPoolParams, pi: float) -> None:
    if params.p > 0 and not params.p * pi**2 < 4 * params.alpha * params.kappa:
        raise ParameterError(
            f"pool price {pi!r} violates p·π² < 4ακ, prices must satisfy |π| < {price_bound(params)!r}"
        )


def darkpool_spec(params: DarkPoolParams) -> ModelSpec:
    """Build the liquidation problem on Θ = [-1, 1] with uniform types.

    ψ1 = 2αq, ψ2 = -αq², C = εq + βq² and the pool as outside option.
    """
    a, b, e = params.alpha, params.beta, params.eps
    return ModelSpec(
        theta=TypeSpace(-1.0, 1.0),
        density=UniformDensity(-1.0, 1.0),
        prefs=PreferenceSpec(PolynomialFunction((0.0, 2 * a)), PolynomialFunction((0.0, 0.0, -a))),
        cost=CostSpec(PolynomialFunction((0.0, e, b))),
        outside=DarkPoolQuadraticOutside(alpha=a, p=params.p, kappa=params.kappa),
    )


def dp_outside_option(params: DarkPoolParams, pi: float, theta: float) -> Tuple[float, float]:
    """Optimal pool order and its expected utility net of the access cost.

    Args:
        params (DarkPoolParams): model parameters
        pi (float): pool price
        theta (float): trader type

    Raises:
        ParameterError: p·π² >= 4ακ

    Returns:
        Tuple[float, float]: q_d = θ - π/2α and αp(θ - π/2α)² - κ, before truncation at zero
    """
    _check_price(params, pi)
    q_d = theta - pi / (2 * params.alpha)
    return q_d, params.alpha * params.p * q_d**2 - params.kappa


@dataclass(frozen=True)
class DarkPoolBoundaries:
    """Closed-form boundary and smooth pasting point for a multiplier level.

    Attrs:
        gamma (float): multiplier level
        theta0 (float): end of the reserved set, ½(ε/2α + 2Γ - 1)
        smooth_paste_theta (float): type where v'(·; Γ) meets the slope of u0
    """

    gamma: float
    theta0: float
    smooth_paste_theta: float


def dp_boundaries(params: DarkPoolParams, Gamma: float, pi: float = 0.0) -> DarkPoolBoundaries:
    """Evaluate the reserved set end and the smooth pasting point at a multiplier level.

    Args:
        params (DarkPoolParams): model parameters
        Gamma (float): multiplier level
        pi (float, optional): pool price. Defaults to 0.0.

    Raises:
        DegeneracyError: 2α/(α+β) = p, the pasting point is undetermined

    Returns:
        DarkPoolBoundaries: both closed forms
    """
    a, b, e, p = params.alpha, params.beta, params.eps, params.p
    theta0 = 0.5 * (e / (2 * a) + 2 * Gamma - 1)
    denominator = 2 * a / (a + b) - p
    if abs(denominator) < 1e-12:
        raise DegeneracyError(f"2 alpha/(alpha + beta) equals p = {p}, the smooth pasting point is undetermined")
    paste = (e / (2 * (a + b)) - a * (1 - 2 * Gamma) / (a + b) - p * pi / (2 * a)) / denominator
    return DarkPoolBoundaries(Gamma, theta0, paste)


def dp_indirect_utility(params: DarkPoolParams, Gamma: float, theta: np.ndarray) -> np.ndarray:
    """Closed-form v(θ; Γ) on a serviced band, zero at the reserved end θ0(Γ)."""
    a, b, c = dp_value_coefficients(params.alpha, params.beta, params.eps, Gamma)
    theta = np.asarray(theta, dtype=float)
    return a * theta**2 + b * theta + c


@dataclass
class DarkPoolReport:
    """General solver output next to its closed-form cross-check.

    Attrs:
        params (DarkPoolParams): model parameters
        pi (float): pool price
        book (BookSolution): the general solver book
        benchmark (DarkPoolBenchmark): closed forms without pool
        closed_form_reserved (Tuple[float, float]): θ̲0(Γ-), θ̄0(Γ+)
        closed_form_spread (Tuple[float, float]): 4α²/(α+β) times the reserved ends
        boundary_error (float): largest gap between solver and closed-form reserved ends
        slope_error (float): largest gap between q' at the ends and 2α/(α+β)
        spread_error (float): largest gap between solver and closed-form prices
        paste_error (Optional[float]): largest gap at tangency points, None without tangency
        contained (bool): spread inside the benchmark spread
        strict (Tuple[bool, bool]): strict containment on the bid and on the ask side
    """

    params: DarkPoolParams
    pi: float
    book: BookSolution
    benchmark: DarkPoolBenchmark
    closed_form_reserved: Tuple[float, float]
    closed_form_spread: Tuple[float, float]
    boundary_error: float
    slope_error: float
    spread_error: float
    paste_error: Optional[float]
    contained: bool
    strict: Tuple[bool, bool]

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON serialisable view."""
        return {
            "params": {
                "alpha": self.params.alpha,
                "beta": self.params.beta,
                "eps": self.params.eps,
                "p": self.params.p,
                "kappa": self.params.kappa,
            },
            "pi": self.pi,
            "benchmark": self.benchmark.to_dict(),
            "spread": self.book.spread.to_dict(),
            "closed_form_reserved": list(self.closed_form_reserved),
            "closed_form_spread": list(self.closed_form_spread),
            "boundary_error": self.boundary_error,
            "slope_error": self.slope_error,
            "spread_error": self.spread_error,
            "paste_error": self.paste_error,
            "contained": bool(self.contained),
            "strict": [bool(flag) for flag in self.strict],
        }


def dp_solve(params: DarkPoolParams, pi: float = 0.0, cfg: Optional[CnConfig] = None) -> DarkPoolReport:
    """Solve the liquidation problem with the general solver and check it against the closed forms.

    Args:
        params (DarkPoolParams): model parameters
        pi (float, optional): pool price. Defaults to 0.0.
        cfg (Optional[CnConfig], optional): solver controls. Defaults to None.

    Raises:
        ParameterError: inadmissible pool price

    Returns:
        DarkPoolReport: the book and every cross-check
    """
    _check_price(params, pi)
    spec = darkpool_spec(params)
    book = solve_cn(spec, PricePair.scalar(pi), cfg)
    bench = closed_form_check_dp(params.alpha, params.beta, params.eps)
    gamma_minus, gamma_plus = book.plateau
    lo_cf = dp_boundaries(params, gamma_minus, pi)
    hi_cf = dp_boundaries(params, gamma_plus, pi)
    lo0, hi0 = book.reserved_interval()
    boundary_error = max(abs(lo0 - lo_cf.theta0), abs(hi0 - hi_cf.theta0))

    slopes = (
        boundary_quantity_slope(spec, lo0, gamma_minus, -1),
        boundary_quantity_slope(spec, hi0, gamma_plus, 1),
    )
    slope_error = max(abs(s - params.boundary_slope) for s in slopes)
    spread_cf = (params.spread_factor * lo_cf.theta0, params.spread_factor * hi_cf.theta0)
    spread_error = max(abs(book.spread.t_minus - spread_cf[0]), abs(book.spread.t_plus - spread_cf[1]))

    paste = []
    for state, cf in zip(book.side_states, (lo_cf, hi_cf)):
        if state.contact_kind == "tangency" and state.touch_points:
            paste.append(abs(state.touch_points[0] - cf.smooth_paste_theta))
    paste_error = max(paste) if paste else None

    t_minus, t_plus = book.spread.t_minus, book.spread.t_plus
    contained = bool(bench.t_minus - 1e-9 <= t_minus and t_plus <= bench.t_plus + 1e-9)
    strict = (bool(t_minus > bench.t_minus + 1e-9), bool(t_plus < bench.t_plus - 1e-9))
    logger.info(
        "dark pool spread (%.6g, %.6g) inside benchmark (%.6g, %.6g): %s",
        t_minus,
        t_plus,
        bench.t_minus,
        bench.t_plus,
        contained,
    )
    return DarkPoolReport(
        params=params,
        pi=pi,
        book=book,
        benchmark=bench,
        closed_form_reserved=(lo_cf.theta0, hi_cf.theta0),
        closed_form_spread=spread_cf,
        boundary_error=boundary_error,
        slope_error=slope_error,
        spread_error=spread_error,
        paste_error=paste_error,
        contained=contained,
        strict=strict,
    )


def dp_benchmark_book(params: DarkPoolParams, cfg: Optional[CnConfig] = None) -> BookSolution:
    """Solve the liquidation problem without pool."""
    cfg = cfg or CnConfig()
    return solve_benchmark(darkpool_spec(params), cfg.benchmark)


def dp_equilibrium(
    params: DarkPoolParams, pi0: float = 0.0, cfg: Optional[EquilibriumConfig] = None
) -> EquilibriumResult:
    """Iterate the mid-quote rule π_{i+1} = ½(t_i(0+) - t_i(0-)) and re-verify the limit.

    Args:
        params (DarkPoolParams): model parameters
        pi0 (float, optional): starting pool price. Defaults to 0.0.
        cfg (Optional[EquilibriumConfig], optional): iteration controls, mode and start are overridden. Defaults to None.

    Raises:
        ParameterError: an iterate leaves |π| < 2 sqrt(ακ/p)

    Returns:
        EquilibriumResult: the iteration with its verification record
    """
    _check_price(params, pi0)
    cfg = replace(cfg or EquilibriumConfig(), mode=EquilibriumMode.MID_QUOTE, pi0=PricePair.scalar(pi0))
    return iterate_equilibrium(darkpool_spec(params), cfg, verify=True)
