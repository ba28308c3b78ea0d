#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families import (
    DensityFamily,
    OutsideOptionFamily,
    PolynomialFunction,
    PricePair,
    TrivialOutside,
    invert_increasing,
)
from screenbook.errors import (
    KinkError,
    ModelEvaluationError,
    ParameterError,
    QuantityRangeError,
)
from screenbook.families.base import ArrayLike
from screenbook.numerics import integrate, QuadratureConfig
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple
import numpy as np
import logging

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TypeSpace:
    """Closed type interval [lo, hi].

    Attrs:
        lo (float): lowest type
        hi (float): highest type
    """

    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        """Validate the interval.

        Raises:
            ParameterError: empty interval
        """
        if not self.lo < self.hi:
            raise ParameterError(f"type space needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        """Return hi - lo."""
        return self.hi - self.lo


@dataclass(frozen=True)
class PreferenceSpec:
    """Trader preferences u(θ, q) = θ ψ1(q) + ψ2(q).

    Attrs:
        psi1 (PolynomialFunction): marginal type sensitivity
        psi2 (PolynomialFunction): type independent utility
    """

    psi1: PolynomialFunction
    psi2: PolynomialFunction = field(default_factory=lambda: PolynomialFunction((0.0,)))


@dataclass(frozen=True)
class CostSpec:
    """Dealer inventory cost C(q).

    Attrs:
        c (PolynomialFunction): cost of a position q
    """

    c: PolynomialFunction


@dataclass(frozen=True)
class MatchingContract:
    """The contract replicating the outside option of a type.

    Attrs:
        q_c (float): matching quantity ψ1⁻¹(∂u0/∂θ)
        tau_c (float): matching transfer u(θ, q_c) - u0
        margin (float): dealer margin τ_c - C(q_c)
    """

    q_c: float
    tau_c: float
    margin: float


@dataclass(frozen=True)
class ModelSpec:
    """A complete screening problem.

    A ModelSpec is immutable and hashable, so solver results can be cached on it.

    Attrs:
        theta (TypeSpace): type interval
        density (DensityFamily): type distribution
        prefs (PreferenceSpec): trader preferences
        cost (CostSpec): dealer cost
        outside (OutsideOptionFamily): crossing network outside option, κ included
    """

    theta: TypeSpace
    density: DensityFamily
    prefs: PreferenceSpec
    cost: CostSpec
    outside: OutsideOptionFamily = field(default_factory=TrivialOutside)

    def with_outside(self, outside: OutsideOptionFamily) -> "ModelSpec":
        """Return the same problem with another outside option."""
        return ModelSpec(self.theta, self.density, self.prefs, self.cost, outside)

    # Preferences and cost

    def utility(self, theta: ArrayLike, q: ArrayLike) -> np.ndarray:
        """Evaluate u(θ, q)."""
        return np.asarray(theta, dtype=float) * self.prefs.psi1(q) + self.prefs.psi2(q)

    @cached_property
    def c_tilde(self) -> PolynomialFunction:
        """Return C̃ = C - ψ2."""
        return self.cost.c - self.prefs.psi2

    @property
    def phi1(self) -> float:
        """Return ψ1'(0)."""
        return float(self.prefs.psi1.derivative(0.0))

    @property
    def phi2(self) -> float:
        """Return ψ2'(0)."""
        return float(self.prefs.psi2.derivative(0.0))

    def k(self, q: ArrayLike) -> np.ndarray:
        """Evaluate K(q) = C̃'(q) / ψ1'(q)."""
        return self.c_tilde.derivative(q) / self.prefs.psi1.derivative(q)

    def k_prime(self, q: ArrayLike) -> np.ndarray:
        """Evaluate K'(q)."""
        d1 = self.prefs.psi1.derivative(q)
        d2 = self.prefs.psi1.second_derivative(q)
        return (self.c_tilde.second_derivative(q) * d1 - self.c_tilde.derivative(q) * d2) / d1**2

    @cached_property
    def _affine_k(self) -> Optional[Tuple[float, float]]:
        if self.prefs.psi1.degree > 1 or self.c_tilde.degree > 2:
            return None
        slope = float(self.prefs.psi1.derivative(0.0))
        if slope == 0.0:
            return None
        coefficients = self.c_tilde.coefficients + (0.0, 0.0, 0.0)
        return coefficients[1] / slope, 2 * coefficients[2] / slope

    def k_inverse(self, x: ArrayLike) -> np.ndarray:
        """Evaluate K⁻¹, in closed form when K is affine.

        Args:
            x (ArrayLike): values of K

        Raises:
            QuantityRangeError: a value is outside K([-Q, Q])

        Returns:
            np.ndarray: quantities
        """
        x = np.asarray(x, dtype=float)
        affine = self._affine_k
        if affine is not None and affine[1] > 0:
            q = (x - affine[0]) / affine[1]
            bound = self.quantity_bound
            if np.any(np.abs(q[np.isfinite(q)]) > bound):
                raise QuantityRangeError(f"K inverse outside [-{bound}, {bound}]")
            return q
        return invert_increasing(self.k, x, self.quantity_bound)

    def psi1_inverse(self, y: ArrayLike) -> np.ndarray:
        """Evaluate ψ1⁻¹ on [-Q, Q]."""
        return self.prefs.psi1.inverse(y, self.quantity_bound)

    @cached_property
    def quantity_bound(self) -> float:
        """Return the quantity bound Q, ten times the benchmark bound q̄.

        q̄ is doubled until K(±q̄) covers θ + F/f and θ - (1 - F)/f on the type
        grid, which bounds every virtual quantity l(θ, Γ).
        """
        theta = np.linspace(self.theta.lo, self.theta.hi, 257)
        f = self.density.pdf(theta)
        inner = f > 1e-12 * np.max(f)
        F = self.density.cdf(theta[inner])
        x_hi = np.max(theta[inner] + F / f[inner])
        x_lo = np.min(theta[inner] - (1 - F) / f[inner])
        q_bar = 1.0
        for _ in range(60):
            with np.errstate(all="ignore"):
                k_hi, k_lo = self.k(q_bar), self.k(-q_bar)
            if k_hi >= x_hi and k_lo <= x_lo:
                break
            q_bar *= 2
        else:
            logger.warning("quantity bound not reached, K may not be coercive")
        return 10 * q_bar

    # Distribution

    def reserved_multiplier(self, theta: ArrayLike) -> np.ndarray:
        """Evaluate ρ(θ) = F + θ f - f K(0), the multiplier that holds θ at q = 0."""
        theta = np.asarray(theta, dtype=float)
        f = self.density.pdf(theta)
        return self.density.cdf(theta) + theta * f - f * float(self.k(0.0))

    def virtual_argument(self, theta: ArrayLike, gamma: float) -> np.ndarray:
        """Evaluate θ + (F(θ) - Γ) / f(θ)."""
        theta = np.asarray(theta, dtype=float)
        return theta + (self.density.cdf(theta) - gamma) / self.density.pdf(theta)

    def virtual_quantity_array(self, theta: ArrayLike, gamma: float) -> np.ndarray:
        """Vectorised l(θ, Γ)."""
        return self.k_inverse(self.virtual_argument(theta, gamma))

    # Outside option

    def u0(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        """Evaluate u0(θ; π)."""
        return self.outside.value(theta, pi)

    def u0_branch(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        """Evaluate the smooth branch ũ0(θ; π) - κ."""
        return self.outside.raw(theta, pi) - self.outside.kappa

    def breakpoints(self, pi: PricePair) -> Tuple[float, ...]:
        """Return density and outside option breakpoints inside Θ."""
        lo, hi = self.theta.lo, self.theta.hi
        points = set(p for p in self.density.breakpoints if lo < p < hi)
        points.update(self.outside.breakpoints(pi, lo, hi))
        return tuple(sorted(points))


def virtual_quantity(spec: ModelSpec, theta: float, Gamma: float) -> float:
    """Compute the virtual quantity l(θ, Γ) = K⁻¹(θ + (F(θ) - Γ) / f(θ)).

    Args:
        spec (ModelSpec): the problem
        theta (float): type
        Gamma (float): multiplier level in [0, 1]

    Raises:
        ParameterError: f(θ) = 0 or Γ outside [0, 1]
        QuantityRangeError: K⁻¹ not bracketed inside [-Q, Q]

    Returns:
        float: the pointwise maximizer of the virtual surplus
    """
    if not 0.0 <= Gamma <= 1.0:
        raise ParameterError(f"multiplier level must lie in [0, 1], got {Gamma}")
    if not spec.density.pdf(theta) > 0:
        raise ParameterError(f"density vanishes at theta={theta}")
    return float(spec.virtual_quantity_array(theta, Gamma))


def _check_kink(spec: ModelSpec, pi: PricePair, theta: float) -> None:
    for kink in spec.outside.branch_kinks(pi):
        if abs(theta - kink) <= 1e-12 * max(1.0, abs(kink)):
            raise KinkError(theta)


def matching_arrays(
    spec: ModelSpec, pi: PricePair, theta: ArrayLike, direction: int = 0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised matching schedule on the smooth branch of u0.

    Types where the branch is infinite get nan.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        theta (ArrayLike): types
        direction (int, optional): one sided derivative at branch kinks. Defaults to 0.

    Raises:
        QuantityRangeError: ∂u0/∂θ outside the range of ψ1

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: q_c, τ_c and the dealer margin
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    branch = spec.u0_branch(theta, pi)
    finite = np.isfinite(branch)
    q_c = np.full(theta.shape, np.nan)
    if np.any(finite):
        slope = spec.outside.raw_derivative(theta[finite], pi, direction)
        q_c[finite] = spec.psi1_inverse(slope)
    with np.errstate(invalid="ignore"):
        tau_c = spec.utility(theta, q_c) - branch
        margin = tau_c - spec.cost.c(q_c)
    tau_c[~finite] = np.nan
    margin[~finite] = np.nan
    return q_c, tau_c, margin


def matching_schedule(spec: ModelSpec, pi: PricePair, theta: float) -> MatchingContract:
    """Compute the contract matching the outside option of type θ.

    Args:
        spec (ModelSpec): the problem
        pi (PricePair): crossing network prices
        theta (float): type

    Raises:
        KinkError: u0 is not differentiable at θ
        QuantityRangeError: ∂u0/∂θ outside the range of ψ1, or u0 infinite at θ

    Returns:
        MatchingContract: (q_c, τ_c, margin)
    """
    _check_kink(spec, pi, theta)
    if not np.isfinite(spec.u0_branch(theta, pi)):
        raise QuantityRangeError(f"outside option is infinite at theta={theta}")
    q_c, tau_c, margin = matching_arrays(spec, pi, [theta])
    return MatchingContract(float(q_c[0]), float(tau_c[0]), float(margin[0]))


@dataclass(frozen=True)
class Check:
    """Outcome of one validation check.

    Attrs:
        name (str): check identifier
        passed (bool): whether the condition holds
        detail (str): human readable explanation
        location (Optional[float]): offending θ or q
        severity (str): "error" if the condition is required, "warning" otherwise
    """

    name: str
    passed: bool
    detail: str = ""
    location: Optional[float] = None
    severity: str = "error"


@dataclass(frozen=True)
class ValidationReport:
    """All validation checks of a spec.

    Attrs:
        checks (Tuple[Check, ...]): the checks in evaluation order
    """

    checks: Tuple[Check, ...]

    @property
    def ok(self) -> bool:
        """Return True if no required check failed."""
        return all(c.passed for c in self.checks if c.severity == "error")

    @property
    def failures(self) -> List[Check]:
        """Return the failed checks, warnings included."""
        return [c for c in self.checks if not c.passed]

    @property
    def by_name(self) -> Dict[str, Check]:
        """Return the checks keyed by name."""
        return {c.name: c for c in self.checks}

    def summary(self) -> str:
        """Render a one line per check summary."""
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else ("FAIL" if c.severity == "error" else "WARN")
            where = "" if c.location is None else f" at {c.location:.6g}"
            lines.append(f"{status:4} {c.name}{where} {c.detail}".rstrip())
        return "\n".join(lines)

    def to_dict(self) -> dict:
        """Return a JSON serialisable view."""
        return {
            "ok": self.ok,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "severity": c.severity,
                    "location": c.location,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }


def _first_violation(points: np.ndarray, bad: np.ndarray) -> Optional[float]:
    index = np.flatnonzero(bad)
    return float(points[index[0]]) if index.size else None


def _condition(
    name: str, points: np.ndarray, bad: np.ndarray, detail: str, severity: str = "error"
) -> Check:
    where = _first_violation(points, bad)
    return Check(name, where is None, "" if where is None else detail, where, severity)


def _finite_difference_check(
    name: str, fn, dfn, points: np.ndarray, rel_tol: float = 1e-6
) -> Check:
    h = 1e-6 * np.maximum(1.0, np.abs(points))
    numeric = (fn(points + h) - fn(points - h)) / (2 * h)
    exact = dfn(points)
    bad = np.abs(numeric - exact) > rel_tol * np.maximum(1.0, np.abs(exact))
    return _condition(name, points, bad, "derivative disagrees with central differences")


def _ensure_finite(name: str, theta: np.ndarray, values: np.ndarray, allow_inf=False) -> None:
    bad = np.isnan(values) if allow_inf else ~np.isfinite(values)
    if np.any(bad):
        raise ModelEvaluationError(f"{name} is not finite", float(theta[np.argmax(bad)]))


def validate(
    spec: ModelSpec, grid_n: int = 257, pi: Optional[PricePair] = None
) -> ValidationReport:
    """Check the standing assumptions of a problem on a sampling grid.

    Args:
        spec (ModelSpec): the problem
        grid_n (int, optional): number of sampled types. Defaults to 257.
        pi (Optional[PricePair], optional): crossing network prices. Defaults to (0, 0).

    Raises:
        ParameterError: grid_n < 16
        ModelEvaluationError: a model function is not finite on the grid

    Returns:
        ValidationReport: every check with its first offending location
    """
    if grid_n < 16:
        raise ParameterError(f"validation needs grid_n >= 16, got {grid_n}")
    pi = pi or PricePair()
    lo, hi = spec.theta.lo, spec.theta.hi
    theta = np.linspace(lo, hi, grid_n)
    interior = theta[1:-1]
    checks: List[Check] = []

    f = spec.density.pdf(theta)
    F = spec.density.cdf(theta)
    _ensure_finite("density", theta, f)
    _ensure_finite("cdf", theta, F)
    u0 = spec.u0(theta, pi)
    _ensure_finite("outside option", theta, u0, allow_inf=True)

    checks.append(Check("type_space_contains_zero", lo < 0 < hi, "zero must be interior", None))
    checks.append(
        _condition("density_positive", interior, ~(f[1:-1] > 0), "density must be positive")
    )
    checks.append(
        Check(
            "cdf_endpoints",
            abs(F[0]) < 1e-9 and abs(F[-1] - 1) < 1e-9,
            f"F(lo)={F[0]:.3g}, F(hi)={F[-1]:.3g}",
        )
    )
    quadrature = QuadratureConfig(breakpoints=spec.density.breakpoints)
    mass = integrate(lambda x: float(spec.density.pdf(x)), lo, hi, quadrature)
    checks.append(Check("density_normalised", abs(mass - 1) < 1e-7, f"mass={mass:.10g}"))

    inner = interior[spec.density.pdf(interior) > 0]
    with np.errstate(all="ignore"):
        lower = spec.density.cdf(inner) / spec.density.pdf(inner)
        upper = (1 - spec.density.cdf(inner)) / spec.density.pdf(inner)
    checks.append(
        _condition(
            "hazard_rate_monotone",
            inner[1:],
            (np.diff(lower) < -1e-12) | (np.diff(upper) > 1e-12),
            "F/f must increase and (1-F)/f decrease; books will be ironed",
            severity="warning",
        )
    )

    bound = spec.quantity_bound
    q = np.linspace(-bound, bound, grid_n)
    psi1, psi2, cost = spec.prefs.psi1, spec.prefs.psi2, spec.cost.c
    _ensure_finite("psi1", q, psi1(q))
    _ensure_finite("cost", q, cost(q))
    checks.append(
        Check(
            "preferences_vanish_at_zero",
            float(psi1(0.0)) == 0.0 and float(psi2(0.0)) == 0.0,
            "ψ1(0) and ψ2(0) must be 0",
        )
    )
    checks.append(
        _condition("psi1_increasing", q, ~(psi1.derivative(q) > 0), "ψ1' must be positive")
    )
    checks.append(Check("cost_vanishes_at_zero", float(cost(0.0)) == 0.0, "C(0) must be 0"))
    checks.append(
        _condition("cost_strictly_convex", q, ~(cost.second_derivative(q) > 0), "C'' must be positive")
    )
    checks.append(
        Check(
            "cost_coercive",
            float(cost(bound)) > float(cost(bound / 2)) and float(cost(-bound)) > float(cost(-bound / 2)),
            "C must grow without bound",
        )
    )
    c_tilde = spec.c_tilde(q)
    checks.append(_condition("net_cost_nonnegative", q, c_tilde < -1e-12, "C - ψ2 must be >= 0"))
    with np.errstate(all="ignore"):
        k_slope = spec.k_prime(q)
    checks.append(
        _condition("net_cost_convex", q, ~(k_slope > 0), "K must be strictly increasing")
    )
    k0 = float(spec.k(0.0))
    checks.append(
        Check(
            "net_cost_flat_at_zero",
            abs(k0) < 1e-10,
            f"K(0)={k0:.6g}; the reserved set uses F + θf - fK(0)",
            0.0,
            severity="warning",
        )
    )

    branch_zero = float(spec.u0_branch(0.0, pi))
    checks.append(
        Check(
            "outside_vanishes_near_zero",
            branch_zero < 0 or (branch_zero == 0 and spec.outside.kappa == 0),
            f"ũ0(0) - κ = {branch_zero:.6g} must be negative",
            0.0,
        )
    )
    try:
        spec.outside.check_price(pi)
        checks.append(Check("outside_price_admissible", True))
    except ParameterError as exc:
        checks.append(Check("outside_price_admissible", False, str(exc)))
    checks.append(
        Check(
            "outside_monotone_in_price",
            spec.outside.satisfies_monotonicity,
            "u0 is not nonincreasing in the crossing network price",
            severity="warning",
        )
    )

    q_inner = q[1:-1] / 2
    checks.append(_finite_difference_check("psi1_derivative", psi1, psi1.derivative, q_inner))
    checks.append(_finite_difference_check("psi2_derivative", psi2, psi2.derivative, q_inner))
    checks.append(_finite_difference_check("cost_derivative", cost, cost.derivative, q_inner))

    gap = 1e-3 * spec.theta.width
    singular = np.array(spec.breakpoints(pi) + (0.0,))
    far = np.min(np.abs(interior[:, None] - singular[None, :]), axis=1) > gap
    smooth = interior[far]
    smooth = smooth[np.isfinite(spec.u0_branch(smooth, pi))]
    checks.append(
        _finite_difference_check(
            "outside_derivative",
            lambda x: spec.u0_branch(x, pi),
            lambda x: spec.outside.raw_derivative(x, pi),
            smooth,
        )
    )
    checks.append(
        _finite_difference_check("cdf_derivative", spec.density.cdf, spec.density.pdf, smooth)
    )
    report = ValidationReport(tuple(checks))
    logger.info("validation: %d checks, %d failures", len(checks), len(report.failures))
    return report


def margin_function(spec: ModelSpec, pi: PricePair) -> Callable[[ArrayLike], np.ndarray]:
    """Return θ ↦ τ_c(θ) - C(q_c(θ)), the dealer margin of matching the outside option."""

    def margin(theta: ArrayLike) -> np.ndarray:
        return matching_arrays(spec, pi, theta)[2]

    return margin
