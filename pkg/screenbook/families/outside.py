#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families.base import ArrayLike, PricePair
from screenbook.errors import ParameterError
from scipy.interpolate import PchipInterpolator
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple
import numpy as np


class OutsideOptionFamily:
    """Type dependent outside option u0(θ; π) = max(ũ0(θ; π) - κ, 0).

    Subclasses implement the smooth branch ũ0 (``raw``) and its derivative; the
    access cost and the truncation at zero are handled here.
    """

    kind: str = "abstract"
    kappa: float = 0.0

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        """Evaluate the smooth branch ũ0(θ; π).

        Args:
            theta (ArrayLike): types
            pi (PricePair): crossing network prices

        Returns:
            np.ndarray: utility of trading on the crossing network before access cost
        """
        raise NotImplementedError()

    def raw_derivative(
        self, theta: ArrayLike, pi: PricePair, direction: int = 0
    ) -> np.ndarray:
        """Evaluate ∂ũ0/∂θ.

        Args:
            theta (ArrayLike): types
            pi (PricePair): crossing network prices
            direction (int, optional): one sided derivative at a branch kink. Defaults to 0.

        Returns:
            np.ndarray: derivative of the smooth branch
        """
        raise NotImplementedError()

    def branch_kinks(self, pi: PricePair) -> Tuple[float, ...]:
        """Return the points where the smooth branch itself is not differentiable."""
        return ()

    def branch_roots(self, pi: PricePair, lo: float, hi: float) -> Tuple[float, ...]:
        """Return the solutions of ũ0(θ; π) = κ inside (lo, hi)."""
        raise NotImplementedError()

    @property
    def satisfies_monotonicity(self) -> bool:
        """Whether u0 is pointwise nonincreasing in π under the lexicographic order."""
        return True

    @property
    def price_sides(self) -> Tuple[str, ...]:
        """Return the price components ("minus", "plus") the option reacts to."""
        return ()

    def check_price(self, pi: PricePair) -> None:
        """Validate a price pair for this family.

        Args:
            pi (PricePair): crossing network prices

        Raises:
            ParameterError: the prices are not admissible
        """
        return None

    def value(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        """Evaluate u0(θ; π).

        Args:
            theta (ArrayLike): types
            pi (PricePair): crossing network prices

        Returns:
            np.ndarray: outside option values, +inf where trading is impossible
        """
        return np.maximum(self.raw(theta, pi) - self.kappa, 0.0)

    def derivative(
        self, theta: ArrayLike, pi: PricePair, direction: int = 0
    ) -> np.ndarray:
        """Evaluate ∂u0/∂θ, zero where the option is inactive.

        Args:
            theta (ArrayLike): types
            pi (PricePair): crossing network prices
            direction (int, optional): one sided derivative at a kink. Defaults to 0.

        Returns:
            np.ndarray: derivative values
        """
        theta = np.asarray(theta, dtype=float)
        active = self.raw(theta, pi) - self.kappa > 0
        with np.errstate(invalid="ignore"):
            slope = self.raw_derivative(theta, pi, direction)
        return np.where(active, slope, 0.0)

    def breakpoints(self, pi: PricePair, lo: float, hi: float) -> Tuple[float, ...]:
        """Return every point of (lo, hi) where u0 may fail to be smooth.

        Args:
            pi (PricePair): crossing network prices
            lo (float): left end
            hi (float): right end

        Returns:
            Tuple[float, ...]: sorted breakpoints
        """
        points = set(self.branch_roots(pi, lo, hi))
        points.update(x for x in self.branch_kinks(pi) if lo < x < hi)
        return tuple(sorted(points))

    def is_trivial(self, pi: PricePair, lo: float, hi: float, n: int = 257) -> bool:
        """Check whether u0 vanishes on [lo, hi].

        Args:
            pi (PricePair): crossing network prices
            lo (float): left end
            hi (float): right end
            n (int, optional): sampling size. Defaults to 257.

        Returns:
            bool: True if u0 is identically zero
        """
        points = np.asarray(self.breakpoints(pi, lo, hi))
        offsets = 1e-9 * (hi - lo)
        theta = np.concatenate(
            (np.linspace(lo, hi, n), points - offsets, points + offsets)
        )
        theta = theta[(theta >= lo) & (theta <= hi)]
        return not np.any(self.value(theta, pi) > 0)

    def params(self) -> dict:
        """Return the parameters as written in a configuration file."""
        raise NotImplementedError()


def _positive_roots(values: ArrayLike, lo: float, hi: float) -> Tuple[float, ...]:
    return tuple(sorted(float(x) for x in np.atleast_1d(values) if lo < x < hi))


@dataclass(frozen=True)
class TrivialOutside(OutsideOptionFamily):
    """No crossing network: u0 ≡ 0."""

    kappa: float = 0.0
    kind = "trivial"

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        return np.zeros(np.shape(theta))

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        return np.zeros(np.shape(theta))

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        return ()

    def params(self) -> dict:
        return {"kappa": self.kappa}


@dataclass(frozen=True)
class PowerPlusOutside(OutsideOptionFamily):
    """Power outside option.

    ũ0(θ; π) = coef_plus (1 - π+) θ^e for θ ≥ 0 and coef_minus (1 + π-) |θ|^e for θ < 0.

    Attrs:
        exponent (float): power e >= 1
        coef_minus (float): weight of the sell side
        coef_plus (float): weight of the buy side
        kappa (float): access cost
    """

    exponent: float
    coef_minus: float
    coef_plus: float
    kappa: float = 0.0
    kind = "power_plus"

    def __post_init__(self):
        if self.exponent < 1:
            raise ParameterError(f"power outside option needs exponent >= 1, got {self.exponent}")
        if self.coef_minus < 0 or self.coef_plus < 0 or self.kappa < 0:
            raise ParameterError("power outside option needs nonnegative coefficients and kappa")

    def _scales(self, pi: PricePair) -> Tuple[float, float]:
        return self.coef_minus * (1.0 + pi.minus), self.coef_plus * (1.0 - pi.plus)

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        a_minus, a_plus = self._scales(pi)
        scale = np.where(theta >= 0, a_plus, a_minus)
        return scale * np.abs(theta) ** self.exponent

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        a_minus, a_plus = self._scales(pi)
        e = self.exponent
        right = a_plus * e * np.abs(theta) ** (e - 1)
        left = -a_minus * e * np.abs(theta) ** (e - 1)
        positive = (theta > 0) | ((theta == 0) & (direction > 0))
        return np.where(positive, right, left)

    def branch_kinks(self, pi: PricePair) -> Tuple[float, ...]:
        return (0.0,) if self.exponent == 1 else ()

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        roots = []
        a_minus, a_plus = self._scales(pi)
        if a_plus > 0:
            roots.append((self.kappa / a_plus) ** (1.0 / self.exponent))
        if a_minus > 0:
            roots.append(-((self.kappa / a_minus) ** (1.0 / self.exponent)))
        return _positive_roots(roots, lo, hi)

    @property
    def price_sides(self) -> Tuple[str, ...]:
        sides = []
        if self.coef_minus > 0:
            sides.append("minus")
        if self.coef_plus > 0:
            sides.append("plus")
        return tuple(sides)

    def params(self) -> dict:
        return {
            "exponent": self.exponent,
            "coef_minus": self.coef_minus,
            "coef_plus": self.coef_plus,
            "kappa": self.kappa,
        }


@dataclass(frozen=True)
class AffinePiecesOutside(OutsideOptionFamily):
    """Price independent outside option ũ0(θ) = slope_± θ on either side of zero."""

    slope_minus: float
    slope_plus: float
    kappa: float = 0.0
    kind = "affine_pieces"

    def __post_init__(self):
        if self.slope_minus > 0 or self.slope_plus < 0 or self.kappa < 0:
            raise ParameterError(
                "affine outside option needs slope_minus <= 0 <= slope_plus and kappa >= 0"
            )

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.where(theta >= 0, self.slope_plus, self.slope_minus) * theta

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        positive = (theta > 0) | ((theta == 0) & (direction > 0))
        return np.where(positive, self.slope_plus, self.slope_minus)

    def branch_kinks(self, pi: PricePair) -> Tuple[float, ...]:
        return (0.0,)

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        roots = []
        if self.slope_plus > 0:
            roots.append(self.kappa / self.slope_plus)
        if self.slope_minus < 0:
            roots.append(self.kappa / self.slope_minus)
        return _positive_roots(roots, lo, hi)

    def params(self) -> dict:
        return {"slope_minus": self.slope_minus, "slope_plus": self.slope_plus, "kappa": self.kappa}


@dataclass(frozen=True)
class DarkPoolQuadraticOutside(OutsideOptionFamily):
    """Expected utility of a dark pool order: ũ0(θ; π) = α p (θ - π/2α)².

    The pool executes at the single price ``pi.plus`` with probability p.
    """

    alpha: float
    p: float
    kappa: float = 0.0
    kind = "darkpool_quadratic"

    def __post_init__(self):
        if not self.alpha > 0 or not 0 <= self.p <= 1 or self.kappa < 0:
            raise ParameterError("dark pool option needs alpha > 0, p in [0, 1], kappa >= 0")

    def center(self, pi: PricePair) -> float:
        """Return the type that sends no order to the pool."""
        return pi.plus / (2 * self.alpha)

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.alpha * self.p * (theta - self.center(pi)) ** 2

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return 2 * self.alpha * self.p * (theta - self.center(pi))

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        if self.p == 0:
            return ()
        half_width = np.sqrt(self.kappa / (self.alpha * self.p))
        c = self.center(pi)
        if half_width == 0:
            return ()
        return _positive_roots([c - half_width, c + half_width], lo, hi)

    @property
    def satisfies_monotonicity(self) -> bool:
        return False

    @property
    def price_sides(self) -> Tuple[str, ...]:
        return ("minus", "plus")

    def price_bound(self) -> float:
        """Return the hard upper bound 2 sqrt(ακ/p) on the pool price."""
        if self.p == 0:
            return float("inf")
        return 2 * np.sqrt(self.alpha * self.kappa / self.p)

    def check_price(self, pi: PricePair) -> None:
        if not self.p * pi.plus**2 < 4 * self.alpha * self.kappa and self.p > 0:
            raise ParameterError(
                f"dark pool price {pi.plus!r} violates p·π² < 4ακ; "
                f"prices must satisfy |π| < {self.price_bound()!r}"
            )

    def params(self) -> dict:
        return {"alpha": self.alpha, "p": self.p, "kappa": self.kappa}


@dataclass(frozen=True)
class HardExclusionOutside(OutsideOptionFamily):
    """Prohibitive outside option: u0 = 0 on [lo, hi] and +inf outside."""

    lo: float
    hi: float
    kappa: float = 0.0
    kind = "hard_exclusion"

    def __post_init__(self):
        if not self.lo <= 0 <= self.hi:
            raise ParameterError(f"hard exclusion band [{self.lo}, {self.hi}] must contain 0")

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        inside = (theta >= self.lo) & (theta <= self.hi)
        return np.where(inside, 0.0, np.inf)

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        inside = (theta >= self.lo) & (theta <= self.hi)
        return np.where(inside, 0.0, np.nan)

    def branch_kinks(self, pi: PricePair) -> Tuple[float, ...]:
        return (self.lo, self.hi)

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        return ()

    def params(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TabulatedOutside(OutsideOptionFamily):
    """Price independent outside option tabulated on a grid and interpolated by PCHIP.

    Samples must vanish at zero; outside the table the option is extrapolated
    linearly from the end slopes.
    """

    theta: Tuple[float, ...]
    values: Tuple[float, ...]
    kappa: float = 0.0
    kind = "tabulated"

    def __post_init__(self):
        theta = tuple(float(x) for x in self.theta)
        values = tuple(float(y) for y in self.values)
        if len(theta) < 3 or len(theta) != len(values) or np.any(np.diff(theta) <= 0):
            raise ParameterError("tabulated outside option needs >= 3 increasing samples")
        if self.kappa < 0:
            raise ParameterError("tabulated outside option needs kappa >= 0")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "values", values)

    @cached_property
    def _interpolants(self) -> Tuple[PchipInterpolator, PchipInterpolator]:
        f = PchipInterpolator(self.theta, self.values, extrapolate=True)
        return f, f.derivative()

    def raw(self, theta: ArrayLike, pi: PricePair) -> np.ndarray:
        return self._interpolants[0](np.asarray(theta, dtype=float))

    def raw_derivative(self, theta, pi, direction=0) -> np.ndarray:
        return self._interpolants[1](np.asarray(theta, dtype=float))

    def branch_roots(self, pi, lo, hi) -> Tuple[float, ...]:
        f = self._interpolants[0]
        roots = [r for r in f.solve(self.kappa, extrapolate=False) if np.isfinite(r)]
        return _positive_roots(roots, lo, hi)

    def params(self) -> dict:
        return {"theta": list(self.theta), "values": list(self.values), "kappa": self.kappa}
