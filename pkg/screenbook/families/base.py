#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.errors import ParameterError, QuantityRangeError
from screenbook.numerics import find_root, RootConfig
from numpy.polynomial import Polynomial
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple, Union
import numpy as np

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class PricePair:
    """Crossing network bid and ask.

    Attrs:
        minus (float): price paid to sellers (θ < 0)
        plus (float): price charged to buyers (θ > 0)
    """

    minus: float = 0.0
    plus: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.minus) and np.isfinite(self.plus)):
            raise ParameterError(f"price pair must be finite, got ({self.minus}, {self.plus})")
        object.__setattr__(self, "minus", float(self.minus))
        object.__setattr__(self, "plus", float(self.plus))

    @classmethod
    def scalar(cls, price: float) -> "PricePair":
        """Build the pair of a single price venue.

        Args:
            price (float): execution price

        Returns:
            PricePair: (price, price)
        """
        return cls(price, price)

    def as_tuple(self) -> Tuple[float, float]:
        """Return (minus, plus)."""
        return (self.minus, self.plus)


@dataclass(frozen=True)
class PolynomialFunction:
    """A smooth function handle backed by a polynomial.

    Attrs:
        coefficients (Tuple[float, ...]): ascending coefficients, c0 + c1 q + c2 q^2 + ...
    """

    coefficients: Tuple[float, ...]

    def __post_init__(self):
        """Normalize the coefficients.

        Raises:
            ParameterError: empty or non finite coefficients
        """
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients or not all(np.isfinite(coefficients)):
            raise ParameterError(f"invalid polynomial coefficients {self.coefficients}")
        while len(coefficients) > 1 and coefficients[-1] == 0.0:
            coefficients = coefficients[:-1]
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def from_terms(cls, *coefficients: float) -> "PolynomialFunction":
        """Build the function from its ascending coefficients.

        Returns:
            PolynomialFunction: the function handle
        """
        return cls(tuple(coefficients))

    @cached_property
    def polynomial(self) -> Polynomial:
        """Return the numpy polynomial."""
        return Polynomial(self.coefficients)

    @cached_property
    def _first(self) -> Polynomial:
        return self.polynomial.deriv(1)

    @cached_property
    def _second(self) -> Polynomial:
        return self.polynomial.deriv(2)

    @property
    def degree(self) -> int:
        """Return the polynomial degree."""
        return len(self.coefficients) - 1

    def __call__(self, x: ArrayLike) -> np.ndarray:
        """Evaluate the function.

        Args:
            x (ArrayLike): evaluation points

        Returns:
            np.ndarray: values
        """
        return self.polynomial(np.asarray(x, dtype=float))

    def derivative(self, x: ArrayLike) -> np.ndarray:
        """Evaluate the first derivative.

        Args:
            x (ArrayLike): evaluation points

        Returns:
            np.ndarray: first derivative values
        """
        return self._first(np.asarray(x, dtype=float))

    def second_derivative(self, x: ArrayLike) -> np.ndarray:
        """Evaluate the second derivative.

        Args:
            x (ArrayLike): evaluation points

        Returns:
            np.ndarray: second derivative values
        """
        return self._second(np.asarray(x, dtype=float))

    def inverse(self, y: ArrayLike, bound: float) -> np.ndarray:
        """Invert the function, assumed strictly increasing on [-bound, bound].

        Args:
            y (ArrayLike): target values
            bound (float): half width of the admissible argument range

        Raises:
            QuantityRangeError: a target lies outside the image of [-bound, bound]

        Returns:
            np.ndarray: arguments x with f(x) = y
        """
        y = np.asarray(y, dtype=float)
        if self.degree == 1:
            c0, c1 = self.coefficients
            x = (y - c0) / c1
            if np.any(np.abs(x[np.isfinite(x)]) > bound):
                raise QuantityRangeError(f"inverse outside [-{bound}, {bound}]")
            return x
        return invert_increasing(self, y, bound)

    def __sub__(self, other: "PolynomialFunction") -> "PolynomialFunction":
        """Return the difference of two polynomial handles."""
        return PolynomialFunction(tuple((self.polynomial - other.polynomial).coef))


def invert_increasing(fn, y: np.ndarray, bound: float) -> np.ndarray:
    """Invert a strictly increasing scalar function elementwise by root finding.

    Args:
        fn (Callable): increasing vectorised function
        y (np.ndarray): target values
        bound (float): half width of the admissible argument range

    Raises:
        QuantityRangeError: a target is not bracketed by [-bound, bound]

    Returns:
        np.ndarray: arguments with fn(x) = y
    """
    y = np.asarray(y, dtype=float)
    lo_value, hi_value = float(fn(-bound)), float(fn(bound))
    out = np.empty_like(y)
    cfg = RootConfig(abs_tol=1e-13)
    for index, target in np.ndenumerate(y):
        if not np.isfinite(target):
            out[index] = np.nan
            continue
        if not lo_value <= target <= hi_value:
            raise QuantityRangeError(
                f"value {target!r} outside [{lo_value!r}, {hi_value!r}], "
                f"the image of [-{bound}, {bound}]"
            )
        out[index] = find_root(lambda x: float(fn(x)) - target, -bound, bound, cfg)
    return out
