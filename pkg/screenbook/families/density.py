#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families.base import ArrayLike
from screenbook.errors import ParameterError
from scipy.interpolate import PchipInterpolator
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple
import numpy as np


class DensityFamily:
    """Type density f on [lo, hi] with its cdf F and derivative f'."""

    kind: str = "abstract"

    @property
    def support(self) -> Tuple[float, float]:
        """Return the interval carrying the density."""
        raise NotImplementedError()

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        """Return interior points where f' may jump."""
        return ()

    def pdf(self, theta: ArrayLike) -> np.ndarray:
        """Evaluate f.

        Args:
            theta (ArrayLike): types

        Returns:
            np.ndarray: density values
        """
        raise NotImplementedError()

    def cdf(self, theta: ArrayLike) -> np.ndarray:
        """Evaluate F.

        Args:
            theta (ArrayLike): types

        Returns:
            np.ndarray: cdf values
        """
        raise NotImplementedError()

    def derivative(self, theta: ArrayLike, direction: int = 0) -> np.ndarray:
        """Evaluate f'.

        Args:
            theta (ArrayLike): types
            direction (int, optional): at a breakpoint, +1 picks the right and -1 the left derivative. Defaults to 0.

        Returns:
            np.ndarray: derivative values
        """
        raise NotImplementedError()

    def params(self) -> dict:
        """Return the parameters as written in a configuration file."""
        raise NotImplementedError()


@dataclass(frozen=True)
class UniformDensity(DensityFamily):
    """Uniform density on [lo, hi]."""

    lo: float = -1.0
    hi: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError(f"uniform density needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def support(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    def pdf(self, theta: ArrayLike) -> np.ndarray:
        return np.full(np.shape(theta), 1.0 / (self.hi - self.lo))

    def cdf(self, theta: ArrayLike) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.clip((theta - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def derivative(self, theta: ArrayLike, direction: int = 0) -> np.ndarray:
        return np.zeros(np.shape(theta))

    def params(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PiecewiseLinearDensity(DensityFamily):
    """Density interpolating (nodes, values) linearly, rescaled to unit mass.

    Attrs:
        nodes (Tuple[float, ...]): increasing abscissae, first and last are the support
        values (Tuple[float, ...]): unnormalised density at the nodes
    """

    nodes: Tuple[float, ...]
    values: Tuple[float, ...]
    kind = "piecewise_linear"

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        values = tuple(float(y) for y in self.values)
        if len(nodes) < 2 or len(nodes) != len(values):
            raise ParameterError("piecewise linear density needs matching nodes and values")
        if np.any(np.diff(nodes) <= 0):
            raise ParameterError("piecewise linear density nodes must increase")
        if min(values) < 0:
            raise ParameterError("piecewise linear density values must be nonnegative")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @cached_property
    def _tables(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.asarray(self.nodes)
        y = np.asarray(self.values)
        mass = 0.5 * np.diff(x) * (y[1:] + y[:-1])
        total = mass.sum()
        if not total > 0:
            raise ParameterError("piecewise linear density has zero mass")
        y = y / total
        cum = np.concatenate(([0.0], np.cumsum(mass / total)))
        return x, y, cum

    @property
    def support(self) -> Tuple[float, float]:
        return (self.nodes[0], self.nodes[-1])

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self.nodes[1:-1]

    def _segment(self, theta: np.ndarray, direction: int) -> np.ndarray:
        x = self._tables[0]
        side = "left" if direction < 0 else "right"
        k = np.searchsorted(x, theta, side=side) - 1
        return np.clip(k, 0, x.size - 2)

    def pdf(self, theta: ArrayLike) -> np.ndarray:
        x, y, _ = self._tables
        return np.interp(np.asarray(theta, dtype=float), x, y, left=0.0, right=0.0)

    def cdf(self, theta: ArrayLike) -> np.ndarray:
        x, y, cum = self._tables
        theta = np.clip(np.asarray(theta, dtype=float), x[0], x[-1])
        k = self._segment(theta, 1)
        slope = (y[k + 1] - y[k]) / (x[k + 1] - x[k])
        dx = theta - x[k]
        return np.clip(cum[k] + y[k] * dx + 0.5 * slope * dx * dx, 0.0, 1.0)

    def derivative(self, theta: ArrayLike, direction: int = 0) -> np.ndarray:
        x, y, _ = self._tables
        theta = np.asarray(theta, dtype=float)
        k = self._segment(theta, direction)
        return (y[k + 1] - y[k]) / (x[k + 1] - x[k])

    def params(self) -> dict:
        return {"nodes": list(self.nodes), "values": list(self.values)}


@dataclass(frozen=True)
class TabulatedDensity(DensityFamily):
    """Density given by samples, interpolated by a monotone cubic (PCHIP).

    PCHIP keeps nonnegative samples nonnegative, and its antiderivative gives F
    exactly.
    """

    theta: Tuple[float, ...]
    values: Tuple[float, ...]
    kind = "tabulated"

    def __post_init__(self):
        theta = tuple(float(x) for x in self.theta)
        values = tuple(float(y) for y in self.values)
        if len(theta) < 3 or len(theta) != len(values):
            raise ParameterError("tabulated density needs at least 3 matching samples")
        if np.any(np.diff(theta) <= 0) or min(values) < 0:
            raise ParameterError("tabulated density needs increasing nodes and nonnegative values")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "values", values)

    @cached_property
    def _interpolants(self) -> Tuple[PchipInterpolator, PchipInterpolator, PchipInterpolator, float]:
        f = PchipInterpolator(self.theta, self.values, extrapolate=False)
        antiderivative = f.antiderivative()
        total = float(antiderivative(self.theta[-1]))
        if not total > 0:
            raise ParameterError("tabulated density has zero mass")
        return f, antiderivative, f.derivative(), total

    @property
    def support(self) -> Tuple[float, float]:
        return (self.theta[0], self.theta[-1])

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self.theta[1:-1]

    def pdf(self, theta: ArrayLike) -> np.ndarray:
        f, _, _, total = self._interpolants
        return np.nan_to_num(f(np.asarray(theta, dtype=float)) / total, nan=0.0)

    def cdf(self, theta: ArrayLike) -> np.ndarray:
        _, antiderivative, _, total = self._interpolants
        theta = np.clip(np.asarray(theta, dtype=float), self.theta[0], self.theta[-1])
        return np.clip(antiderivative(theta) / total, 0.0, 1.0)

    def derivative(self, theta: ArrayLike, direction: int = 0) -> np.ndarray:
        _, _, df, total = self._interpolants
        return np.nan_to_num(df(np.asarray(theta, dtype=float)) / total, nan=0.0)

    def params(self) -> dict:
        return {"theta": list(self.theta), "values": list(self.values)}
