#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families import (
    AffinePiecesOutside,
    DarkPoolQuadraticOutside,
    HardExclusionOutside,
    PiecewiseLinearDensity,
    PolynomialFunction,
    PowerPlusOutside,
    PricePair,
    TabulatedDensity,
    TabulatedOutside,
    TrivialOutside,
    UniformDensity,
    build_density,
    build_outside,
)
from screenbook.errors import ParameterError, QuantityRangeError
from scipy.integrate import quad
import numpy as np
import pytest


def test_price_pair():
    pi = PricePair.scalar(0.25)
    assert pi.as_tuple() == (0.25, 0.25)
    assert PricePair() == PricePair(0.0, 0.0)
    with pytest.raises(ParameterError):
        PricePair(float("nan"), 0.0)


def test_polynomial_function():
    c = PolynomialFunction.from_terms(0.0, 1.0, 0.5, 0.0)
    assert c.degree == 2
    np.testing.assert_allclose(c([0.0, 1.0, -2.0]), [0.0, 1.5, 0.0])
    np.testing.assert_allclose(c.derivative([0.0, 1.0]), [1.0, 2.0])
    np.testing.assert_allclose(c.second_derivative(3.0), 1.0)
    diff = c - PolynomialFunction((0.0, 1.0))
    assert diff.coefficients == (0.0, 0.0, 0.5)


def test_polynomial_inverse():
    psi1 = PolynomialFunction((0.0, 2.0))
    np.testing.assert_allclose(psi1.inverse([1.0, -3.0], 10.0), [0.5, -1.5])
    cubic = PolynomialFunction((0.0, 1.0, 0.0, 1.0))
    assert float(cubic.inverse(2.0, 10.0)) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(QuantityRangeError):
        psi1.inverse(100.0, 10.0)


@pytest.mark.parametrize("coefficients", [(), (1.0, float("inf"))])
def test_polynomial_rejects(coefficients):
    with pytest.raises(ParameterError):
        PolynomialFunction(coefficients)


@pytest.mark.parametrize(
    "density",
    [
        UniformDensity(-1.0, 1.0),
        PiecewiseLinearDensity((-1.0, 0.0, 1.0), (0.25, 0.75, 0.25)),
        PiecewiseLinearDensity((-1.0, 0.5, 1.0), (1.0, 3.0, 2.0)),
        TabulatedDensity((-1.0, -0.5, 0.0, 0.5, 1.0), (0.2, 0.6, 1.0, 0.6, 0.2)),
    ],
)
def test_density_consistency(density):
    lo, hi = density.support
    points = [p for p in density.breakpoints if lo < p < hi]
    mass = quad(lambda x: float(density.pdf(x)), lo, hi, points=points or None)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert float(density.cdf(lo)) == pytest.approx(0.0, abs=1e-12)
    assert float(density.cdf(hi)) == pytest.approx(1.0, abs=1e-12)
    theta = np.linspace(lo + 0.013, hi - 0.017, 37)
    running = [quad(lambda x: float(density.pdf(x)), lo, t, points=[p for p in points if p < t] or None)[0] for t in theta]
    np.testing.assert_allclose(density.cdf(theta), running, atol=1e-8)


def test_tapered_density_values():
    density = PiecewiseLinearDensity((-1.0, 0.0, 1.0), (0.25, 0.75, 0.25))
    assert float(density.pdf(0.0)) == pytest.approx(0.75)
    assert float(density.cdf(0.0)) == pytest.approx(0.5)
    assert float(density.derivative(0.0, direction=-1)) == pytest.approx(0.5)
    assert float(density.derivative(0.0, direction=1)) == pytest.approx(-0.5)
    assert density.breakpoints == (0.0,)


@pytest.mark.parametrize(
    "cls,kwargs",
    [
        (UniformDensity, {"lo": 1.0, "hi": 1.0}),
        (PiecewiseLinearDensity, {"nodes": (0.0, 0.0), "values": (1.0, 1.0)}),
        (PiecewiseLinearDensity, {"nodes": (0.0, 1.0), "values": (1.0, -1.0)}),
        (TabulatedDensity, {"theta": (0.0, 1.0), "values": (1.0, 1.0)}),
    ],
)
def test_density_rejects(cls, kwargs):
    with pytest.raises(ParameterError):
        cls(**kwargs)


def test_power_outside():
    option = PowerPlusOutside(1.2, 0.0, 1.0 / 3.0, kappa=0.001)
    pi = PricePair(0.0, 0.5)
    theta = np.array([-0.5, 0.0, 0.5])
    expected_plus = (1.0 / 3.0) * 0.5 * 0.5**1.2 - 0.001
    np.testing.assert_allclose(option.value(theta, pi), [0.0, 0.0, expected_plus])
    assert option.price_sides == ("plus",)
    (root,) = option.breakpoints(pi, -1.0, 1.0)
    assert root == pytest.approx((0.001 / (0.5 / 3.0)) ** (1 / 1.2))
    assert option.satisfies_monotonicity
    assert option.value(0.5, PricePair(0.0, 0.1)) > option.value(0.5, pi)


def test_affine_outside():
    option = AffinePiecesOutside(-0.975, 0.975, kappa=0.52)
    np.testing.assert_allclose(option.value([-0.8, 0.0, 0.8], PricePair()), [0.26, 0.0, 0.26])
    np.testing.assert_allclose(option.derivative([-0.8, 0.8], PricePair()), [-0.975, 0.975])
    assert option.breakpoints(PricePair(), -1.0, 1.0) == pytest.approx((-0.52 / 0.975, 0.0, 0.52 / 0.975))
    with pytest.raises(ParameterError):
        AffinePiecesOutside(0.5, 0.975)


def test_darkpool_outside():
    option = DarkPoolQuadraticOutside(alpha=1.0, p=0.5, kappa=0.1)
    assert float(option.value(1.0, PricePair())) == pytest.approx(0.4)
    assert option.price_bound() == pytest.approx(2 * np.sqrt(0.2))
    assert not option.satisfies_monotonicity
    option.check_price(PricePair.scalar(0.5))
    with pytest.raises(ParameterError):
        option.check_price(PricePair.scalar(1.0))


def test_hard_exclusion_outside():
    option = HardExclusionOutside(-0.5, 0.5)
    values = option.value([-0.75, -0.25, 0.25, 0.75], PricePair())
    assert np.isinf(values[0]) and np.isinf(values[-1])
    np.testing.assert_allclose(values[1:3], 0.0)
    assert option.breakpoints(PricePair(), -1.0, 1.0) == (-0.5, 0.5)


def test_tabulated_outside():
    theta = np.linspace(-1.0, 1.0, 9)
    option = TabulatedOutside(tuple(theta), tuple(0.5 * theta**2), kappa=0.05)
    assert float(option.value(0.0, PricePair())) == 0.0
    assert float(option.value(1.0, PricePair())) == pytest.approx(0.45)
    assert option.breakpoints(PricePair(), -1.0, 1.0) == pytest.approx((-np.sqrt(0.1), np.sqrt(0.1)), abs=1e-2)


def test_trivial_outside():
    option = TrivialOutside()
    assert option.is_trivial(PricePair(), -1.0, 1.0)
    assert not AffinePiecesOutside(-1.0, 1.0, kappa=0.5).is_trivial(PricePair(), -1.0, 1.0)


def test_factory():
    density = build_density("piecewise_linear", {"nodes": [-1.0, 0.0, 1.0], "values": [0.25, 0.75, 0.25]})
    assert isinstance(density, PiecewiseLinearDensity)
    outside = build_outside("power_plus", {"exponent": 1.2, "coef_minus": 0.0, "coef_plus": 0.5, "kappa": 0.001})
    assert outside.params()["coef_plus"] == 0.5
    with pytest.raises(ParameterError, match="unknown density kind"):
        build_density("gaussian", {})
    with pytest.raises(ParameterError, match="does not take"):
        build_outside("trivial", {"slope": 1.0})
    with pytest.raises(ParameterError):
        build_outside("affine_pieces", {"slope_minus": -1.0})
