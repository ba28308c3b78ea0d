#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.benchmark import (
    BenchmarkConfig,
    closed_form_check_dp,
    dp_value_coefficients,
    reserved_boundary,
    solve_benchmark,
)
from screenbook.model import ModelSpec, PreferenceSpec, TypeSpace
from screenbook.families import PiecewiseLinearDensity, PolynomialFunction, TabulatedDensity
from screenbook.errors import DegenerateReservedSet, ParameterError
from screenbook.book import RegionLabel
from conftest import BOOK_CFG, mussa_rosen
import numpy as np
import pytest
import math

ROOT = 1.0 - 1.0 / math.sqrt(3.0)


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_mussa_rosen_closed_form(r):
    sol = solve_benchmark(mussa_rosen(r), BOOK_CFG.benchmark)
    lo0, hi0 = sol.reserved_interval()
    assert lo0 == pytest.approx(-r / 2, abs=1e-8)
    assert hi0 == pytest.approx(r / 2, abs=1e-8)
    assert sol.spread.t_minus == pytest.approx(-r, abs=1e-8)
    assert sol.spread.t_plus == pytest.approx(r, abs=1e-8)
    reserved = (sol.grid >= lo0) & (sol.grid <= hi0)
    np.testing.assert_allclose(sol.gamma[reserved], 0.5 + sol.grid[reserved] / r, atol=1e-8)
    right = sol.grid > hi0
    np.testing.assert_allclose(sol.q[right], 2 * sol.grid[right] - r, atol=1e-10)
    np.testing.assert_allclose(sol.v[right], (sol.grid[right] - r / 2) ** 2, atol=1e-10)


def test_mussa_rosen_profit():
    # ∫ (θq - q²/2 - v) f over both sides with q = 2θ ∓ 1
    sol = solve_benchmark(mussa_rosen(), BOOK_CFG.benchmark)
    assert sol.dealer_profit == pytest.approx(1.0 / 12.0, abs=1e-9)
    assert sol.flags["benchmark"] and not sol.flags["degenerate"]


def test_tapered_density(tapered_book):
    lo0, hi0 = tapered_book.reserved_interval()
    assert lo0 == pytest.approx(-ROOT, abs=1e-6)
    assert hi0 == pytest.approx(ROOT, abs=1e-6)
    assert tapered_book.spread.t_minus == pytest.approx(-1.359, abs=5e-3)
    assert tapered_book.spread.t_plus == pytest.approx(1.359, abs=5e-3)
    assert tapered_book.spread.width == pytest.approx(2 * tapered_book.spread.t_plus)
    assert [label for _, _, label in tapered_book.partition.intervals] == [
        RegionLabel.FULL_SERVICE,
        RegionLabel.RESERVED,
        RegionLabel.FULL_SERVICE,
    ]


def test_tapered_density_invariants(tapered_book):
    report = tapered_book.check_invariants()
    assert report.ok, report.summary()
    assert tapered_book.gamma[0] == pytest.approx(0.0)
    assert tapered_book.gamma[-1] == pytest.approx(1.0)


def test_benchmark_is_cached(tapered_spec):
    assert solve_benchmark(tapered_spec, BOOK_CFG.benchmark) is solve_benchmark(tapered_spec, BOOK_CFG.benchmark)


def test_reserved_boundary():
    spec = mussa_rosen()
    theta, clamped = reserved_boundary(spec, 0.25, -1)
    assert theta == pytest.approx(-0.25, abs=1e-10) and not clamped


def _skewed() -> ModelSpec:
    # K(0) = -1.1 pushes the reserved set past the left edge
    base = mussa_rosen()
    density = PiecewiseLinearDensity((-1.0, 0.0, 1.0), (0.1, 0.5, 1.5))
    prefs = PreferenceSpec(PolynomialFunction((0.0, 1.0)), PolynomialFunction((0.0, 1.1)))
    return ModelSpec(TypeSpace(-1.0, 1.0), density, prefs, base.cost)


def test_degenerate_reserved_set_warns():
    with pytest.warns(DegenerateReservedSet):
        sol = solve_benchmark(_skewed(), BOOK_CFG.benchmark)
    assert sol.flags["degenerate"]
    assert sol.reserved_interval()[0] == -1.0
    assert sol.spread.degenerate


def test_degenerate_reserved_set_strict():
    cfg = BenchmarkConfig(grid_n=401, strict=True)
    with pytest.raises(DegenerateReservedSet) as exc:
        solve_benchmark(_skewed(), cfg)
    assert exc.value.solution is not None


def test_ironing():
    # a density with a deep dip breaks the hazard rate conditions
    theta = (-1.0, -0.8, -0.6, 0.0, 0.6, 0.8, 1.0)
    density = TabulatedDensity(theta, (1.0, 0.02, 1.0, 1.0, 1.0, 0.02, 1.0))
    base = mussa_rosen()
    spec = ModelSpec(TypeSpace(-1.0, 1.0), density, base.prefs, base.cost)
    with pytest.warns(UserWarning, match="ironed"):
        sol = solve_benchmark(spec, BOOK_CFG.benchmark)
    assert sol.flags["ironed"]
    assert np.all(np.diff(sol.q) >= -1e-12)
    assert np.all(np.diff(np.diff(sol.v) / np.diff(sol.grid)) >= -1e-9)


@pytest.mark.parametrize("kwargs", [{"grid_n": 4}, {"order": 1}, {"profit_panels": 0}])
def test_benchmark_config_validation(kwargs):
    with pytest.raises(ParameterError):
        BenchmarkConfig(**kwargs)


@pytest.mark.parametrize("alpha,beta,eps", [(1.0, 1.0, 0.0), (0.7, 1.3, 0.2), (2.0, 0.5, 1.0)])
def test_darkpool_closed_form(alpha, beta, eps):
    closed = closed_form_check_dp(alpha, beta, eps)
    assert closed.theta_lo0 == pytest.approx(0.5 * (eps / (2 * alpha) - 1))
    assert closed.theta_hi0 == pytest.approx(0.5 * (eps / (2 * alpha) + 1))
    assert closed.q_slope == pytest.approx(2 * alpha / (alpha + beta))
    assert closed.t_plus - closed.t_minus == pytest.approx(4 * alpha**2 / (alpha + beta))
    np.testing.assert_allclose(closed.value([closed.theta_lo0, 0.0, closed.theta_hi0]), 0.0, atol=1e-12)
    theta = np.linspace(closed.theta_hi0, 1.0, 9)
    slope = np.gradient(closed.value(theta), theta, edge_order=2)
    np.testing.assert_allclose(slope, 2 * alpha * closed.quantity(theta, 1.0), atol=1e-6)


def test_darkpool_value_coefficients_vanish_at_boundary():
    a, b, c = dp_value_coefficients(1.0, 1.0, 0.0, 1.0)
    assert a * 0.25 + b * 0.5 + c == pytest.approx(0.0)


@pytest.mark.parametrize("alpha,beta,eps", [(0.0, 1.0, 0.0), (1.0, -1.0, 0.0), (1.0, 1.0, 2.0)])
def test_darkpool_closed_form_rejects(alpha, beta, eps):
    with pytest.raises(ParameterError):
        closed_form_check_dp(alpha, beta, eps)
