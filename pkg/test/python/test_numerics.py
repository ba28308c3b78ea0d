#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.numerics import (
    FixedPointStatus,
    QuadratureConfig,
    RootConfig,
    cumulative_integral,
    expand_bracket,
    find_root,
    integrate,
    iterate_fixed_point,
    maximize_1d,
    panel_integrals,
)
from screenbook.errors import BracketError, ParameterError, QuadratureError, SolverError
import numpy as np
import pytest
import math


def test_find_root_reserved_boundary():
    # g(θ) = 2θ + 1 is the Mussa-Rosen sell side quantity at Γ = 0
    assert find_root(lambda x: 2 * x + 1, -1.0, 0.0) == pytest.approx(-0.5, abs=1e-10)


@pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (1.0, 0.0)])
def test_find_root_either_orientation(lo, hi):
    assert find_root(lambda x: x**3 - 0.125, lo, hi) == pytest.approx(0.5, abs=1e-10)


def test_find_root_endpoint_root():
    assert find_root(lambda x: x, 0.0, 1.0) == 0.0


def test_find_root_without_sign_change():
    with pytest.raises(BracketError) as exc:
        find_root(lambda x: x**2 + 1, -1.0, 1.0)
    assert exc.value.lo == -1.0 and exc.value.hi == 1.0


def test_find_root_budget():
    with pytest.raises(SolverError):
        find_root(lambda x: x - 1e-3, 0.0, 1.0, RootConfig(abs_tol=1e-15, max_iter=1))


def test_expand_bracket():
    lo, hi = expand_bracket(lambda x: x - 3.0, 0.0, 1.0, -10.0, 10.0)
    assert lo <= 3.0 <= hi
    with pytest.raises(BracketError):
        expand_bracket(lambda x: x - 30.0, 0.0, 1.0, -10.0, 10.0)


@pytest.mark.parametrize("kwargs", [{"abs_tol": 0.0}, {"max_iter": 0}, {"bracket_expansion": 1.0}])
def test_root_config_validation(kwargs):
    with pytest.raises(ParameterError):
        RootConfig(**kwargs)


def test_integrate_with_breakpoints():
    cfg = QuadratureConfig(breakpoints=(0.0,))
    assert integrate(lambda x: abs(x), -1.0, 1.0, cfg) == pytest.approx(1.0, abs=1e-12)
    assert integrate(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-9)
    assert integrate(math.sin, 1.0, 1.0) == 0.0


def test_integrate_limits_out_of_order():
    with pytest.raises(ParameterError):
        integrate(math.sin, 1.0, 0.0)


def test_integrate_budget_exhausted():
    cfg = QuadratureConfig(abs_tol=1e-14, max_depth=2)
    with pytest.raises(QuadratureError):
        integrate(lambda x: math.sin(1.0 / x) if x else 0.0, 0.0, 1.0, cfg)


def test_panel_integrals_orientation():
    edges = np.array([0.0, 0.5, 1.0])
    forward = panel_integrals(lambda x: x**2, edges)
    backward = panel_integrals(lambda x: x**2, edges[::-1])
    np.testing.assert_allclose(forward, [1 / 24, 7 / 24], atol=1e-14)
    np.testing.assert_allclose(backward, [-7 / 24, -1 / 24], atol=1e-14)


def test_cumulative_integral():
    edges = np.linspace(0.0, 1.0, 11)
    running = cumulative_integral(lambda x: 3 * x**2, edges)
    assert running[0] == 0.0
    np.testing.assert_allclose(running, edges**3, atol=1e-13)


def test_maximize_1d_concave():
    x, g = maximize_1d(lambda x: -((x - 0.25) ** 2), 0.0, 1.0)
    assert x == pytest.approx(0.25, abs=1e-6)
    assert g == pytest.approx(0.0, abs=1e-10)


def test_maximize_1d_prefers_smaller_argument_on_ties():
    x, _ = maximize_1d(lambda x: 1.0, 0.0, 1.0)
    assert x == 0.0


def test_maximize_1d_empty_interval():
    with pytest.raises(ParameterError):
        maximize_1d(lambda x: x, 1.0, 1.0)


def _distance(a, b):
    return abs(a - b)


def test_fixed_point_converges():
    trace = iterate_fixed_point(lambda x: (0.5 * x + 1.0, 0.5 * x + 1.0), 0.0, _distance, _distance, 1e-10, 200)
    assert trace.status == FixedPointStatus.CONVERGED
    assert trace.fixed_point == pytest.approx(2.0, abs=1e-9)
    assert math.isinf(trace.steps[0].change)


def test_fixed_point_cycle():
    trace = iterate_fixed_point(lambda x: (1.0 - x, 1.0 - x), 0.0, _distance, _distance, 1e-10, 50)
    assert trace.status == FixedPointStatus.CYCLE_DETECTED
    assert sorted(trace.cycle) == [0.0, 1.0]


def test_fixed_point_budget():
    trace = iterate_fixed_point(lambda x: (x + 1.0, x + 1.0), 0.0, _distance, _distance, 1e-10, 5)
    assert trace.status == FixedPointStatus.MAX_ITERS
    assert len(trace.steps) == 5


def test_fixed_point_attaches_history():
    def step(x):
        if x >= 2:
            raise SolverError("no contact level")
        return x + 1, x + 1

    with pytest.raises(SolverError) as exc:
        iterate_fixed_point(step, 0, _distance, _distance, 1e-10, 10)
    assert len(exc.value.history) == 2


def test_fixed_point_oscillating_contraction_converges():
    trace = iterate_fixed_point(lambda x: (3.0 - 0.5 * x, 3.0 - 0.5 * x), 0.0, _distance, _distance, 1e-10, 200)
    assert trace.status == FixedPointStatus.CONVERGED
    assert trace.fixed_point == pytest.approx(2.0, abs=1e-8)


def test_fixed_point_three_cycle():
    orbit = {0.0: 1.0, 1.0: 2.0, 2.0: 0.0}
    trace = iterate_fixed_point(lambda x: (orbit[x], orbit[x]), 0.0, _distance, _distance, 1e-10, 50, cycle_window=4)
    assert trace.status == FixedPointStatus.CYCLE_DETECTED
    assert sorted(trace.cycle) == [0.0, 1.0, 2.0]


def test_find_root_wraps_scipy_errors(monkeypatch):
    def broken(*args, **kwargs):
        raise ValueError("f(a) and f(b) must have different signs")

    monkeypatch.setattr("screenbook.numerics.brentq", broken)
    with pytest.raises(SolverError, match="root finding failed"):
        find_root(lambda x: x - 0.5, 0.0, 1.0)


def test_maximize_1d_wraps_scipy_errors(monkeypatch):
    def broken(*args, **kwargs):
        raise ValueError("The lower bound exceeds the upper bound.")

    monkeypatch.setattr("screenbook.numerics.minimize_scalar", broken)
    with pytest.raises(SolverError, match="maximisation failed"):
        maximize_1d(lambda x: -((x - 0.25) ** 2), 0.0, 1.0)
