#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.screening import (
    BindingClass,
    CnConfig,
    Side,
    clear_cache,
    detect_binding_structure,
    extend_over_excluded,
    solve_cn,
    solve_side,
)
from screenbook.families import AffinePiecesOutside, DarkPoolQuadraticOutside, PricePair
from screenbook.errors import ParameterError
from screenbook.book import RegionLabel
from screenbook.benchmark import solve_benchmark
from conftest import BOOK_CFG, EXAMPLE_PRICE, hard_exclusion, tapered
import numpy as np
import pytest


def test_affine_outside_spread(affine_book):
    assert affine_book.spread.t_minus == pytest.approx(-1.282, abs=5e-3)
    assert affine_book.spread.t_plus == pytest.approx(1.282, abs=5e-3)
    assert affine_book.plateau[0] == pytest.approx(0.030, abs=2e-3)
    assert affine_book.plateau[1] == pytest.approx(0.970, abs=2e-3)


def test_affine_outside_tangency(affine_book):
    minus, plus = affine_book.side_states
    assert minus.side == Side.NEGATIVE and plus.side == Side.POSITIVE
    assert minus.touch_points[0] == pytest.approx(-0.675, abs=5e-3)
    assert plus.touch_points[0] == pytest.approx(0.675, abs=5e-3)
    assert minus.contact_kind == plus.contact_kind == "tangency"
    assert plus.smooth_paste_residual < 1e-3
    assert affine_book.intervals_of(RegionLabel.EXCLUDED) == []
    assert affine_book.flags["binding_minus"] and affine_book.flags["binding_plus"]


def test_affine_outside_invariants(affine_book):
    report = affine_book.check_invariants()
    assert report.ok, report.summary()
    assert np.all(affine_book.v >= affine_book.u0 - 1e-7)


def test_affine_outside_symmetry(affine_book):
    lo0, hi0 = affine_book.reserved_interval()
    assert lo0 == pytest.approx(-hi0, abs=1e-6)
    assert affine_book.plateau[0] + affine_book.plateau[1] == pytest.approx(1.0, abs=1e-6)
    minus, plus = affine_book.side_states
    assert minus.touch_points[0] == pytest.approx(-plus.touch_points[0], abs=1e-4)


def test_power_outside_buy_side(power_book):
    assert power_book.reserved_interval()[1] == pytest.approx(0.007, abs=1e-3)
    assert power_book.plateau[1] == pytest.approx(0.5105, abs=1e-3)
    plus = power_book.side_states[1]
    assert plus.touch_points[0] == pytest.approx(0.0159, abs=1e-3)
    assert plus.exit_point == pytest.approx(0.4761, abs=1e-3)
    assert power_book.spread.t_plus == pytest.approx(0.0281, abs=1e-3)


def test_power_outside_regions(power_book):
    ((ex_lo, ex_hi),) = power_book.intervals_of(RegionLabel.EXCLUDED)
    assert ex_lo == pytest.approx(0.0159, abs=1e-3)
    assert ex_hi == pytest.approx(0.1667, abs=1e-3)
    ((m_lo, m_hi),) = power_book.intervals_of(RegionLabel.MATCHED)
    assert m_lo == pytest.approx(ex_hi)
    assert m_hi == pytest.approx(0.4761, abs=1e-3)
    assert [profitable for _, _, profitable in power_book.side_states[1].binding_intervals] == [False, True]


def test_power_outside_sell_side_unchanged(power_book, tapered_book):
    minus = power_book.side_states[0]
    assert minus.benchmark
    assert not power_book.flags["binding_minus"]
    assert power_book.reserved_interval()[0] == pytest.approx(tapered_book.reserved_interval()[0], abs=1e-8)
    assert power_book.spread.t_minus == pytest.approx(-1.359, abs=5e-3)
    assert power_book.dealer_profit < tapered_book.dealer_profit


def test_power_outside_welfare(power_book):
    welfare = power_book.welfare()
    assert np.all(welfare >= power_book.u0 - 1e-7)
    excluded = power_book.mask(RegionLabel.EXCLUDED)
    assert np.any(excluded)
    np.testing.assert_allclose(welfare[excluded], power_book.u0[excluded])
    assert np.all(power_book.per_type_profit[excluded] == 0.0)
    assert np.all(power_book.gamma_reporting_only == excluded)


def test_extend_over_excluded(power_book):
    ((a, b),) = power_book.intervals_of(RegionLabel.EXCLUDED)
    ext = extend_over_excluded(power_book, (a, b))
    assert len(ext.lines) == 2
    assert a < ext.crossing < b
    assert np.all(ext.v <= power_book.spec.u0(ext.theta, power_book.pi) + 1e-9)
    assert np.all(np.diff(ext.q) >= 0)


def test_hard_exclusion():
    sol = solve_cn(hard_exclusion(), PricePair(), BOOK_CFG)
    assert sol.plateau == pytest.approx((0.25, 0.75), abs=1e-6)
    lo0, hi0 = sol.reserved_interval()
    assert lo0 == pytest.approx(-0.25, abs=1e-6)
    assert hi0 == pytest.approx(0.25, abs=1e-6)
    assert float(np.interp(-0.4, sol.grid, sol.v)) == pytest.approx(0.0225, abs=1e-5)
    np.testing.assert_allclose(sol.intervals_of(RegionLabel.EXCLUDED), [(-1.0, -0.5), (0.5, 1.0)], atol=1e-9)
    assert np.all(np.isinf(sol.welfare()[np.abs(sol.grid) > 0.5]))


def test_binding_structure_one_sided(power_spec):
    assert detect_binding_structure(power_spec, EXAMPLE_PRICE, Side.NEGATIVE, BOOK_CFG) == []
    intervals = detect_binding_structure(power_spec, EXAMPLE_PRICE, Side.POSITIVE, BOOK_CFG)
    kinds = {iv.kind for iv in intervals}
    assert {BindingClass.UNPROFITABLE_MATCH, BindingClass.PROFITABLE_MATCH} <= kinds
    assert intervals[0].kind == BindingClass.NO_BIND
    for first, second in zip(intervals[:-1], intervals[1:]):
        assert first.hi == second.lo
    assert intervals[-1].hi == 1.0


def test_solve_side_without_outside_option(power_spec):
    side = solve_side(power_spec, EXAMPLE_PRICE, Side.NEGATIVE, BOOK_CFG)
    assert side.state.benchmark
    assert side.state.gamma == 0.0
    assert side.state.to_dict()["side"] == "negative"
    assert side.segments[0].label == RegionLabel.FULL_SERVICE


def test_trivial_outside_is_benchmark(tapered_spec):
    assert solve_cn(tapered_spec, PricePair(), BOOK_CFG) is solve_benchmark(tapered_spec, BOOK_CFG.benchmark)


def test_solve_cn_is_cached(power_spec, power_book):
    assert solve_cn(power_spec, EXAMPLE_PRICE, BOOK_CFG) is solve_cn(power_spec, EXAMPLE_PRICE, BOOK_CFG)


def test_inadmissible_price():
    spec = tapered().with_outside(DarkPoolQuadraticOutside(alpha=1.0, p=0.5, kappa=0.1))
    with pytest.raises(ParameterError):
        solve_cn(spec, PricePair.scalar(1.0), BOOK_CFG)


@pytest.mark.parametrize("kwargs", [{"binding_scan_n": 10}, {"touch_tol": 0.0}, {"gamma_scan_n": 2}])
def test_cn_config_validation(kwargs):
    with pytest.raises(ParameterError):
        CnConfig(**kwargs)


@pytest.mark.parametrize("p_ask", [0.02809839290242869, 0.0158, 0.1, 0.3])
def test_power_outside_small_ask(power_spec, p_ask):
    sol = solve_cn(power_spec, PricePair(0.0, p_ask), BOOK_CFG)
    report = sol.check_invariants()
    assert report.ok, report.summary()
    assert set(sol.labels) <= {label.value for label in RegionLabel}


def test_power_outside_first_equilibrium_iterate(power_spec):
    sol = solve_cn(power_spec, PricePair(0.0, 0.02809839290242869), BOOK_CFG)
    assert sol.reserved_interval()[1] == pytest.approx(0.0040, abs=1e-3)
    assert sol.plateau[1] == pytest.approx(0.5061, abs=1e-3)
    ex_hi = sol.intervals_of(RegionLabel.EXCLUDED)[-1][1]
    assert ex_hi == pytest.approx(0.4872, abs=2e-3)


def test_mirrored_outside_classifies_alike(tapered_spec):
    spec = tapered_spec.with_outside(AffinePiecesOutside(-0.9, 0.9, kappa=0.5))
    minus, plus = solve_cn(spec, PricePair(), BOOK_CFG).side_states
    assert minus.contact_kind == plus.contact_kind
    assert minus.gamma == pytest.approx(1.0 - plus.gamma, abs=1e-6)


def test_cached_book_matches_fresh_solve(power_spec):
    cached = solve_cn(power_spec, EXAMPLE_PRICE, BOOK_CFG)
    v, q = cached.v.copy(), cached.q.copy()
    clear_cache()
    fresh = solve_cn(power_spec, EXAMPLE_PRICE, BOOK_CFG)
    assert fresh is not cached
    np.testing.assert_array_equal(fresh.v, v)
    np.testing.assert_array_equal(fresh.q, q)
    assert np.all(fresh.per_type_profit[fresh.mask(RegionLabel.EXCLUDED)] == 0.0)
