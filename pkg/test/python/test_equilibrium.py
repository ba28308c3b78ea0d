#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.equilibrium import (
    EQUILIBRIUM_COLUMNS,
    EquilibriumConfig,
    EquilibriumMode,
    EquilibriumStatus,
    check_monotone_map,
    iterate_equilibrium,
    map_price,
    verify_fixed_point,
    write_equilibrium_csv,
)
from screenbook.families import PricePair
from screenbook.errors import ParameterError
from conftest import BOOK_CFG, EXAMPLE_PRICE, power
import numpy as np
import pytest
import math
import csv

POWER_CFG = EquilibriumConfig(pi0=EXAMPLE_PRICE, max_iters=20, solver=BOOK_CFG)


@pytest.fixture(scope="module")
def power_result():
    return iterate_equilibrium(power(), POWER_CFG, verify=True)


@pytest.mark.parametrize("i,pi_plus", [(0, 0.5), (1, 0.0281), (2, 0.0161), (3, 0.0158)])
def test_price_iterates(power_result, i, pi_plus):
    assert power_result.iterates[i].pi.plus == pytest.approx(pi_plus, abs=1e-3)
    assert power_result.iterates[i].pi.minus == 0.0


@pytest.mark.parametrize(
    "i,theta_hi0,gamma_plus,excluded_hi",
    [(0, 0.0070, 0.5105, 0.1667), (1, 0.0040, 0.5061, 0.4872)],
)
def test_iterate_books(power_result, i, theta_hi0, gamma_plus, excluded_hi):
    row = power_result.iterates[i]
    assert row.theta_hi0 == pytest.approx(theta_hi0, abs=1e-3)
    assert row.gamma_plus == pytest.approx(gamma_plus, abs=1e-3)
    assert row.excluded[1] == pytest.approx(excluded_hi, abs=1e-3)


def test_exclusion_grows_along_the_iteration(power_result):
    assert power_result.iterates[2].excluded[1] == pytest.approx(0.4954, abs=1e-3)
    ends = [row.excluded[1] for row in power_result.iterates]
    assert all(b >= a - 1e-4 for a, b in zip(ends[:-1], ends[1:]))


def test_convergence(power_result):
    assert power_result.converged
    assert power_result.status == EquilibriumStatus.CONVERGED
    assert power_result.pi_star.plus == pytest.approx(0.015, abs=1e-3)
    assert not power_result.damped
    assert math.isinf(power_result.iterates[0].change)
    assert power_result.iterates[-1].change <= POWER_CFG.sup_norm_tol
    assert power_result.verification.verified
    assert power_result.to_dict()["status"] == "converged"


def test_verify_fixed_point_off_equilibrium():
    residual = verify_fixed_point(power(), EXAMPLE_PRICE, EquilibriumMode.BEST_BID_ASK, POWER_CFG)
    assert residual.image.plus == pytest.approx(0.0281, abs=1e-3)
    assert residual.residual == pytest.approx(0.5 - residual.image.plus)
    assert not residual.verified
    assert residual.tol == pytest.approx(1e-4)


def test_damped_iteration():
    cfg = EquilibriumConfig(pi0=EXAMPLE_PRICE, max_iters=2, damping=0.5, solver=BOOK_CFG)
    result = iterate_equilibrium(power(), cfg)
    assert result.status == EquilibriumStatus.MAX_ITERS
    assert result.damped and result.pi_star is None
    assert result.iterates[1].pi.plus == pytest.approx(0.25 + 0.5 * 0.0281, abs=1e-3)


def test_map_price_modes(affine_spec, affine_book):
    # the affine outside option does not react to the price
    assert map_price(affine_spec, PricePair(), affine_book, EquilibriumMode.BEST_BID_ASK) == PricePair()
    mid = map_price(affine_spec, PricePair(), affine_book, EquilibriumMode.MID_QUOTE)
    assert mid.minus == mid.plus == pytest.approx(1.282, abs=5e-3)


def test_map_price_reacting_side(power_spec, power_book):
    image = map_price(power_spec, EXAMPLE_PRICE, power_book, EquilibriumMode.BEST_BID_ASK)
    assert image.minus == 0.0
    assert image.plus == pytest.approx(power_book.spread.t_plus)


def test_check_monotone_map(power_spec):
    report = check_monotone_map(power_spec, [0.1, 0.3, 0.5], BOOK_CFG)
    assert report.monotone and not report.informational
    assert report.prices[0] == PricePair(0.0, 0.1)
    np.testing.assert_allclose(report.t_minus, report.t_minus[0])
    assert report.to_dict()["monotone"] is True


def test_write_equilibrium_csv(tmp_path, power_result):
    path = tmp_path / "equilibrium.csv"
    write_equilibrium_csv(power_result, str(path))
    with open(path) as fp:
        rows = list(csv.reader(fp))
    assert rows[0] == EQUILIBRIUM_COLUMNS
    assert len(rows) == len(power_result.iterates) + 1
    assert rows[1][0] == "0" and rows[1][2] == "0.5"
    assert rows[1][EQUILIBRIUM_COLUMNS.index("change")] == "inf"


@pytest.mark.parametrize(
    "kwargs", [{"sup_norm_tol": 0.0}, {"max_iters": 0}, {"cycle_window": 1}, {"damping": 0.0}, {"damping": 1.5}]
)
def test_equilibrium_config_validation(kwargs):
    with pytest.raises(ParameterError):
        EquilibriumConfig(**kwargs)
