#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.checks import CheckOutcome, RunContext, evaluate_checks, extract, parse_quantity
from screenbook.config import CheckSpec, ProblemConfig, load_config, resolve_config
from screenbook.errors import ConfigError
from conftest import BOOK_CFG, hard_exclusion, mussa_rosen
from dataclasses import replace
import pytest
import math


@pytest.mark.parametrize(
    "quantity,expected",
    [
        ("cn.t_plus", ("cn", "t_plus", None, None)),
        ("cn.gamma(0.25)", ("cn", "gamma", 0.25, None)),
        ("cn.v(-0.4)", ("cn", "v", -0.4, None)),
        ("equilibrium.pi_plus[1]", ("equilibrium", "pi_plus", None, 1)),
        ("equilibrium.pi_plus[-1]", ("equilibrium", "pi_plus", None, -1)),
        (" validation.ok ", ("validation", "ok", None, None)),
    ],
)
def test_parse_quantity(quantity, expected):
    assert parse_quantity(quantity) == expected


@pytest.mark.parametrize("quantity", ["t_plus", "cn.", "cn.t_plus[1", "cn.gamma(x)", "cn.t_plus.width"])
def test_parse_quantity_rejects(quantity):
    with pytest.raises(ConfigError):
        parse_quantity(quantity)


@pytest.fixture
def mussa_rosen_context():
    return RunContext(ProblemConfig(spec=mussa_rosen(), solver=BOOK_CFG))


def test_extract_book_fields(mussa_rosen_context):
    ctx = mussa_rosen_context
    assert extract(ctx, "benchmark.theta_hi0") == pytest.approx(0.5, abs=1e-8)
    assert extract(ctx, "benchmark.t_minus") == pytest.approx(-1.0, abs=1e-8)
    assert extract(ctx, "benchmark.gamma(0.2)") == pytest.approx(0.7, abs=1e-8)
    assert extract(ctx, "cn.v(0.75)") == pytest.approx(0.0625, abs=1e-6)
    assert extract(ctx, "cn.excluded_count") == 0.0
    assert extract(ctx, "cn.invariant_failures") == 0.0
    assert math.isnan(extract(ctx, "cn.touch_plus"))
    assert math.isnan(extract(ctx, "cn.excluded_lo"))
    assert extract(ctx, "validation.ok") == 1.0


def test_extract_reuses_results(mussa_rosen_context):
    ctx = mussa_rosen_context
    extract(ctx, "cn.t_plus")
    assert ctx.cn is ctx.cn
    assert ctx.cn is ctx.benchmark


def test_extract_hard_exclusion():
    ctx = RunContext(ProblemConfig(spec=hard_exclusion(), solver=BOOK_CFG))
    assert extract(ctx, "cn.excluded_count") == 2.0
    assert extract(ctx, "cn.excluded_hi[0]") == pytest.approx(-0.5)
    assert extract(ctx, "cn.excluded_lo[1]") == pytest.approx(0.5)
    assert math.isnan(extract(ctx, "cn.excluded_lo[2]"))


@pytest.mark.parametrize("quantity", ["cn.spread_colour", "cn.w(0.1)", "weather.t_plus", "darkpool.contained"])
def test_extract_unknown(mussa_rosen_context, quantity):
    with pytest.raises(ConfigError):
        extract(mussa_rosen_context, quantity)


def test_check_outcome():
    check = CheckSpec("best ask", "cn.t_plus", 1.0, 1e-3)
    assert CheckOutcome(check, 1.0005).passed
    assert not CheckOutcome(check, 1.01).passed
    assert not CheckOutcome(check, math.nan).passed
    assert CheckOutcome(check, 1.0).to_dict() == {
        "name": "best ask",
        "quantity": "cn.t_plus",
        "expected": 1.0,
        "actual": 1.0,
        "tol": 1e-3,
        "passed": True,
    }


def test_evaluate_bundled_checks():
    config = load_config(resolve_config("hard_exclusion"))
    config = replace(config, solver=BOOK_CFG)
    outcomes = evaluate_checks(RunContext(config))
    assert len(outcomes) == len(config.checks)
    assert all(o.passed for o in outcomes), [o.to_dict() for o in outcomes if not o.passed]


def test_evaluate_explicit_checks(mussa_rosen_context):
    checks = (CheckSpec("wrong", "benchmark.t_plus", 2.0, 1e-6),)
    (outcome,) = evaluate_checks(mussa_rosen_context, checks)
    assert not outcome.passed
    assert outcome.actual == pytest.approx(1.0, abs=1e-8)
