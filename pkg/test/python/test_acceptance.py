#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families import AffinePiecesOutside, PowerPlusOutside, PricePair
from screenbook.oracle import OracleConfig, oracle_compare, oracle_solve
from screenbook.darkpool import DarkPoolParams, dp_solve, price_bound
from screenbook.benchmark import solve_benchmark
from screenbook.book import RegionLabel, welfare_compare
from screenbook.screening import solve_cn
from conftest import BOOK_CFG, EXAMPLE_PRICE, affine, mussa_rosen, power, tapered
import numpy as np
import pytest


def _random_pools(count, seed=0):
    rng = np.random.default_rng(seed)
    pools = []
    for _ in range(count):
        alpha = rng.uniform(0.5, 2.0)
        params = DarkPoolParams(
            alpha=alpha,
            beta=rng.uniform(0.3, 2.0),
            eps=rng.uniform(0.0, 1.5 * alpha),
            p=rng.uniform(0.05, 0.9),
            kappa=rng.uniform(0.02, 0.3),
        )
        pi = rng.uniform(-0.5, 0.5) * price_bound(params)
        pools.append((params, pi))
    return pools


def _random_outside(rng):
    if rng.random() < 0.5:
        outside = AffinePiecesOutside(-rng.uniform(0.95, 1.0), rng.uniform(0.95, 1.0), kappa=rng.uniform(0.5, 0.54))
        return outside, PricePair()
    outside = PowerPlusOutside(rng.uniform(1.1, 1.4), 0.0, rng.uniform(0.25, 0.4), kappa=rng.uniform(5e-4, 2e-3))
    return outside, EXAMPLE_PRICE


def _random_problems(count, seed):
    rng = np.random.default_rng(seed)
    problems = []
    for _ in range(count):
        outside, pi = _random_outside(rng)
        problems.append((tapered().with_outside(outside), pi))
    return problems


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_price_pairs(power_spec, seed):
    rng = np.random.default_rng(seed)
    pi = PricePair(-rng.uniform(0.0, 0.5), rng.uniform(0.02, 0.9))
    sol = solve_cn(power_spec, pi, BOOK_CFG)
    report = sol.check_invariants()
    assert report.ok, report.summary()
    assert np.all(sol.welfare() >= sol.u0 - 1e-7)


@pytest.mark.slow
@pytest.mark.parametrize("params,pi", _random_pools(20))
def test_random_dark_pools(params, pi):
    report = dp_solve(params, pi, BOOK_CFG)
    assert report.book.check_invariants().ok, report.book.check_invariants().summary()
    assert report.contained, report.to_dict()
    assert report.boundary_error < 1e-6
    assert report.to_dict()["contained"] is True


@pytest.mark.slow
@pytest.mark.parametrize("spec,pi", _random_problems(10, seed=0))
def test_crossing_network_dominates_benchmark_on_random_problems(spec, pi):
    bench = solve_benchmark(spec, BOOK_CFG.benchmark)
    sol = solve_cn(spec, pi, BOOK_CFG)
    report = welfare_compare(bench, sol, tol=1e-6)
    assert report.all_hold, report.to_dict()


def test_power_outside_dominates_benchmark(tapered_book, power_book):
    report = welfare_compare(tapered_book, power_book, tol=1e-6)
    assert report.all_hold, report.to_dict()
    assert power_book.spread.width < tapered_book.spread.width


def _oracle_cases():
    cases = [
        pytest.param(mussa_rosen(), PricePair(), id="mussa_rosen"),
        pytest.param(tapered(), PricePair(), id="tapered"),
        pytest.param(affine(), PricePair(), id="affine"),
        pytest.param(power(), EXAMPLE_PRICE, id="power"),
    ]
    for k, (spec, pi) in enumerate(_random_problems(2, seed=7)):
        cases.append(pytest.param(spec, pi, id=f"random{k}"))
    return cases


@pytest.mark.slow
@pytest.mark.parametrize("spec,pi", _oracle_cases())
def test_oracle_gap_shrinks_with_the_grid(spec, pi):
    sol = solve_cn(spec, pi, BOOK_CFG)
    comparisons = [oracle_compare(sol, oracle_solve(spec, pi, OracleConfig(n_grid=n))) for n in (1001, 2001, 4001)]
    assert comparisons[0].passed, comparisons[0].to_dict()
    assert all(c.v_sup <= c.v_tol for c in comparisons)
    gaps = [abs(c.objective_gap) for c in comparisons]
    assert gaps[2] <= gaps[0] + 1e-9


@pytest.mark.slow
def test_oracle_finds_the_excluded_interval(power_spec, power_book):
    ora = oracle_solve(power_spec, EXAMPLE_PRICE, OracleConfig(n_grid=1001))
    assert RegionLabel.EXCLUDED.value in set(ora.labels)
    comparison = oracle_compare(power_book, ora)
    assert comparison.passed, comparison.to_dict()
