#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.model import CostSpec, ModelSpec, PreferenceSpec, TypeSpace
from screenbook.families import (
    AffinePiecesOutside,
    HardExclusionOutside,
    PiecewiseLinearDensity,
    PolynomialFunction,
    PowerPlusOutside,
    PricePair,
    UniformDensity,
)
from screenbook.screening import clear_cache as clear_book_cache
from screenbook.oracle import clear_cache as clear_oracle_cache
from screenbook.benchmark import BenchmarkConfig, solve_benchmark
from screenbook.screening import CnConfig, solve_cn
import warnings
import pytest

BOOK_CFG = CnConfig(benchmark=BenchmarkConfig(grid_n=801))
EXAMPLE_PRICE = PricePair(0.0, 0.5)


def mussa_rosen(r: float = 1.0) -> ModelSpec:
    return ModelSpec(
        theta=TypeSpace(-r, r),
        density=UniformDensity(-r, r),
        prefs=PreferenceSpec(PolynomialFunction((0.0, 1.0)), PolynomialFunction((0.0,))),
        cost=CostSpec(PolynomialFunction((0.0, 0.0, 0.5))),
    )


def tapered() -> ModelSpec:
    return ModelSpec(
        theta=TypeSpace(-1.0, 1.0),
        density=PiecewiseLinearDensity((-1.0, 0.0, 1.0), (0.25, 0.75, 0.25)),
        prefs=PreferenceSpec(PolynomialFunction((0.0, 1.0)), PolynomialFunction((0.0, 0.0, 0.25))),
        cost=CostSpec(PolynomialFunction((0.0, 0.0, 0.5))),
    )


def affine() -> ModelSpec:
    return tapered().with_outside(AffinePiecesOutside(-0.975, 0.975, kappa=0.52))


def power() -> ModelSpec:
    return tapered().with_outside(PowerPlusOutside(1.2, 0.0, 1.0 / 3.0, kappa=0.001))


def hard_exclusion(r: float = 1.0, r0: float = 0.5) -> ModelSpec:
    return mussa_rosen(r).with_outside(HardExclusionOutside(-r0, r0))


@pytest.fixture(scope="session")
def mussa_rosen_spec():
    return mussa_rosen()


@pytest.fixture(scope="session")
def tapered_spec():
    return tapered()


@pytest.fixture(scope="session")
def affine_spec():
    return affine()


@pytest.fixture(scope="session")
def power_spec():
    return power()


@pytest.fixture(scope="session")
def tapered_book(tapered_spec):
    return solve_benchmark(tapered_spec, BOOK_CFG.benchmark)


@pytest.fixture(scope="session")
def affine_book(affine_spec):
    return solve_cn(affine_spec, PricePair(), BOOK_CFG)


@pytest.fixture(scope="session")
def power_book(power_spec):
    return solve_cn(power_spec, EXAMPLE_PRICE, BOOK_CFG)


@pytest.fixture(autouse=True)
def run_before_and_after_tests():
    """Fixture to execute asserts before and after a test is run"""
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield
    clear_book_cache()
    clear_oracle_cache()
