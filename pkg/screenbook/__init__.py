#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from .model import ModelSpec, TypeSpace, PreferenceSpec, CostSpec, validate
from .families import PricePair, PolynomialFunction
from .benchmark import solve_benchmark, BenchmarkConfig
from .screening import solve_cn, CnConfig
from .equilibrium import iterate_equilibrium, EquilibriumConfig, EquilibriumMode
from .darkpool import DarkPoolParams, dp_solve, dp_equilibrium
from .oracle import oracle_solve, oracle_compare, OracleConfig
from .config import load_config, parse_config
from .book import BookSolution
from ._version import __version__


__all__ = [
    "ModelSpec",
    "TypeSpace",
    "PreferenceSpec",
    "CostSpec",
    "validate",
    "PricePair",
    "PolynomialFunction",
    "solve_benchmark",
    "BenchmarkConfig",
    "solve_cn",
    "CnConfig",
    "iterate_equilibrium",
    "EquilibriumConfig",
    "EquilibriumMode",
    "DarkPoolParams",
    "dp_solve",
    "dp_equilibrium",
    "oracle_solve",
    "oracle_compare",
    "OracleConfig",
    "load_config",
    "parse_config",
    "BookSolution",
    "__version__",
]
