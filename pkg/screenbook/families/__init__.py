#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#
from .base import PolynomialFunction, PricePair, invert_increasing
from .density import DensityFamily, UniformDensity, PiecewiseLinearDensity, TabulatedDensity
from .outside import (
    OutsideOptionFamily,
    TrivialOutside,
    PowerPlusOutside,
    AffinePiecesOutside,
    DarkPoolQuadraticOutside,
    HardExclusionOutside,
    TabulatedOutside,
)
from .factory import build_density, build_outside, DENSITY_FAMILIES, OUTSIDE_FAMILIES

__all__ = [
    "PolynomialFunction",
    "PricePair",
    "invert_increasing",
    "DensityFamily",
    "UniformDensity",
    "PiecewiseLinearDensity",
    "TabulatedDensity",
    "OutsideOptionFamily",
    "TrivialOutside",
    "PowerPlusOutside",
    "AffinePiecesOutside",
    "DarkPoolQuadraticOutside",
    "HardExclusionOutside",
    "TabulatedOutside",
    "build_density",
    "build_outside",
    "DENSITY_FAMILIES",
    "OUTSIDE_FAMILIES",
]
