#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from screenbook.families.outside import (
    AffinePiecesOutside,
    DarkPoolQuadraticOutside,
    HardExclusionOutside,
    OutsideOptionFamily,
    PowerPlusOutside,
    TabulatedOutside,
    TrivialOutside,
)
from screenbook.families.density import (
    DensityFamily,
    PiecewiseLinearDensity,
    TabulatedDensity,
    UniformDensity,
)
from screenbook.errors import ParameterError
from typing import Any, Dict, Mapping, Type
import inspect

DENSITY_FAMILIES: Dict[str, Type[DensityFamily]] = {
    "uniform": UniformDensity,
    "piecewise_linear": PiecewiseLinearDensity,
    "tabulated": TabulatedDensity,
}

OUTSIDE_FAMILIES: Dict[str, Type[OutsideOptionFamily]] = {
    "trivial": TrivialOutside,
    "power_plus": PowerPlusOutside,
    "affine_pieces": AffinePiecesOutside,
    "darkpool_quadratic": DarkPoolQuadraticOutside,
    "hard_exclusion": HardExclusionOutside,
    "tabulated": TabulatedOutside,
}


def _build(registry: Mapping[str, Type], family: str, kind: str, params: Mapping[str, Any]):
    if kind not in registry:
        raise ParameterError(
            f"unknown {family} kind '{kind}', expected one of {sorted(registry)}"
        )
    cls = registry[kind]
    accepted = set(inspect.signature(cls).parameters)
    unknown = sorted(set(params) - accepted)
    if unknown:
        raise ParameterError(f"{family} '{kind}' does not take {unknown}")
    arguments = {
        name: tuple(value) if isinstance(value, (list, tuple)) else value
        for name, value in params.items()
    }
    try:
        return cls(**arguments)
    except TypeError as exc:
        raise ParameterError(f"{family} '{kind}': {exc}") from exc


def build_density(kind: str, params: Mapping[str, Any]) -> DensityFamily:
    """Instantiate a density family from its configuration.

    Args:
        kind (str): family name
        params (Mapping[str, Any]): keyword parameters

    Raises:
        ParameterError: unknown family, unknown or missing parameters

    Returns:
        DensityFamily: the density
    """
    return _build(DENSITY_FAMILIES, "density", kind, params)


def build_outside(kind: str, params: Mapping[str, Any]) -> OutsideOptionFamily:
    """Instantiate an outside option family from its configuration.

    Args:
        kind (str): family name
        params (Mapping[str, Any]): keyword parameters, ``kappa`` included

    Raises:
        ParameterError: unknown family, unknown or missing parameters

    Returns:
        OutsideOptionFamily: the outside option
    """
    return _build(OUTSIDE_FAMILIES, "outside option", kind, params)
