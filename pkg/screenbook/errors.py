#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

from typing import Any, Dict, Optional, Sequence


class ScreenbookError(RuntimeError):
    """Base class of every error raised by the library."""


class ConfigError(ScreenbookError, ValueError):
    """Problem configuration cannot be parsed or does not match the schema."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        key: Optional[str] = None,
        line: Optional[int] = None,
    ):
        """Initialize the ConfigError class.

        Args:
            message (str): human readable description
            path (Optional[str], optional): configuration file. Defaults to None.
            key (Optional[str], optional): dotted key path of the offending entry. Defaults to None.
            line (Optional[int], optional): line of the offending entry. Defaults to None.
        """
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        if key is not None:
            message = f"[{key}] {message}"
        super().__init__(location + message)
        self.path = path
        self.key = key
        self.line = line


class ParameterError(ScreenbookError, ValueError):
    """Invalid family or solver parameters."""


class ModelEvaluationError(ScreenbookError):
    """A model function returned a non-finite value."""

    def __init__(self, message: str, theta: float):
        super().__init__(f"{message} (theta={theta!r})")
        self.theta = theta


class QuantityRangeError(ScreenbookError):
    """A quantity inversion could not be bracketed inside the admissible range."""


class KinkError(ScreenbookError):
    """The outside option is not differentiable at the requested type."""

    def __init__(self, theta: float):
        super().__init__(f"outside option has a kink at theta={theta!r}")
        self.theta = theta


class BracketError(ScreenbookError):
    """No sign change of the target function on the bracket."""

    def __init__(self, lo: float, hi: float, g_lo: float, g_hi: float):
        super().__init__(
            f"no sign change on [{lo!r}, {hi!r}]: g(lo)={g_lo!r}, g(hi)={g_hi!r}"
        )
        self.lo = lo
        self.hi = hi
        self.values = (g_lo, g_hi)


class QuadratureError(ScreenbookError):
    """Adaptive quadrature exhausted its subdivision budget."""

    def __init__(self, message: str, partial: float, abs_error: float):
        super().__init__(f"{message} (partial={partial!r}, error~{abs_error!r})")
        self.partial = partial
        self.abs_error = abs_error


class GridError(ScreenbookError):
    """Two solutions cannot be brought onto a common grid."""


class SolverError(ScreenbookError):
    """A solver could not produce a book."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StructureError(SolverError):
    """The binding set has a topology the side solver does not handle."""


class OracleError(SolverError):
    """The direct optimizer did not converge."""

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class DegenerateReservedSet(ScreenbookError, UserWarning):
    """The reserved set touches the boundary of the type space.

    Emitted as a warning by default; raised when strict solving is requested, in
    which case ``solution`` holds the one-sided book that was still computed.
    """

    def __init__(self, message: str, solution: Any = None):
        super().__init__(message)
        self.solution = solution


class DegeneracyError(ScreenbookError):
    """A closed-form expression has a vanishing denominator."""


def attach_history(error: ScreenbookError, history: Sequence[Any]) -> ScreenbookError:
    """Attach the partial iterate history to an error raised mid-iteration.

    Args:
        error (ScreenbookError): the error being propagated
        history (Sequence[Any]): iterates computed before the failure

    Returns:
        ScreenbookError: the same error, for re-raising
    """
    setattr(error, "history", list(history))
    return error
