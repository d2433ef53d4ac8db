"""Exception hierarchy shared by all modules."""

from __future__ import annotations

import numpy as np


class BLError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(BLError, ValueError):
    """Shapes or map counts do not fit together."""


class DomainError(BLError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class PreconditionError(BLError, ValueError):
    """A documented precondition does not hold."""


class InvertibilityError(BLError, ValueError):
    """A transform that must be invertible is numerically singular."""


class SingularError(BLError, ArithmeticError):
    """A quadratic form is numerically singular.

    ``null_space`` holds an orthonormal basis (columns) of the near-null
    directions so callers can inspect what went wrong.
    """

    def __init__(self, message: str, null_space: np.ndarray | None = None):
        super().__init__(message)
        self.null_space = null_space


class NotExtremalError(BLError, ValueError):
    """A gaussian input is not stationary within tolerance."""


class NotApplicableError(BLError, ValueError):
    """The analysis does not apply, e.g. the scaling condition fails."""


class BudgetError(BLError, ValueError):
    """The request would exceed a hard enumeration cap."""


class UnsupportedError(BLError, NotImplementedError):
    """The input is valid but outside what the implementation handles."""


class DatumParseError(BLError, ValueError):
    """Malformed JSON input. ``path`` locates the offending element."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
