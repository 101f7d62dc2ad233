"""
Error kinds raised by the smoothing library.

Library code raises these; only the harness turns them into exit codes.
"""

from typing import List, Optional


class AgsError(Exception):
    """Base class for every error raised by the ags package."""


class InvalidMatrix(AgsError, ValueError):
    """Matrix is not square, not finite, or otherwise unusable."""


class NotPositiveDefinite(AgsError, ValueError):
    """Smallest eigenvalue falls below the positive-definiteness floor."""


class DimMismatch(AgsError, ValueError):
    """Two operands disagree on their dimension."""


class BadDimension(AgsError, ValueError):
    """Dimension not supported by a benchmark function."""


class UnknownFunction(AgsError, ValueError):
    """Benchmark name not in the catalogue."""


class DimTooLarge(AgsError, ValueError):
    """Tensor quadrature requested beyond the supported dimension."""


class EmptySchedule(AgsError, ValueError):
    """A certificate was asked for an empty smoothing sequence."""


class BadStep(AgsError, ValueError):
    """Step size or learning rate is not strictly positive."""


class BadBounds(AgsError, ValueError):
    """Spectrum clamp with floor above cap (or non-positive floor)."""


class NonFiniteGradient(AgsError, ArithmeticError):
    """Gradient handed to an update rule contains NaN or inf."""


class DegenerateDenominator(AgsError, ArithmeticError):
    """Adam denominator vanished where the first moment does not."""


class AdaptationFailed(AgsError, RuntimeError):
    """CMA update could not be formed from the supplied samples."""


class RunAborted(AgsError, RuntimeError):
    """
    An optimizer run stopped before its horizon because a step failed.

    Attributes:
        records: RunRecords produced before the failure
        cause: The step error that stopped the run
    """

    def __init__(self, message: str, records: Optional[List] = None, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.records = list(records or [])
        self.cause = cause
