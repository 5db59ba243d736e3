"""Exception and warning types raised across the package."""

import numpy as np


class CosparseError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(CosparseError, ValueError):
    """Operand shapes do not agree."""


class NonFiniteError(CosparseError, ValueError):
    """An input contains NaN or Inf."""


class RankDeficientError(CosparseError, np.linalg.LinAlgError):
    """A matrix that must have full rank does not."""


class ZeroSignalError(CosparseError):
    """The requested cosparsity only admits the zero signal."""


class EnumerationTooLargeError(CosparseError):
    """A brute-force enumeration exceeds its size guard."""


class ConvergenceWarning(UserWarning):
    """An iterative method stopped before reaching its tolerance."""
