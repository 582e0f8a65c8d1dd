"""Exception types shared across the package."""


class AccelerationError(Exception):
    """Base class for all aamix errors."""


class NonFiniteError(AccelerationError):
    """A vector or matrix contains NaN or Inf."""


class EmptyMatrixError(AccelerationError):
    """A matrix operation received zero columns."""


class DimensionMismatchError(AccelerationError):
    """Vector or matrix dimensions are inconsistent."""


class InsufficientHistoryError(AccelerationError):
    """The history buffer holds no difference columns yet."""


class EmptyWindowError(AccelerationError):
    """The iterate window holds no iterates."""


class InsufficientSamplesError(AccelerationError):
    """Too few iterates in the window to estimate a variance."""


class OperatorFailureError(AccelerationError):
    """A fixed-point operator failed to evaluate."""


class EmptyFileError(AccelerationError):
    """A dataset file contains no data rows."""


class ParseError(AccelerationError):
    """A dataset cell could not be parsed. Carries 1-based row/column."""

    def __init__(self, message: str, row: int, col: int):
        super().__init__(f"{message} (row {row}, column {col})")
        self.row = row
        self.col = col


class ConfigError(AccelerationError):
    """An experiment configuration failed validation.

    ``path`` is the dotted location of the offending field, e.g.
    ``"acceleration.beta"``.
    """

    def __init__(self, message: str, path: str = ""):
        prefix = f"{path}: " if path else ""
        super().__init__(prefix + message)
        self.path = path
