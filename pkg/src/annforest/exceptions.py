"""Error types raised by annforest.

Every error raised on purpose derives from AnnForestError so callers can
catch one base class.  Subclasses also inherit the closest builtin so that
generic handlers (``except ValueError``) keep working.
"""


class AnnForestError(Exception):
    """Base class for all annforest errors."""


class ParameterError(AnnForestError, ValueError):
    """A constructor / function argument is out of its documented range."""


class DataValidationError(AnnForestError, ValueError):
    """Input data is unusable: wrong rank, empty, non-finite, bad dtype."""


class DimensionMismatchError(AnnForestError, ValueError):
    """Query dimensionality does not match the indexed dataset."""


class FileFormatError(AnnForestError, ValueError):
    """A file on disk does not follow the declared binary layout."""


class IndexMismatchError(AnnForestError, ValueError):
    """A saved index does not belong to the dataset it is being used with."""
