"""
Exceptions for covthresh.
"""


class CovThreshError(Exception):
    """
    Base class for every error raised by covthresh.

    Attributes:
        message (str): The error message.
    """

    def __init__(self, message):
        self.message = message
        super().__init__(message)


class InputError(CovThreshError, ValueError):
    """Malformed input: unreadable files, non-finite entries, bad shapes or parameters."""


class DimensionMismatchError(InputError):
    """Two objects that must share a dimension do not."""


class NotPositiveDefiniteError(CovThreshError):
    """A Cholesky factorization met a non-positive pivot."""


class InfeasibleError(CovThreshError):
    """Some S_ii + lambda <= 0, so no positive definite W fits the constraints."""


class DegenerateDrawError(CovThreshError):
    """The synthetic generator could not plant its partition within the allowed re-draws."""


class CovThreshParserError(CovThreshError):
    """
    Exception raised for command line errors in covthresh.

    This exception is meant to replace parser.error() calls in order to make
    the code more testable. When the script is run directly, we can catch this
    exception and pass it to parser.error(). When imported as a module for testing,
    we can catch and assert against this exception.
    """
