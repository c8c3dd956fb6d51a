"""Exception types shared across the package."""


class ClmsepError(Exception):
    """Base class for all package errors."""


class DataError(ClmsepError, ValueError):
    """Malformed triangle data or triangle file."""


class SpecError(ClmsepError, ValueError):
    """Invalid model specification."""


class EstimationError(ClmsepError, ValueError):
    """An estimator cannot be computed from the given triangle.

    Raised with the offending coordinates in the message, e.g. a zero
    column sum in a development-factor denominator.
    """
