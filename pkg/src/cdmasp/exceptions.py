"""Exception types raised by cdmasp.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that.
"""


class CdmaspError(ValueError):
    """Base class for library errors."""


class DimensionError(CdmaspError):
    """Array shapes are invalid or inconsistent."""


class ParameterError(CdmaspError):
    """A scalar parameter lies outside its allowed range."""


class DataError(CdmaspError):
    """Input data are malformed (non-finite values, wrong alphabet)."""


class CapacityError(CdmaspError):
    """An exhaustive computation was requested beyond the configured cap."""


class ConsistencyError(RuntimeError):
    """Internal state violated an invariant; indicates a bug, not bad input."""


class EmptySummaryError(CdmaspError):
    """No usable (converged) runs were supplied to a summary."""
