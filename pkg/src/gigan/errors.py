"""Exception types shared across the library.

Every error named in an operation contract lives here so callers can
catch them from one place.
"""


class GiganError(Exception):
    """Base class for all library-specific errors."""


class CycleDetected(GiganError):
    """The edge set admits no topological order."""


class InsufficientNodes(GiganError):
    """A size-matched misaligned family cannot be drawn from the complement."""


class InvalidAssignment(GiganError):
    """An assignment vector contains out-of-range category codes."""


class StateSpaceTooLarge(GiganError):
    """The joint state space exceeds the enumeration limit."""


class ShapeMismatch(GiganError):
    """Array shapes are inconsistent with the declared specification."""


class NotApplicable(GiganError):
    """The requested quantity is undefined for this configuration."""


class DomainError(GiganError):
    """An argument lies outside the effective domain of the function."""


class MetricMissing(GiganError):
    """A metric is required for this divergence class but was not given."""


class NoConvergence(GiganError):
    """An iterative solver exhausted its budget before reaching tolerance."""

    def __init__(self, message, best_value=None):
        super().__init__(message)
        self.best_value = best_value


class NonFiniteObjective(GiganError):
    """A training objective became NaN or infinite; the run is aborted."""


class SingularDesign(GiganError):
    """A least-squares design matrix is rank-deficient."""


class UnpairedRuns(GiganError):
    """Variant comparison requires runs sharing the same seeds."""
