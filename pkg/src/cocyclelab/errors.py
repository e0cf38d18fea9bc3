"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, CapacityError -> 3,
NumericError -> 4.  Rejected inputs are ValueError subclasses so plain
library users can catch them the usual way.
"""


class CocycleLabError(Exception):
    """Base class for all package-specific errors."""


class RejectedInputError(CocycleLabError, ValueError):
    """An argument violated a documented precondition."""


class DimensionMismatchError(RejectedInputError):
    """Operands have incompatible dimensions."""


class CapacityError(CocycleLabError):
    """A computation would exceed a configured size cap."""

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class NumericError(CocycleLabError):
    """A numerical computation failed (overflow, non-finite values)."""


class GapMissingError(CocycleLabError):
    """No spectral gap at the requested index."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class NormFloorAbsentError(CocycleLabError):
    """No orbit site with a near-kernel direction was found (kill not applicable)."""


class HypothesisFailedError(CocycleLabError):
    """The mixing hypothesis ratio fell below 1/2."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class NeedsLargerMError(CocycleLabError):
    """The per-step rotation budget cannot realize the schedule at this m."""

    def __init__(self, message, min_feasible_m=None):
        super().__init__(message)
        self.min_feasible_m = min_feasible_m


class ConfigError(CocycleLabError):
    """Experiment configuration failed to parse or validate."""


class MissingSeriesError(CocycleLabError):
    """A report does not contain the requested plot series."""
