"""Exception types shared across the package."""


class EbcastError(Exception):
    """Base class for all ebcast-specific errors."""


class ConfigurationError(EbcastError):
    """A config object carries values outside its documented domain."""


class InvalidInputError(EbcastError):
    """An argument violates a function's preconditions."""


class OutOfBoundsError(EbcastError):
    """A coordinate falls outside the scene extent."""


class RankDeficiencyError(EbcastError):
    """A least-squares system is under-determined for the requested basis."""


class ConditioningError(EbcastError):
    """A linear solve failed; carries a condition-number estimate."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class StoreIntegrityError(EbcastError):
    """A basis store or dataset on disk is incomplete or corrupted."""
