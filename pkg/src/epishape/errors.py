"""Exception types shared across the package."""


class EpishapeError(Exception):
    """Base class for all package errors."""


class ConfigError(EpishapeError):
    """Invalid configuration value or malformed input."""


class TruncationError(EpishapeError):
    """A search needed more room than the simulation box provides.

    The standard remediation is to enlarge the box radius.
    """


class EstimationError(EpishapeError):
    """An estimator could not produce a result from the available samples."""
