"""Exception hierarchy shared by all simulator modules."""


class BdrisError(Exception):
    """Base class for all simulator errors."""


class ConfigError(BdrisError):
    """Bad or inconsistent scenario configuration (CLI exit code 1)."""


class GeometryError(BdrisError):
    """Invalid array geometry (non-positive distance, spacing below half wavelength, ...)."""


class ModelError(BdrisError):
    """Statistical channel model violates its contract (e.g. correlation not PSD)."""


class EstimationRankError(BdrisError):
    """Stacked training matrix is rank deficient; training configs must be redrawn."""


class NumericError(BdrisError):
    """Numerical failure inside a linear-algebra routine (CLI exit code 2)."""


class InvalidStatisticsError(BdrisError):
    """Link statistics are inconsistent (negative SINR denominator, broken bracket, ...)."""


class DegenerateUserError(BdrisError):
    """A user's effective channel carries no energy (zero precoder normalizer)."""
