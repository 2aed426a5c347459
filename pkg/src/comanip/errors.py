"""Exception types shared across the package."""


class ComanipError(Exception):
    """Base class for all package-specific errors."""


class MalformedFileError(ComanipError):
    """Demonstration file has a bad header, bad row arity, or too few samples."""


class LengthMismatchError(ComanipError):
    """Channel arrays in a demonstration file disagree on sample count."""


class NonFiniteError(ComanipError):
    """A demonstration channel contains NaN or Inf."""


class DegenerateChordError(ComanipError):
    """Demo chord or requested start-goal chord is shorter than the tolerance."""


class DegeneratePositionError(ComanipError):
    """Query position coincides exactly with an obstacle center."""


class NonDiagonalKmaxError(ComanipError):
    """Variable stiffness ceiling must be diagonal for the 2*sqrt(K) damping rule."""


class ConfigError(ComanipError):
    """Scenario configuration is missing, unreadable, or violates an invariant."""


class MissingDatasetError(ComanipError):
    """Requested demonstration shape is not present in the dataset directory."""
