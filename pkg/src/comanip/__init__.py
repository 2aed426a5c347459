"""Shared-autonomy manipulation stack.

Potential-field motion generation from recorded demonstrations, force-based
human/robot authority arbitration, and an energy-tank-passivated variable
impedance + force controller, closed around a task-space plant simulator.
"""

from .errors import (
    ComanipError,
    ConfigError,
    DegenerateChordError,
    DegeneratePositionError,
    LengthMismatchError,
    MalformedFileError,
    MissingDatasetError,
    NonDiagonalKmaxError,
    NonFiniteError,
)

__version__ = "0.1.0"

__all__ = [
    "ComanipError",
    "ConfigError",
    "DegenerateChordError",
    "DegeneratePositionError",
    "LengthMismatchError",
    "MalformedFileError",
    "MissingDatasetError",
    "NonDiagonalKmaxError",
    "NonFiniteError",
    "__version__",
]
