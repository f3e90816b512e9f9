"""Exception hierarchy shared by every module.

The CLI maps these classes to process exit codes through each class's ``exit_code``.
"""


class LandmarkError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ConfigError(LandmarkError):
    """Invalid or unknown configuration values, bad command-line usage."""

    exit_code = 1


class DataError(LandmarkError):
    """Malformed files, inconsistent shapes or invalid inputs."""

    exit_code = 2


class ShapeMismatchError(DataError):
    """Two operands disagree on grid, length or dimensionality."""


class NumericError(LandmarkError):
    """A computation produced non-finite values or failed to converge."""

    exit_code = 3


class GradientCheckError(NumericError):
    """Finite-difference check could not be evaluated."""

