"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class GathError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GathError):
    """Invalid or inconsistent configuration."""


class DataError(GathError):
    """Bad dataset input (malformed line, missing file, id out of range)."""

    def __init__(self, message, path=None, line_number=None):
        if path is not None and line_number is not None:
            message = f"{path}:{line_number}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line_number = line_number


class NumericError(GathError):
    """Non-finite values encountered during computation."""


class ShapeError(GathError, ValueError):
    """Tensor shape mismatch in an engine primitive."""


class CheckpointError(GathError):
    """Corrupt, truncated, or incompatible checkpoint file."""
