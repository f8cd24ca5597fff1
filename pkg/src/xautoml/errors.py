"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
StageError -> 4.
"""


class XautomlError(Exception):
    """Base class for all package errors."""


class ConfigError(XautomlError):
    """Invalid or inconsistent configuration."""


class DataError(XautomlError):
    """Problem with input data."""


class StructuralError(DataError):
    """File-level structure is wrong (row counts, empty file, ragged rows)."""


class ParseError(DataError):
    """A token could not be parsed; carries row/column position."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class StageError(XautomlError):
    """A pipeline stage failed after execution started."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
