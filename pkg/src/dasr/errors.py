"""Exception types shared across the toolkit."""


class DasrError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(DasrError, ValueError):
    """Shapes or sizes of inputs are inconsistent with an operation's contract."""


class NumericsError(DasrError, ArithmeticError):
    """A non-finite value (NaN/Inf) reached a point where it is an error state."""


class DecodeError(DasrError, ValueError):
    """An image byte stream could not be decoded."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DatasetError(DasrError, ValueError):
    """A dataset directory or patch store is missing, empty, or degenerate."""


class ConfigError(DasrError, ValueError):
    """A run configuration is invalid or inconsistent with loaded models."""


class PrerequisiteError(DasrError, FileNotFoundError):
    """A required earlier artifact (e.g. a checkpoint) does not exist yet."""
