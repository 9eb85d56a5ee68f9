"""Exception hierarchy.

Input/config problems derive from ``InputError`` (CLI exit code 2); anything
else escaping a command is an internal error (exit code 1).
"""


class LobcastError(Exception):
    """Base class for all package errors."""


class InputError(LobcastError, ValueError):
    """Invalid user-supplied data or configuration."""


class ConfigError(InputError):
    pass


class MalformedSnapshotError(InputError):
    pass


class IngestError(InputError):
    """Raised when a snapshot file cannot be parsed or violates series invariants."""

    def __init__(self, message: str, row: int | None = None):
        self.detail = message
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class InsufficientDepthError(InputError):
    def __init__(self, depth: int, available: int, timestamp_ms: int):
        super().__init__(
            f"requested depth {depth} but snapshot at {timestamp_ms} has only {available} levels"
        )
        self.depth = depth
        self.available = available
        self.timestamp_ms = timestamp_ms


class DegenerateDayError(InputError):
    pass


class MissingStatsError(InputError):
    pass


class InsufficientDaysError(InputError):
    def __init__(self, available: int, required: int):
        super().__init__(f"insufficient days: {available} usable, {required} required")
        self.available = available
        self.required = required


class OutOfRangeError(LobcastError, IndexError):
    pass


class DimensionError(LobcastError, ValueError):
    pass


class DivergenceError(LobcastError, FloatingPointError):
    """Non-finite loss during training."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
