"""Exception hierarchy shared by the propagation, training and CLI layers."""

from __future__ import annotations


class VQCError(Exception):
    """Base class for every error raised by this package."""


class UsageError(VQCError, ValueError):
    """Raised when a caller passes arguments outside an operation's contract."""


class ConfigError(UsageError):
    """Raised when a run configuration is invalid.

    Args:
        message: Description of the problem.
        key: Offending configuration key, if any.
    """

    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(message)


class NumericDomainError(VQCError, ArithmeticError):
    """Raised when a value leaves the finite real domain.

    Args:
        message: Description of the problem.
        node: Tape node index where the value was produced, if recorded.
        op: Name of the operation that produced it, if recorded.
    """

    def __init__(
        self, message: str, node: int | None = None, op: str | None = None
    ) -> None:
        self.node = node
        self.op = op
        super().__init__(message)


class IdxParseError(VQCError, ValueError):
    """Raised when an IDX byte stream is malformed.

    Args:
        message: Description of the problem.
        offset: Byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} (offset {offset})")


class CsvFormatError(VQCError, ValueError):
    """Raised when a CSV input does not match its expected schema."""

    def __init__(self, message: str, line: int) -> None:
        self.line = line
        super().__init__(f"{message} (line {line})")


class TrainingDivergedError(VQCError, RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, batch: int, message: str | None = None) -> None:
        self.epoch = epoch
        self.batch = batch
        if message is None:
            message = f"non-finite loss at epoch={epoch} batch={batch}"
        super().__init__(message)


class SoundnessError(VQCError, AssertionError):
    """Raised when an in-budget attack flips a certified prediction."""
