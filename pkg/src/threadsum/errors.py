"""Exception types shared across the package."""


class ThreadsumError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ThreadsumError):
    """Operand shapes are inconsistent; the message names the offending operand."""


class InvalidInputError(ThreadsumError):
    """An operation received input that violates its preconditions."""


class ConfigurationError(ThreadsumError):
    """A configuration (flags, parameter sets, variants) is contradictory or incomplete."""


class SchemaError(ThreadsumError):
    """A serialized record does not match the expected schema."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingDivergedError(ThreadsumError):
    """Training loss exceeded the divergence guard."""


class ModelTooLargeError(ThreadsumError):
    """The model exceeds the size limit of an exhaustive procedure."""
