"""Exception types shared across the toolkit."""


class ContractViolationError(ValueError):
    """An operation was called with inputs that break its precondition."""


class FormatError(ValueError):
    """A binary or structured file does not match its declared format.

    ``offset`` is the byte offset at which the problem was detected, when
    known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GenerationError(RuntimeError):
    """Scene or description generation could not satisfy its constraints."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""
