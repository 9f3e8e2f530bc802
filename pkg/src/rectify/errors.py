"""Error taxonomy shared by the library and the CLI exit-code mapping."""


class RectifyError(Exception):
    """Base class for all package errors."""


class ValidationError(RectifyError, ValueError):
    """An argument or input violates a documented precondition."""


class ResourceError(RectifyError, RuntimeError):
    """A computation would exceed a configured size or time budget."""


class ParseError(RectifyError, ValueError):
    """A file could not be parsed; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
