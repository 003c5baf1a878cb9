from __future__ import annotations

from typing import Optional


class InvalidArgumentError(ValueError):
    """A function was called with arguments outside its domain."""


class ValidationError(ValueError):
    """Input data (manifest, index, config) violates a documented invariant."""


class ManifestParseError(ValidationError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ValidationError):
    """A binary file (index, checkpoint) is truncated or has the wrong layout."""


class DataIOError(OSError):
    """An image or dataset file could not be read or written."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf."""


# Exit codes shared by every CLI command.
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def exit_code_for(exc: BaseException) -> Optional[int]:
    """Map an exception to its CLI exit code, or None if it is not ours to handle."""
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_VALIDATION
    return None
