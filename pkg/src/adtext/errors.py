"""Exception hierarchy.

Input/config problems map to CLI exit code 2, numeric failures to exit code 3.
"""

from __future__ import annotations


class AdtextError(Exception):
    exit_code = 2


class InputError(AdtextError, ValueError):
    """Bad input data or arguments."""


class MalformedRecordError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCorpusError(InputError):
    pass


class InsufficientClassSizeError(InputError):
    def __init__(self, class_name: str, count: int):
        self.class_name = class_name
        super().__init__(f"class {class_name!r} has {count} example(s); at least 2 required")


class ConfigError(InputError):
    pass


class InvalidIdError(InputError, IndexError):
    pass


class LabelError(InputError):
    pass


class ShapeError(AdtextError, ValueError):
    pass


class CheckpointError(InputError):
    pass


class NumericError(AdtextError, ArithmeticError):
    exit_code = 3


class DivergedError(NumericError):
    """Training loss became non-finite. Carries the trace recorded so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
