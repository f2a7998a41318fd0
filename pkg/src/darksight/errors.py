"""Exception hierarchy. CLI exit codes map onto the two leaf families."""


class DarksightError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DarksightError, ValueError):
    """Bad input: shape, range, format or configuration. Exit code 1."""


class ShapeError(ValidationError):
    """Tensor shape mismatch; ``axis`` names the offending axis."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class FormatError(ValidationError):
    """Malformed file on disk; ``path`` names the file."""

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path is not None else message)
        self.path = path


class NumericalError(DarksightError, ArithmeticError):
    """Non-finite value or failed numerical check. Exit code 2."""


class StageError(DarksightError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
