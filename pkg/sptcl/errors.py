"""Exception hierarchy. Each error carries a short machine-parseable category."""


class SptclError(Exception):
    """Base class for every error raised by the library."""

    category = "error"
    exit_code = 1


# --------------- Input ---------------

class InputError(SptclError):
    """Missing, unreadable, or inconsistent input data."""

    category = "InputError"
    exit_code = 3


class FormatError(InputError):
    """A file does not conform to its declared format."""

    category = "FormatError"

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        if row is not None:
            where = f"row {row}" if col is None else f"row {row}, col {col}"
            message = f"{message} ({where})"
        super().__init__(message)


class MalformedHeader(FormatError):
    category = "MalformedHeader"


class NonFiniteValue(FormatError):
    category = "NonFiniteValue"


class DimensionMismatch(FormatError):
    category = "DimensionMismatch"


# --------------- Validation ---------------

class ValidationError(SptclError, ValueError):
    """A parameter or value object violates its documented invariants."""

    category = "ValidationError"
    exit_code = 4


class ClassOutOfRange(ValidationError):
    category = "ClassOutOfRange"


class NonSimplexColumn(ValidationError):
    category = "NonSimplexColumn"


class GraphError(ValidationError):
    """The affinity graph cannot be built (e.g. a zero-norm sample)."""

    category = "GraphError"

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


class KernelError(ValidationError):
    category = "KernelError"


# --------------- Numerical ---------------

class NumericalError(SptclError, ArithmeticError):
    """A linear solve or factorization failed."""

    category = "NumericalError"
    exit_code = 5
