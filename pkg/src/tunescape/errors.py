"""Exception hierarchy.

Every error raised by this package derives from :class:`TunescapeError`,
so callers (and the CLI) can distinguish domain failures from bugs.
"""


class TunescapeError(Exception):
    """Base class for all package errors."""


class ExpressionSyntaxError(TunescapeError):
    """Raised when an expression cannot be tokenized or parsed."""

    def __init__(self, message: str, source: str, position: int):
        super().__init__(f"{message} (column {position + 1} in {source!r})")
        self.source = source
        self.position = position


class ExpressionTypeError(TunescapeError):
    """Raised when an expression is not well typed for its parameter space."""


class EvaluationError(TunescapeError):
    """Raised when evaluating an expression fails (e.g. division by zero)."""


class SpecSyntaxError(TunescapeError):
    """Raised when a space-spec document is not syntactically valid."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column if column is not None else 1})"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SpecValidationError(TunescapeError):
    """Raised when a space-spec document is well formed but semantically invalid."""


class MissingEntry(TunescapeError):
    """Raised when a simulated backend has no record for a configuration."""


class ProtocolError(TunescapeError):
    """Raised for invalid measurement protocol or backend descriptors."""


class NoFeasibleData(TunescapeError):
    """Raised when an analysis needs successful measurements and none exist."""


class IncompleteCache(TunescapeError):
    """Raised when an operation requires a cache covering the whole space."""

    def __init__(self, missing: int, total: int):
        super().__init__(
            f"cache is missing {missing} of {total} valid configurations"
        )
        self.missing = missing
        self.total = total


class SpaceMismatch(TunescapeError):
    """Raised when a cache does not belong to the search space given."""


class NonConvergence(TunescapeError):
    """Raised when an iterative solver fails to reach its tolerance."""

    def __init__(self, iterations: int, residual: float, tol: float):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(residual {residual:.3e}, tolerance {tol:.3e})"
        )
        self.iterations = iterations
        self.residual = residual
        self.tol = tol


class NoPortableConfiguration(TunescapeError):
    """Raised when no configuration scores above zero on every device."""


class UnknownDevice(TunescapeError):
    """Raised when a device subset names a device without a cache."""


class CacheFormatError(TunescapeError):
    """Raised when a cache file cannot be parsed or fails schema validation."""


class CacheIOError(TunescapeError):
    """Raised when reading or writing a cache file fails at the I/O level."""
