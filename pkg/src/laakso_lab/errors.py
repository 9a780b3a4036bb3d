"""Exception hierarchy and the CLI exit-code contract."""

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_VIOLATION = 3
EXIT_SCHEMA = 4


class LaaksoLabError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_PRECONDITION


class PreconditionError(LaaksoLabError):
    """An operation was called outside its contract (bad params, unmet preconditions)."""

    exit_code = EXIT_PRECONDITION


class CapacityError(PreconditionError):
    """Requested construction exceeds the configured size budget."""


class InvariantViolation(LaaksoLabError):
    """A hard invariant failed; indicates a bug or a breached precondition upstream."""

    exit_code = EXIT_VIOLATION


class OptimizerError(LaaksoLabError):
    """Optimizer failure (non-finite gradient, degenerate output)."""

    exit_code = EXIT_VIOLATION


class SchemaError(LaaksoLabError):
    """Malformed or mismatched file content."""

    exit_code = EXIT_SCHEMA
