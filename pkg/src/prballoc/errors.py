"""Shared exception types, mapped to CLI exit codes."""


class PrballocError(Exception):
    """Base class for all package errors."""


class DataError(PrballocError):
    """Malformed or unreadable input data (exit code 4)."""


class InfeasibleError(PrballocError):
    """Instance cannot be solved, e.g. more users than slots (exit code 3)."""


class UsageError(PrballocError):
    """Bad configuration or arguments (exit code 2)."""
