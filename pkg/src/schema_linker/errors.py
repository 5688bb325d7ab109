"""Exception types shared across the package.

Every error carries a stable ``code`` string so callers and run outputs can
identify failures without matching on message text.
"""

from __future__ import annotations


class LinkerError(Exception):
    """Base class for all package-specific errors."""

    code = "ERROR"


class NotADatabaseError(LinkerError):
    code = "NOT_A_DATABASE"


class ParseError(LinkerError):
    code = "PARSE_ERROR"


class DuplicateTableError(LinkerError):
    code = "DUPLICATE_TABLE"


class DanglingForeignKeyError(LinkerError):
    code = "DANGLING_FK_REFERENCE"


class UnknownTableError(LinkerError):
    code = "UNKNOWN_TABLE"


class EmptyEndpointsError(LinkerError):
    code = "EMPTY_ENDPOINTS"


class ReplyParseError(LinkerError):
    code = "NO_PARSE"


class EmptyAfterFilteringError(LinkerError):
    code = "EMPTY_AFTER_FILTERING"


class OutOfRangeError(LinkerError):
    code = "OUT_OF_RANGE"


class BackendError(LinkerError):
    code = "BACKEND_ERROR"


class CacheMissError(LinkerError):
    code = "CACHE_MISS"


class EmptyGoldError(LinkerError):
    code = "EMPTY_GOLD"


class EmptyInputError(LinkerError):
    code = "EMPTY_INPUT"


class GoldExecutionError(LinkerError):
    code = "GOLD_EXECUTION_FAILED"


class NoSchemasFoundError(LinkerError):
    code = "NO_SCHEMAS_FOUND"
