"""Error types shared across the package.

The CLI maps DataError (and subclasses) to exit code 2; everything argparse
rejects is exit code 1.
"""


class DataError(Exception):
    """Fatal problem with input data or a violated data-level precondition."""


class FormatError(DataError):
    """Malformed file content, or a malformed-line rate above the allowed cap."""


class ConsistencyError(DataError):
    """Cross-record invariant violated (duplicate id, missing hash, ...)."""
