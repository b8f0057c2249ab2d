"""Shared exception base for the package.

Every error raised by uatkit inherits from :class:`UatkitError` so callers can
catch one type at integration boundaries (CLI, HTTP service) and map it to an
exit code or status without enumerating every module's failure modes.
"""


class UatkitError(Exception):
    """Base class for all errors raised by uatkit."""
