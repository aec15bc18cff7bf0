"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class LumivqError(Exception):
    """Base class for all package errors."""


class ConfigError(LumivqError):
    """Bad configuration: unknown key, unparsable value, invalid combination."""


class DataError(LumivqError):
    """Bad input data: unreadable file, shape/layout mismatch, missing pair."""


class NumericError(LumivqError):
    """Numeric failure: non-finite loss, excessive imaginary residue."""
