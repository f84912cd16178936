"""Exception hierarchy.

The CLI maps each family onto a distinct exit code.
"""


class WaldoError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(WaldoError, ValueError):
    """An argument lies outside the domain of a physical formula."""


class SingularityError(WaldoError, ZeroDivisionError):
    """A conversion hit its pole (z = -z0 or s11 = 1)."""


class ConfigError(WaldoError, ValueError):
    exit_code = 2


class DataError(WaldoError, ValueError):
    """Malformed or inconsistent dataset, model or artifact."""

    exit_code = 3


class CheckFailure(WaldoError, AssertionError):
    exit_code = 4
