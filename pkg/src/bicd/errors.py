"""Exception hierarchy shared by every subpackage.

The CLI maps these onto exit codes: ``ConfigError`` and ``UsageError`` are
usage problems, ``DataError`` covers anything read from disk, and
``NumericError`` covers numerical breakdowns during training or evaluation.
"""


class BicdError(Exception):
    """Base class for all package errors."""


class UsageError(BicdError):
    pass


class ConfigError(BicdError, ValueError):
    pass


class DataError(BicdError):
    pass


class NumericError(BicdError, ArithmeticError):
    pass


class DimensionError(NumericError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(NumericError, ValueError):
    """An entry lies outside an operation's domain (e.g. log of a non-positive)."""


class StructureError(NumericError, ValueError):
    """A matrix violates a structural precondition (e.g. unit lower triangular)."""


class ContractError(BicdError, ValueError):
    """A caller broke an operation's precondition."""
