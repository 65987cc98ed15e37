"""Exception taxonomy shared across the package.

The command line maps these onto exit codes: argument and format
problems exit with 2, numerical failures with 3.
"""


class TensorInferError(Exception):
    """Base class for all library errors."""


class ArgumentError(TensorInferError, ValueError):
    """Invalid argument or violated precondition."""


class NumericError(TensorInferError, ArithmeticError):
    """Numerical failure: non-finite data, ill conditioning, divergence."""


class FormatError(TensorInferError, ValueError):
    """Malformed file contents."""


class RankDeficiencyWarning(UserWarning):
    """Signal subspace is not identified (zero or repeated singular values)."""
