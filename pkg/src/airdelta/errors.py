"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class AirDeltaError(Exception):
    """Base class for all package errors."""


class ConfigError(AirDeltaError):
    """Invalid configuration: bad keys, missing paths, inconsistent settings."""


class DataError(AirDeltaError):
    """Invalid input data: schema violations, nonpositive concentrations, etc."""


class NumericalError(AirDeltaError):
    """Numerical failure: factorization breakdown, non-convergence, non-finite values."""


class CholeskyError(NumericalError):
    """Cholesky factorization failed.

    ``pivot`` is the 0-based index of the first failing pivot.
    """

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot
