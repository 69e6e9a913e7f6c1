"""Exception hierarchy shared by every module of the package."""


class EigenSupportError(Exception):
    """Base class for all package errors."""


class InvalidArgument(EigenSupportError, ValueError):
    pass


class DomainError(EigenSupportError, ValueError):
    """A spectral function is undefined on some eigenvalue."""


class NonInjectiveSpectrum(EigenSupportError, ValueError):
    """A spectral function merges two distinct eigenvalues."""


class BudgetExceeded(EigenSupportError, RuntimeError):
    """An exhaustive enumeration would exceed its configured cap."""


class InvalidModel(EigenSupportError, ValueError):
    """Model parameters violate the generator's preconditions."""


class NumericalDegeneracy(EigenSupportError, ArithmeticError):
    pass


class PreprocessingDegenerate(NumericalDegeneracy):
    """Empirical covariance too close to singular for normalization."""


class ParseError(EigenSupportError, ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
