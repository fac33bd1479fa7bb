"""Exception hierarchy shared by the rate kernels and the sweep driver."""


class IfcranError(Exception):
    """Base class for every error raised by this package."""


class ContractError(IfcranError, ValueError):
    """An input violates a documented precondition."""


class DefinitenessError(ContractError):
    """A matrix expected to be positive definite is not.

    Attributes
    ----------
    pivot : int
        Zero-based index of the first failing Cholesky pivot.
    """

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot} failed)")


class RefusalError(ContractError):
    """A brute-force routine was asked to run beyond its supported size."""


class CalibrationError(IfcranError, ArithmeticError):
    """A distortion search could not meet its target."""


class ConfigError(IfcranError, ValueError):
    """A sweep configuration failed validation.

    Attributes
    ----------
    path : str
        Dotted path of the offending field, e.g. ``"pairs[2].source"``.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
