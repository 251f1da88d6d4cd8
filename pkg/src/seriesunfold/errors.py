"""Exception types raised by the package."""


class UnfoldError(Exception):
    """Base class for all package errors."""


class ConfigurationError(UnfoldError, ValueError):
    pass


class DegenerateInputError(UnfoldError, ValueError):
    pass


class KindMismatchError(UnfoldError, ValueError):
    pass


class DimensionMismatchError(UnfoldError, ValueError):
    pass


class InvalidCpdfError(UnfoldError, ValueError):
    pass


class FileFormatError(UnfoldError, ValueError):
    """A histogram or matrix file could not be parsed."""


class KinematicsError(UnfoldError, ValueError):
    pass


class UndefinedPseudorapidityError(KinematicsError):
    pass


class DivisionBlowupError(UnfoldError, ArithmeticError):
    """Fourier division hit a (numerical) zero of the kernel transform."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class DivergenceError(UnfoldError, ArithmeticError):
    """Non-finite values appeared during the series iteration."""

    def __init__(self, message, iteration, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace if trace is not None else []
