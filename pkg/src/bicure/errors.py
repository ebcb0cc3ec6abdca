class BicureError(Exception):
    """Base class for package errors."""


class ParameterDomainError(BicureError, ValueError):
    pass


class BoundaryError(BicureError, ValueError):
    """Raised when an interior-only quantity is requested on the boundary."""


class UnsupportedOperationError(BicureError, NotImplementedError):
    pass


class InconsistentMarginsError(BicureError, ValueError):
    pass


class NumericalDegeneracyError(BicureError, ArithmeticError):
    pass


class ShapeError(BicureError, ValueError):
    pass


class AccuracyError(BicureError, ArithmeticError):
    """Quadrature did not reach its tolerance; ``estimate`` holds the last value."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class InsufficientDataError(BicureError, ValueError):
    pass


class GradientUndefinedError(BicureError, ArithmeticError):
    pass


class NonConvergenceError(BicureError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class DataFormatError(BicureError, ValueError):
    """Malformed dataset file."""


class ConfigError(BicureError, ValueError):
    """Malformed design or study file."""
