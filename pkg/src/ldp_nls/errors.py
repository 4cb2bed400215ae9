"""Exception types shared across the package."""


class LdpNlsError(Exception):
    """Base class for all package errors."""


class ParameterError(LdpNlsError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ValidationError(LdpNlsError, ValueError):
    """Input data violates a structural invariant."""


class ConsistencyError(LdpNlsError, ValueError):
    """Two inputs that must agree (e.g. a sample and its declared mass) do not."""


class DivergenceError(LdpNlsError, ArithmeticError):
    """A time integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BoundarySolutionError(LdpNlsError, ArithmeticError):
    """A maximiser sits on the edge of the search interval even after widening."""


class ConfigError(LdpNlsError, ValueError):
    """An experiment configuration does not match the schema."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
