"""Exception hierarchy shared by all evolab modules."""


class EvolabError(Exception):
    """Base class for all evolab errors."""


class DomainError(EvolabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularResolventError(EvolabError, ArithmeticError):
    """The resolvent was requested at (or numerically on) the spectrum."""


class AccuracyError(EvolabError, ArithmeticError):
    """A quadrature or truncated expansion failed its accuracy target."""


class NumericError(EvolabError, ArithmeticError):
    """A linear or eigen solver failed to converge.

    The final relative residual is kept on ``residual`` when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class GeometryError(EvolabError, ValueError):
    """Degenerate or out-of-range geometry."""


class CapacityError(EvolabError, ValueError):
    """Request exceeds a memory guard."""


class ConfigError(EvolabError, ValueError):
    """Invalid experiment configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
