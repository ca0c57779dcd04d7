"""Exception hierarchy shared by all svlab modules."""


class SvlabError(Exception):
    """Base class for library errors."""


class DomainError(SvlabError, ValueError):
    """Raised when an input lies outside the domain of an operation."""


class SizeError(SvlabError, ValueError):
    """Raised when a discretization is too coarse for the requested problem."""


class PrecisionError(SvlabError, ArithmeticError):
    """Raised when the working precision cannot resolve the requested value."""


class ConvergenceError(SvlabError, RuntimeError):
    """Raised when an iterative solver misses its residual target."""
