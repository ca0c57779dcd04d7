"""Numerical laboratory for small singular values of semiclassical fiber operators.

The operators are ``P_xi = h d/dy + xi + phi'(y)`` for ``phi = y**3/3`` on
the line and ``phi = sin y`` on the circle.
"""

from .errors import ConvergenceError, DomainError, PrecisionError, SizeError, SvlabError
from .model import ModelSpec, Problem, WellPair, eval_model, poisson_bracket_modulus, symbol, wells

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "PrecisionError",
    "SizeError",
    "SvlabError",
    "ModelSpec",
    "Problem",
    "WellPair",
    "eval_model",
    "poisson_bracket_modulus",
    "symbol",
    "wells",
]
