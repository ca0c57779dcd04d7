"""Model potentials and pointwise symbol-level quantities.

The fiber operators are ``P_xi = h d/dy + xi + phi'(y)`` with two hard-coded
potentials: ``phi(y) = y**3 / 3`` on the real line and ``phi(y) = sin(y)`` on
the circle.  The phase is ``f(y, xi) = xi * y + phi(y)``; its critical points
are the wells ``y_plus`` (a minimum) and ``y_minus`` (a maximum).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

__all__ = [
    "ModelSpec",
    "ModelValues",
    "WellPair",
    "Problem",
    "eval_model",
    "phase",
    "wells",
    "poisson_bracket_modulus",
    "symbol",
]


class ModelSpec(str, enum.Enum):
    """The two supported potentials.

    ``CUBIC`` lives on ``Y = R`` with ``phi(y) = y**3/3``; ``SINE`` lives on
    ``Y = S^1`` with ``phi(y) = sin(y)``.
    """

    CUBIC = "cubic"
    SINE = "sine"

    @classmethod
    def coerce(cls, value: "ModelSpec | str") -> "ModelSpec":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown model {value!r}; expected 'cubic' or 'sine'") from None

    @property
    def periodic(self) -> bool:
        return self is ModelSpec.SINE

    def phi(self, y):
        return y**3 / 3.0 if self is ModelSpec.CUBIC else np.sin(y)

    def dphi(self, y):
        return y * y if self is ModelSpec.CUBIC else np.cos(y)

    def d2phi(self, y):
        return 2.0 * y if self is ModelSpec.CUBIC else -np.sin(y)

    def d3phi(self, y):
        return 2.0 + 0.0 * y if self is ModelSpec.CUBIC else -np.cos(y)


class ModelValues(NamedTuple):
    phi: float
    dphi: float
    d2phi: float
    d3phi: float
    f: float


@dataclass(frozen=True)
class WellPair:
    """Critical points of ``f(., xi)`` with the curvature ``d^2 f`` at each."""

    y_plus: float
    y_minus: float
    curvature_plus: float
    curvature_minus: float


@dataclass(frozen=True)
class Problem:
    """One fiber: a model, the dual variable ``xi`` and the parameter ``h``."""

    model: ModelSpec
    xi: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "model", ModelSpec.coerce(self.model))
        object.__setattr__(self, "xi", float(self.xi))
        object.__setattr__(self, "h", float(self.h))
        if not math.isfinite(self.xi):
            raise DomainError(f"xi must be finite, got {self.xi}")
        if not (0.0 < self.h <= 1.0):
            raise DomainError(f"h must lie in ]0, 1], got {self.h}")


def eval_model(model: ModelSpec | str, y, xi: float) -> ModelValues:
    """Evaluate ``phi`` and its first three derivatives, plus the phase ``f``."""
    m = ModelSpec.coerce(model)
    return ModelValues(m.phi(y), m.dphi(y), m.d2phi(y), m.d3phi(y), xi * y + m.phi(y))


def phase(model: ModelSpec | str, y, xi: float):
    """Phase ``f(y, xi) = xi*y + phi(y)``."""
    m = ModelSpec.coerce(model)
    return xi * y + m.phi(y)


def wells(model: ModelSpec | str, xi: float) -> WellPair:
    """Return the two wells of ``f(., xi)``.

    Cubic: ``y_pm = +-sqrt(-xi)`` for ``xi < 0``.  Sine: ``cos(y_pm) = -xi``
    with ``y_plus`` in ``]-pi, 0[`` and ``y_minus`` in ``]0, pi[``, valid for
    ``|xi| < 1``.

    Raises
    ------
    DomainError
        If ``xi`` is outside the range where two nondegenerate wells exist.
    """
    m = ModelSpec.coerce(model)
    xi = float(xi)
    if m is ModelSpec.CUBIC:
        if not xi < 0.0:
            raise DomainError(f"cubic model has no wells for xi = {xi} >= 0")
        r = math.sqrt(-xi)
        return WellPair(r, -r, 2.0 * r, -2.0 * r)
    if not abs(xi) < 1.0:
        raise DomainError(f"sine model has no wells for |xi| = {abs(xi)} >= 1")
    c = math.acos(-xi)
    s = math.sqrt((1.0 - xi) * (1.0 + xi))
    # curvature -sin(y): at y_plus = -c it is +s, at y_minus = c it is -s
    return WellPair(-c, c, s, -s)


def poisson_bracket_modulus(model: ModelSpec | str, y) -> float:
    """``|{p, conj(p)}(y, 0)| = 2 |phi''(y)|``, independent of ``xi``."""
    m = ModelSpec.coerce(model)
    return 2.0 * abs(m.d2phi(y))


def symbol(problem: Problem, y, eta) -> complex:
    """Principal symbol ``p_xi(y, eta) = i*eta + xi + phi'(y)``."""
    return 1j * eta + problem.xi + problem.model.dphi(y)
