"""Closed-form semiclassical predictions for the fiber operators.

Agmon distances, the actions ``S0`` and ``d_J``, the tunneling coefficient
``m_plus``, harmonic gap levels, explicit resolvent bounds, a regime
classifier and the Weyl-law predicted count.

Notes
-----
Two normalizations of the tunneling prefactor are available through the
``normalization`` argument of :func:`m_plus`:

``"bracket"``
    ``sqrt(h) * prod_pm (|{p,conj p}(y_pm)| / (4 pi))**(1/4) * E``.  This is
    the reference closed form and the default.
``"kramers"``
    The same expression with ``4 pi`` replaced by ``2 pi``, i.e. larger by
    ``sqrt(2)``.  It follows from normalizing the Gaussian quasimode
    ``exp(-lam (y - y0)**2 / h)`` exactly, since its squared norm is
    ``sqrt(pi h / (2 lam))``, and it agrees with the Eyring-Kramers rate
    ``(h/pi) sqrt(lam_min |lam_saddle|) exp(-2 S0/h)`` for the lowest
    eigenvalue of ``P^* P``.  Measured singular values follow this form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError
from .model import ModelSpec, Problem, phase, poisson_bracket_modulus, wells

__all__ = [
    "Prediction",
    "WeylWindow",
    "DJDistances",
    "RegimeConstants",
    "DEFAULT_REGIME",
    "T1_C0",
    "agmon_distance",
    "action_S0",
    "dJ_distances",
    "m_plus",
    "harmonic_levels",
    "t1_lower_bound",
    "resolvent_bound",
    "regime",
    "s0_inverse",
    "weyl_predicted",
]

NORMALIZATIONS = {"bracket": 4.0 * math.pi, "kramers": 2.0 * math.pi}

# Fallback constant of the no-well branch of ``t1_lower_bound``.
T1_C0 = 2.0


@dataclass(frozen=True)
class RegimeConstants:
    """Cut constants of the regime classifier.

    Parameters
    ----------
    elliptic : float
        ``(xi, h)`` is elliptic when the distance ``delta`` to the degeneracy
        satisfies ``delta <= elliptic * h**(2/3)``.
    csv : float
        Degenerate regime requires ``csv * h * log(1/delta) <= delta**1.5``.
    compact : float
        Nondegenerate when ``delta >= compact`` (cubic: ``-xi``; sine:
        ``1 - |xi|``).
    large : float
        Cubic only: ``-xi > large`` is the large-``xi`` regime.
    """

    elliptic: float = 1.0
    csv: float = 1.0
    compact: float = 0.5
    large: float = 4.0


DEFAULT_REGIME = RegimeConstants()


class Prediction(NamedTuple):
    """Leading-order prediction with its regime tag.

    ``log_value`` is ``log(value)`` evaluated without underflow (``-inf`` for
    the kernel fiber).
    """

    value: float
    sign: str
    regime: str
    relative_error_scale: float
    log_value: float


class DJDistances(NamedTuple):
    d_short: float
    d_long: float


@dataclass(frozen=True)
class WeylWindow:
    """Counting window ``[exp(-b/h), exp(-a/h)]``."""

    a: float
    b: float
    h: float

    def validate(self, model: ModelSpec | str) -> None:
        m = ModelSpec.coerce(model)
        if not (0.0 < self.a <= self.b and 0.0 < self.h <= 1.0):
            raise DomainError(f"invalid window a={self.a}, b={self.b}, h={self.h}")
        if m is ModelSpec.SINE and not self.b < 2.0:
            raise DomainError(f"sine window needs b < 2, got b={self.b}")


def _check_y(y: float) -> float:
    y = float(y)
    if not math.isfinite(y):
        raise DomainError(f"coordinate must be finite, got {y}")
    return y


def _zeros_between(model: ModelSpec, xi: float, lo: float, hi: float) -> list[float]:
    """Zeros of ``xi + phi'`` strictly inside ``]lo, hi[``."""
    if model is ModelSpec.CUBIC:
        cand = [] if xi > 0 else ([0.0] if xi == 0 else [-math.sqrt(-xi), math.sqrt(-xi)])
    else:
        if abs(xi) > 1.0:
            return []
        c = math.acos(-xi)
        cand = []
        for base in (c, -c):
            k0 = math.ceil((lo - base) / (2 * math.pi))
            k1 = math.floor((hi - base) / (2 * math.pi))
            cand += [base + 2 * math.pi * k for k in range(k0, k1 + 1)]
    return sorted(z for z in cand if lo < z < hi)


def agmon_distance(problem: Problem, y1: float, y2: float, segment: str | None = None) -> float:
    """Integral of ``|xi + phi'(y)|`` along a path from ``y1`` to ``y2``.

    Parameters
    ----------
    problem : Problem
    y1, y2 : float
        Endpoints.  On the circle they are taken modulo ``2 pi``.
    segment : {None, "increasing", "decreasing"}
        Circle only: traverse from ``y1`` in the direction of increasing or
        decreasing ``y`` until ``y2`` is reached.  Ignored on the line.

    Returns
    -------
    float
        The integral, computed panel-wise between zeros of ``xi + phi'`` to
        absolute tolerance ``1e-12``.
    """
    y1, y2 = _check_y(y1), _check_y(y2)
    m, xi = problem.model, problem.xi
    if m is ModelSpec.CUBIC:
        lo, hi = min(y1, y2), max(y1, y2)
    else:
        seg = segment or "increasing"
        if seg == "increasing":
            lo, hi = y1, y1 + (y2 - y1) % (2 * math.pi)
        elif seg == "decreasing":
            lo, hi = y1 - (y1 - y2) % (2 * math.pi), y1
        else:
            raise DomainError(f"segment must be 'increasing' or 'decreasing', got {segment!r}")
    if hi == lo:
        return 0.0
    knots = [lo, *_zeros_between(m, xi, lo, hi), hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(lambda y: abs(xi + m.dphi(y)), a, b, epsabs=1e-12, epsrel=1e-14, limit=200)
        total += val
    return total


def _sine_arcs(xi: float) -> DJDistances:
    # closed-form f-increments on the two monotone arcs between the wells
    c = math.acos(-xi)
    s2 = 2.0 * math.sqrt(max(0.0, (1.0 - xi) * (1.0 + xi)))
    return DJDistances(2.0 * xi * c + s2, 2.0 * xi * (c - math.pi) + s2)


def dJ_distances(xi: float) -> DJDistances:
    """Agmon distances between the sine wells along the two arcs.

    ``d_short`` is taken along the arc through ``0`` and ``d_long`` along the
    arc through ``-pi``.  The labels refer to ``xi < 0``; for ``xi > 0`` the
    roles swap.
    """
    xi = float(xi)
    if not abs(xi) < 1.0:
        raise DomainError(f"|xi| must be < 1, got {xi}")
    return _sine_arcs(xi)


def action_S0(model: ModelSpec | str, xi: float) -> float:
    """Agmon distance ``S0(xi)`` between the two wells.

    Cubic: ``(4/3) |xi|**(3/2)``.  Sine: least of the two arc distances.
    """
    m = ModelSpec.coerce(model)
    xi = float(xi)
    if m is ModelSpec.CUBIC:
        if not xi < 0.0:
            raise DomainError(f"S0 defined for xi < 0 only, got {xi}")
        return 4.0 / 3.0 * (-xi) ** 1.5
    return min(dJ_distances(xi))


def regime(problem: Problem, constants: RegimeConstants = DEFAULT_REGIME) -> str:
    """Classify ``(xi, h)``.

    Returns one of ``elliptic``, ``boundary``, ``degenerate``,
    ``nondegenerate``, ``large_xi`` or ``kernel``.  ``boundary`` marks fibers
    that still have wells but violate ``h << delta**1.5 / log(1/delta)``.
    """
    xi, h = problem.xi, problem.h
    sine = problem.model is ModelSpec.SINE
    if sine and xi == 0.0:
        return "kernel"
    delta = 1.0 - abs(xi) if sine else -xi
    if delta <= constants.elliptic * h ** (2.0 / 3.0):
        return "elliptic"
    if not sine and delta > constants.large:
        return "large_xi"
    if delta >= constants.compact:
        return "nondegenerate"
    if constants.csv * h * math.log(1.0 / delta) <= delta**1.5:
        return "degenerate"
    return "boundary"


def _distance_to_degeneracy(problem: Problem) -> float:
    return 1.0 - abs(problem.xi) if problem.model is ModelSpec.SINE else abs(problem.xi)


def m_plus(problem: Problem, normalization: str = "bracket") -> Prediction:
    """Leading-order tunneling coefficient ``|m_plus|``, the predicted ``t0``.

    Parameters
    ----------
    problem : Problem
        ``xi`` must lie in the domain of ``S0``.
    normalization : {"bracket", "kramers"}
        Prefactor convention, see the module notes.

    Returns
    -------
    Prediction
        ``value`` is ``sqrt(h) a+ a- E`` with ``E = exp(-S0/h)`` (cubic) or
        ``|exp(-d_long/h) - exp(-d_short/h)|`` (sine).
    """
    try:
        denom = NORMALIZATIONS[normalization]
    except KeyError:
        raise DomainError(f"unknown normalization {normalization!r}") from None
    m, xi, h = problem.model, problem.xi, problem.h
    w = wells(m, xi)
    reg = regime(problem)
    if reg == "kernel":
        return Prediction(0.0, "not_applicable", "kernel", h, -math.inf)
    log_pref = 0.5 * math.log(h) + 0.25 * (
        math.log(poisson_bracket_modulus(m, w.y_plus) / denom)
        + math.log(poisson_bracket_modulus(m, w.y_minus) / denom)
    )
    if m is ModelSpec.CUBIC:
        log_e = -action_S0(m, xi) / h
        sign = "positive"
    else:
        d = dJ_distances(xi)
        lo, hi = sorted(d)
        log_e = -lo / h + math.log(-math.expm1(-(hi - lo) / h))
        # minimal arc traversed towards increasing y gives the minus sign
        sign = "negative" if d.d_short < d.d_long else "positive"
    if reg == "nondegenerate":
        scale = h
    else:
        scale = h * _distance_to_degeneracy(problem) ** -1.5
    log_value = log_pref + log_e
    return Prediction(math.exp(log_value), sign, reg, scale, log_value)


def harmonic_levels(problem: Problem, which: str, k: int) -> list[float]:
    """Lowest ``k`` levels of the quadratic models of ``P^*P`` or ``PP^*``.

    With ``lam = f''(y0)`` the ``Qplus`` model at a well has levels
    ``h (|lam| (2j+1) - lam)``; ``Qminus`` flips the sign of ``lam``.  The
    ``2k`` levels from both wells are merged and sorted.
    """
    if which not in ("Qplus", "Qminus"):
        raise DomainError(f"which must be 'Qplus' or 'Qminus', got {which!r}")
    w = wells(problem.model, problem.xi)
    sgn = 1.0 if which == "Qplus" else -1.0
    h = problem.h
    out = []
    for lam in (w.curvature_plus, w.curvature_minus):
        out += [h * (abs(lam) * (2 * j + 1) - sgn * lam) for j in range(k)]
    return sorted(out)


def t1_lower_bound(problem: Problem, c0: float = T1_C0) -> float:
    """Predicted scale of the second singular value ``t1``.

    ``sqrt(2 h min|lam_pm|)`` when wells exist, the square root of the
    smallest nonzero harmonic level; otherwise ``(|xi| + h**(2/3)) / c0``.
    """
    try:
        w = wells(problem.model, problem.xi)
    except DomainError:
        return (abs(problem.xi) + problem.h ** (2.0 / 3.0)) / c0
    return math.sqrt(2.0 * problem.h * min(abs(w.curvature_plus), abs(w.curvature_minus)))


def resolvent_bound(xi: float, h: float, model: ModelSpec | str = ModelSpec.CUBIC) -> float:
    """Explicit upper bound for ``||P_xi^{-1}||`` in the cubic model.

    Branches, with ``h23 = h**(2/3)``:

    * ``xi >= (h/4)**(2/3)``: ``exp(h**2 / (48 xi**3)) / xi``
    * ``0 <= xi < (h/4)**(2/3)``: ``(4/h)**(2/3) e**(1/3)``
    * ``-h23/2 <= xi < 0``: ``2 e**(4/3) / h23``
    * ``xi < -h23/2``: ``(2**1.5 sqrt(-xi) / h) exp((4/(3h)) alpha**1.5)``
      with ``alpha = -xi + 2**-1.5 h / sqrt(-xi)``
    """
    if ModelSpec.coerce(model) is not ModelSpec.CUBIC:
        raise DomainError("explicit resolvent bounds are implemented for the cubic model only")
    xi, h = float(xi), float(h)
    if not (0.0 < h <= 1.0) or not math.isfinite(xi):
        raise DomainError(f"invalid (xi, h) = ({xi}, {h})")
    h23 = h ** (2.0 / 3.0)
    if xi >= (h / 4.0) ** (2.0 / 3.0):
        return math.exp(h * h / (48.0 * xi**3)) / xi
    if xi >= 0.0:
        return (4.0 / h) ** (2.0 / 3.0) * math.exp(1.0 / 3.0)
    if xi >= -h23 / 2.0:
        return 2.0 * math.exp(4.0 / 3.0) / h23
    d = -xi
    alpha = d + 2.0**-1.5 * h / math.sqrt(d)
    return 2.0**1.5 * math.sqrt(d) / h * math.exp(4.0 / (3.0 * h) * alpha**1.5)


def _sine_s0_abs(u: float) -> float:
    # S0 at xi = -u, valid on [0, 1]
    return min(_sine_arcs(-min(max(u, 0.0), 1.0)))


def s0_inverse(model: ModelSpec | str, s: float) -> tuple[float, ...]:
    """Preimage of ``s`` under ``S0``, sorted ascending.

    Cubic: ``(-(3 s/4)**(2/3),)``.  Sine: ``(-u, u)`` where ``u`` solves
    ``S0(-u) = s`` by bisection to ``1e-12``.
    """
    m = ModelSpec.coerce(model)
    s = float(s)
    if m is ModelSpec.CUBIC:
        if not s > 0.0:
            raise DomainError(f"s must be > 0, got {s}")
        return (-((0.75 * s) ** (2.0 / 3.0)),)
    if not 0.0 < s < 2.0:
        raise DomainError(f"s must lie in ]0, 2[ for the sine model, got {s}")
    u = optimize.bisect(lambda t: _sine_s0_abs(t) - s, 0.0, 1.0, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
    return (-u, u)


def _preimage_measure(model: ModelSpec, a: float, b: float) -> float:
    if a == b:
        return 0.0
    ua = abs(s0_inverse(model, a)[0])
    ub = abs(s0_inverse(model, b)[0])
    if model is ModelSpec.CUBIC:
        return ub - ua
    return 2.0 * (ua - ub)


def weyl_predicted(model: ModelSpec | str, window: WeylWindow) -> float:
    """Weyl-law count ``L(S0^{-1}([a, b])) / h``."""
    m = ModelSpec.coerce(model)
    window.validate(m)
    return _preimage_measure(m, window.a, window.b) / window.h


def phase_increment(problem: Problem, y1: float, y2: float) -> float:
    """``|f(y2) - f(y1)|``, the Agmon distance on a monotone segment."""
    return abs(phase(problem.model, y2, problem.xi) - phase(problem.model, y1, problem.xi))
