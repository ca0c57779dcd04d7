"""Verification campaigns: tunneling, gap, overlap, scaling, resolvent, Weyl.

Each campaign evaluates independent fibers; a failing fiber is recorded in
its row or report and never aborts the campaign.  ``jobs > 1`` evaluates
fibers in worker processes; results are always assembled in input order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize

from . import _xprec
from .asymptotics import (
    WeylWindow,
    action_S0,
    dJ_distances,
    m_plus,
    regime,
    resolvent_bound,
    s0_inverse,
    t1_lower_bound,
    weyl_predicted,
)
from .discretize import (
    C_MODES,
    Discretization,
    Fourier,
    Grid,
    auto_discretization,
    build_matrix,
)
from .errors import DomainError, SvlabError
from .model import ModelSpec, Problem, phase, wells
from .smallsvd import (
    EPS,
    SingularSpectrum,
    digits_for,
    precision_floor,
    smallest_singular_values,
)

__all__ = [
    "DiscPolicy",
    "TunnelingRow",
    "ScalingReport",
    "ResolventRow",
    "ResolventReport",
    "WeylReport",
    "solve_fiber",
    "tunneling_experiment",
    "overlap_estimate",
    "scaling_check",
    "resolvent_experiment",
    "weyl_experiment",
]


@dataclass(frozen=True)
class DiscPolicy:
    """How fibers are discretized and solved.

    Parameters
    ----------
    c_modes : float
        Fourier modes ``N >= ceil(c_modes / h)``.
    dy_ratio : float
        Grid spacing ``h / (dy_ratio max(1, |xi|))``.
    stencil_order : {2, 4}
    margin : float
        Grid half-width makes the quasimode envelopes at the boundary smaller
        than ``margin * exp(-S0/h)``.
    n_modes, points, half_width : optional
        Explicit overrides of the automatic sizes.
    precision : {"auto", "standard", "extended"}
        ``auto`` switches to extended precision when the predicted ``t0``
        lies below the standard floor ``100 eps scale``.
    digits : int, optional
        Extended digits; default sized from the predicted ``t0``.
    tol, rtol : float
        Residual targets passed to the solver (see
        :func:`svlab.smallsvd.smallest_singular_values`).
    """

    c_modes: float = C_MODES
    dy_ratio: float = 8.0
    stencil_order: int = 4
    margin: float = 1e-12
    n_modes: int | None = None
    points: int | None = None
    half_width: float | None = None
    precision: str = "auto"
    digits: int | None = None
    tol: float = 1e-12
    rtol: float | None = 1e-8
    max_iter: int = 300

    def discretize(self, problem: Problem) -> Discretization:
        if problem.model is ModelSpec.SINE:
            if self.n_modes is not None:
                return Fourier(int(self.n_modes))
            return auto_discretization(problem, c_modes=self.c_modes)
        g = auto_discretization(problem, dy_ratio=self.dy_ratio, stencil_order=self.stencil_order, margin=self.margin)
        L = float(self.half_width) if self.half_width is not None else g.half_width
        if self.points is not None:
            pts = int(self.points)
        elif self.half_width is not None:
            pts = int(math.ceil((g.points - 1) * L / g.half_width)) + 1
        else:
            pts = g.points
        return Grid(L, pts, self.stencil_order)


def _t0_hint(problem: Problem) -> float:
    """Best available a-priori estimate of ``t0`` (used for precision only)."""
    try:
        return m_plus(problem, "kramers").value
    except DomainError:
        return (abs(problem.xi) + problem.h ** (2.0 / 3.0)) / 3.0


def solve_fiber(
    problem: Problem,
    policy: DiscPolicy,
    k: int,
    *,
    t0_hint: float | None = None,
    disc: Discretization | None = None,
    tol: float | None = None,
    rtol: float | None = "policy",
    digits: int | None = None,
) -> SingularSpectrum:
    """Discretize ``problem`` and return its ``k`` smallest singular values."""
    disc = disc or policy.discretize(problem)
    kw = dict(c_modes=policy.c_modes) if isinstance(disc, Fourier) else {}
    A = build_matrix(problem, disc, precision="standard", **kw)
    hint = _t0_hint(problem) if t0_hint is None else t0_hint
    kind = policy.precision
    if kind == "auto":
        kind = "standard" if (hint == 0.0 or hint >= precision_floor(A.scale, "standard")) else "extended"
    rt = policy.rtol if rtol == "policy" else rtol
    if kind == "standard":
        t = policy.tol if tol is None else tol
        return smallest_singular_values(
            A, k, t, rtol=rt, t0_hint=hint if policy.precision == "standard" else None,
            precision="standard", max_iter=policy.max_iter,
        )
    nd = digits or policy.digits or digits_for(hint, A.scale, rel=1e-12)
    if tol is None:
        t = policy.tol if not hint > 0 else min(policy.tol, (rt or 1e-8) * hint / A.scale)
        t = max(t, 10.0 * _xprec.unit_roundoff(nd))
    else:
        t = tol
    Ax = build_matrix(problem, disc, precision="extended", digits=nd, **kw)
    return smallest_singular_values(Ax, k, t, rtol=rt, precision="extended", digits=nd, max_iter=policy.max_iter)


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- tunneling


@dataclass(frozen=True)
class TunnelingRow:
    """Measured and predicted ``t0`` and ``t1`` for one fiber.

    ``error`` is ``None`` for a successful row and holds the failure message
    otherwise (numeric fields are then ``nan``).
    """

    xi: float
    h: float
    t0_numeric: float
    t0_predicted: float
    ratio: float
    t1_numeric: float
    t1_predicted: float
    regime: str
    error: str | None = None
    residual_t0: float = math.nan
    precision_kind: str = ""

    @property
    def ok(self) -> bool:
        return self.error is None


def _tunneling_row(args) -> TunnelingRow:
    model, xi, h, policy, normalization = args
    nan = math.nan
    try:
        P = Problem(model, xi, h)
        reg = regime(P)
        try:
            pred = m_plus(P, normalization).value
        except DomainError:
            pred = nan
        t1p = t1_lower_bound(P)
    except SvlabError as exc:
        return TunnelingRow(xi, h, nan, nan, nan, nan, nan, "", f"{type(exc).__name__}: {exc}")
    try:
        s = solve_fiber(P, policy, 2)
    except SvlabError as exc:
        return TunnelingRow(xi, h, nan, pred, nan, nan, t1p, reg, f"{type(exc).__name__}: {exc}")
    t0, t1 = s.values
    ratio = t0 / pred if pred > 0 else nan
    return TunnelingRow(xi, h, t0, pred, ratio, t1, t1p, reg, None, s.residuals[0], s.precision_kind)


def tunneling_experiment(
    model: ModelSpec | str,
    xi_list: Iterable[float],
    h_list: Iterable[float],
    disc_policy: DiscPolicy | None = None,
    *,
    normalization: str = "bracket",
    jobs: int = 1,
) -> list[TunnelingRow]:
    """Compare certified ``t0, t1`` with ``m_plus`` and the gap prediction.

    Rows are ordered by ``xi`` (outer) and ``h`` (inner) as given.
    """
    policy = disc_policy or DiscPolicy()
    m = ModelSpec.coerce(model)
    items = [(m, float(xi), float(h), policy, normalization) for xi in xi_list for h in h_list]
    return _pmap(_tunneling_row, items, jobs)


# ------------------------------------------------------------------ overlap


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / t), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / (1.0 - t)), 0.0)
    return a / (a + b)


def _dsmoothstep(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    out = np.zeros_like(t)
    ti = t[inside]
    a, b = np.exp(-1.0 / ti), np.exp(-1.0 / (1.0 - ti))
    da, db = a / ti**2, -b / (1.0 - ti) ** 2
    out[inside] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


def _rise(y, start, width):
    """Smooth rise from 0 at ``start`` to 1 at ``start + width``."""
    return _smoothstep((y - start) / width)


def _drise(y, start, width):
    return _dsmoothstep((y - start) / width) / width


def _quad(fn, a, b, points=()):
    pts = sorted(p for p in points if a < p < b)
    knots = [a, *pts, b]
    return sum(
        integrate.quad(lambda y: float(fn(y)), p, q, epsabs=0.0, epsrel=1e-12, limit=400)[0]
        for p, q in zip(knots[:-1], knots[1:])
    )


def _default_eta(problem: Problem) -> float:
    # coordinate margin whose Agmon length from each well is S0/4
    m, xi = problem.model, problem.xi
    w = wells(m, xi)
    quarter = action_S0(m, xi) / 4.0
    etas = []
    for y0 in (w.y_plus, w.y_minus):
        for sgn in (1.0, -1.0):
            g = lambda e: abs(phase(m, y0 + sgn * e, xi) - phase(m, y0, xi)) - quarter  # noqa: E731
            hi = math.pi if m is ModelSpec.SINE else 2.0 * abs(w.y_plus - w.y_minus)
            if g(hi) > 0:
                etas.append(optimize.brentq(g, 1e-15, hi, xtol=1e-14))
    return min(etas)


def _max_eta(problem: Problem) -> float:
    w = wells(problem.model, problem.xi)
    sep = w.y_minus - w.y_plus if problem.model is ModelSpec.SINE else w.y_plus - w.y_minus
    if problem.model is ModelSpec.SINE:
        return min(sep, 2 * math.pi - sep) / 2.0
    return sep / 2.0


def overlap_estimate(problem: Problem, eta: float | None = None) -> float:
    """Quasimode overlap ``|(P u_plus | u_minus)|`` by quadrature.

    ``u_pm = a_pm chi_pm exp(-+(f - f(y_pm))/h)`` with smooth cut-offs of
    margin ``eta`` (default: Agmon length ``S0/4`` from the wells).  The
    constants ``a_pm`` normalize ``u_pm`` numerically.  Since
    ``P u_plus = h a_plus chi_plus' exp(-(f - f_plus)/h)``, the overlap
    reduces to integrals of ``chi_plus' chi_minus`` at the edges of the
    cut-off, weighted by ``exp(-S0/h)`` (line) or by ``exp(-d_long/h)`` and
    ``exp(-d_short/h)`` at the two ends of the cut circle.

    Raises
    ------
    DomainError
        If the cut-off supports collide.
    """
    m, xi, h = problem.model, problem.xi, problem.h
    w = wells(m, xi)
    eta = _default_eta(problem) if eta is None else float(eta)
    if not 0.0 < eta < _max_eta(problem):
        raise DomainError(f"cut-off margin eta={eta} infeasible (max {_max_eta(problem):.4g})")
    yp, ym = w.y_plus, w.y_minus
    fp, fm = phase(m, yp, xi), phase(m, ym, xi)
    f = lambda y: phase(m, y, xi)  # noqa: E731
    hw = eta / 2.0

    def gauss_span(y0, lam):
        return 40.0 * math.sqrt(h / abs(lam))

    if m is ModelSpec.CUBIC:
        chi_p = lambda y: _rise(y, ym + hw, hw)  # noqa: E731
        dchi_p = lambda y: _drise(y, ym + hw, hw)  # noqa: E731
        chi_m = lambda y: 1.0 - _rise(y, yp - eta, hw)  # noqa: E731
        top = yp + gauss_span(yp, w.curvature_plus)
        bot = ym - gauss_span(ym, w.curvature_minus)
        n_p = _quad(lambda y: chi_p(y) ** 2 * math.exp(-2.0 * (f(y) - fp) / h), ym + hw, top, (ym + eta, yp))
        n_m = _quad(lambda y: chi_m(y) ** 2 * math.exp(2.0 * (f(y) - fm) / h), bot, yp - hw, (ym, yp - eta))
        edge = _quad(lambda y: dchi_p(y) * chi_m(y), ym + hw, ym + eta)
        log_mag = math.log(h) - 0.5 * (math.log(n_p) + math.log(n_m)) - (fm - fp) / h
        return abs(edge) * math.exp(log_mag)

    # circle: u_plus on J = ]ym - 2pi, ym[, u_minus on ]yp, yp + 2pi[
    tau = 2.0 * math.pi
    lo, hi = ym - tau, ym

    def chi_p(y):
        return _rise(y, lo + hw, hw) * (1.0 - _rise(y, hi - eta, hw))

    def dchi_p(y):
        return _drise(y, lo + hw, hw) * (1.0 - _rise(y, hi - eta, hw)) - _rise(y, lo + hw, hw) * _drise(y, hi - eta, hw)

    def chi_m(yl):
        # yl in ]yp, yp + 2 pi[
        return _rise(yl, yp + hw, hw) * (1.0 - _rise(yl, yp + tau - eta, hw))

    def lift(y):
        return y if y > yp else y + tau

    n_p = _quad(lambda y: chi_p(y) ** 2 * math.exp(-2.0 * (f(y) - fp) / h), lo + hw, hi - hw, (lo + eta, yp, hi - eta))
    n_m = _quad(lambda y: chi_m(y) ** 2 * math.exp(2.0 * (f(y) - fm) / h), yp + hw, yp + tau - hw, (yp + eta, ym, yp + tau - eta))
    edge_long = _quad(lambda y: dchi_p(y) * chi_m(lift(y)), lo + hw, lo + eta)
    edge_short = _quad(lambda y: dchi_p(y) * chi_m(lift(y)), hi - eta, hi - hw)
    d = dJ_distances(xi)
    dmin = min(d)
    combo = edge_long * math.exp(-(d.d_long - dmin) / h) + edge_short * math.exp(-(d.d_short - dmin) / h)
    log_mag = math.log(h) - 0.5 * (math.log(n_p) + math.log(n_m)) - dmin / h
    return abs(combo) * math.exp(log_mag)


# ------------------------------------------------------------------ scaling


@dataclass(frozen=True)
class ScalingReport:
    lhs: SingularSpectrum
    rhs: SingularSpectrum
    max_rel_dev: float
    rhs_scaled: tuple = ()


def scaling_check(xi: float, h: float, disc_policy: DiscPolicy | None = None, k: int = 3) -> ScalingReport:
    """Test ``t_j(xi; h) = |xi| t_j(-1; h |xi|**-1.5)`` on matched grids.

    The right-hand grid is the image ``y = alpha y~`` of the left-hand grid
    with ``alpha = sqrt|xi|``, so the two matrices agree up to the factor
    ``alpha**2`` and the deviation measures rounding only.
    """
    policy = disc_policy or DiscPolicy()
    xi, h = float(xi), float(h)
    if not xi < 0:
        raise DomainError("scaling check needs xi < 0")
    alpha = math.sqrt(-xi)
    lhs_p = Problem(ModelSpec.CUBIC, xi, h)
    rhs_p = Problem(ModelSpec.CUBIC, -1.0, h / alpha**3)
    g = policy.discretize(lhs_p)
    L = max(g.half_width, 2.05 * alpha)
    pts = int(math.ceil((g.points - 1) * L / g.half_width)) + 1
    g_l = Grid(L, pts, g.stencil_order, g.scheme)
    g_r = Grid(L / alpha, pts, g.stencil_order, g.scheme)
    hint = _t0_hint(lhs_p)
    A = build_matrix(lhs_p, g_l, precision="standard")
    kind = policy.precision
    if kind == "auto":
        kind = "standard" if hint >= 1e6 * precision_floor(A.scale, "standard") else "extended"
    nd = policy.digits or digits_for(hint, A.scale, rel=1e-14)
    solve = dict(rtol=1e-12, precision=kind, digits=nd if kind == "extended" else None, max_iter=policy.max_iter)
    tol_l = 1e-300 if kind == "extended" else policy.tol
    lhs = smallest_singular_values(
        build_matrix(lhs_p, g_l, precision=kind, digits=nd), k, tol_l, **solve
    )
    rhs = smallest_singular_values(
        build_matrix(rhs_p, g_r, precision=kind, digits=nd), k, tol_l, **solve
    )
    scaled = tuple(-xi * t for t in rhs.values)
    dev = max(abs(a - b) / a for a, b in zip(lhs.values, scaled))
    return ScalingReport(lhs, rhs, dev, scaled)


# ---------------------------------------------------------------- resolvent


@dataclass(frozen=True)
class ResolventRow:
    xi: float
    h: float
    t0_numeric: float
    bound: float
    inverse_bound: float
    satisfies: bool
    empirical_C: float
    error: str | None = None


@dataclass(frozen=True)
class ResolventReport:
    rows: tuple
    max_empirical_C: float


def _resolvent_row(args) -> ResolventRow:
    model, xi, h, policy = args
    nan = math.nan
    try:
        P = Problem(model, xi, h)
        try:
            bound = resolvent_bound(xi, h, model)
        except DomainError:
            bound = nan
        s = solve_fiber(P, policy, 1)
    except SvlabError as exc:
        return ResolventRow(xi, h, nan, nan, nan, False, nan, f"{type(exc).__name__}: {exc}")
    t0 = s.values[0]
    inv = 1.0 / bound if bound == bound else nan
    ok = bool(t0 >= inv) if inv == inv else False
    c = (abs(xi) + h ** (2.0 / 3.0)) / t0 if t0 > 0 else math.inf
    return ResolventRow(xi, h, t0, bound, inv, ok, c)


def resolvent_experiment(
    h: float,
    xi_grid: Sequence[float],
    disc_policy: DiscPolicy | None = None,
    *,
    model: ModelSpec | str = ModelSpec.CUBIC,
    jobs: int = 1,
) -> ResolventReport:
    """Check ``t0 >= 1 / resolvent_bound`` and report ``C = (|xi| + h^(2/3))/t0``."""
    policy = disc_policy or DiscPolicy()
    items = [(ModelSpec.coerce(model), float(xi), float(h), policy) for xi in xi_grid]
    rows = tuple(_pmap(_resolvent_row, items, jobs))
    cs = [r.empirical_C for r in rows if r.error is None]
    return ResolventReport(rows, max(cs) if cs else math.nan)


# --------------------------------------------------------------------- Weyl


@dataclass(frozen=True)
class WeylReport:
    """Outcome of a Weyl counting campaign.

    ``fibers`` lists ``(xi, t0)`` for every evaluated fiber, ``failed`` lists
    ``(xi, message)``, ``skipped`` counts elliptic fibers, ``ambiguous``
    counts fibers whose residual straddles a window edge.
    """

    window: WeylWindow
    counted: int
    predicted: float
    discrepancy: float
    xi_grid_size: int
    mode: str = "numeric"
    normalize_sqrt_h: bool = False
    fibers: tuple = ()
    failed: tuple = ()
    skipped: int = 0
    ambiguous: int = 0
    csv21_ok: bool = True


def weyl_fibers(model: ModelSpec | str, window: WeylWindow) -> list[float]:
    """Fibers ``xi`` in ``h Z`` relevant to the window, ascending."""
    m = ModelSpec.coerce(model)
    h = window.h
    if m is ModelSpec.SINE:
        jmax = int(math.floor((1.0 - 1e-12) / h))
        return [j * h for j in range(-jmax, jmax + 1)]
    xmin = -((0.75 * 2.0 * window.b) ** (2.0 / 3.0))
    jmin = int(math.floor(xmin / h))
    return [j * h for j in range(jmin, 0)]


def _csv21_ok(model: ModelSpec, window: WeylWindow) -> bool:
    u = abs(s0_inverse(model, window.a)[0])
    delta = 1.0 - u if model is ModelSpec.SINE else u
    if not 0 < delta < 1:
        return delta >= 1
    return window.h <= delta**1.5 / math.log(1.0 / delta)


def _weyl_fiber(args):
    model, xi, window, policy, mode, normalize, normalization = args
    h = window.h
    P = Problem(model, xi, h)
    if regime(P) == "elliptic":
        return ("skip", xi, None, None)
    if mode == "predicted_t0":
        return ("ok", xi, m_plus(P, normalization).log_value, 0.0)
    lo = -window.b / h + (0.5 * math.log(h) if normalize else 0.0)
    thr = math.exp(lo)
    try:
        disc = policy.discretize(P)
        A = build_matrix(P, disc, precision="standard", **(dict(c_modes=policy.c_modes) if isinstance(disc, Fourier) else {}))
        tol = 1e-6 * thr / A.scale
        pol = replace(policy, precision="auto" if policy.precision == "auto" else policy.precision)
        hint = max(thr, _t0_hint(P))
        if pol.precision == "auto" and thr >= 1e4 * precision_floor(A.scale, "standard"):
            pol = replace(pol, precision="standard")
        elif pol.precision == "auto":
            pol = replace(pol, precision="extended")
        nd = policy.digits or digits_for(1e-6 * thr, A.scale, rel=1.0)
        s = solve_fiber(P, pol, 1, t0_hint=hint, disc=disc, tol=tol, rtol=None, digits=nd)
    except SvlabError as exc:
        return ("fail", xi, f"{type(exc).__name__}: {exc}", None)
    t0 = s.values[0]
    return ("ok", xi, math.log(t0) if t0 > 0 else -math.inf, s.residuals[0] / t0 if t0 > 0 else math.inf)


def weyl_experiment(
    model: ModelSpec | str,
    window: WeylWindow,
    mode: str = "numeric",
    disc_policy: DiscPolicy | None = None,
    *,
    normalize_sqrt_h: bool = False,
    normalization: str = "bracket",
    jobs: int = 1,
) -> WeylReport:
    """Count fibers whose ``t0`` lies in ``[exp(-b/h), exp(-a/h)]``.

    Parameters
    ----------
    mode : {"numeric", "predicted_t0"}
        Certified solves per fiber, or the closed form ``m_plus``.
    normalize_sqrt_h : bool
        Compare ``t0 / sqrt(h)`` instead of ``t0`` with the window, which
        moves both edges by ``log(h)/2`` on the log scale.
    normalization : str
        Prefactor convention of ``m_plus`` in ``predicted_t0`` mode.
    """
    m = ModelSpec.coerce(model)
    window.validate(m)
    if mode not in ("numeric", "predicted_t0"):
        raise DomainError(f"mode must be 'numeric' or 'predicted_t0', got {mode!r}")
    policy = disc_policy or DiscPolicy(c_modes=4.0)
    ok21 = _csv21_ok(m, window)
    if not ok21:
        warnings.warn("window violates h << delta^(3/2) / log(1/delta); counts may be unreliable", stacklevel=2)
    predicted = weyl_predicted(m, window)
    h = window.h
    shift = 0.5 * math.log(h) if normalize_sqrt_h else 0.0
    lo, hi = -window.b / h + shift, -window.a / h + shift
    xs = weyl_fibers(m, window)
    items = [(m, xi, window, policy, mode, normalize_sqrt_h, normalization) for xi in xs]
    results = _pmap(_weyl_fiber, items, jobs)
    counted, skipped, ambiguous = 0, 0, 0
    fibers, failed = [], []
    for status, xi, val, rel in results:
        if status == "skip":
            skipped += 1
        elif status == "fail":
            failed.append((xi, val))
        else:
            fibers.append((xi, math.exp(val)))
            if lo <= val <= hi:
                counted += 1
            if rel and rel < 1 and any(abs(val - e) <= 2.0 * rel for e in (lo, hi)):
                ambiguous += 1
    return WeylReport(
        window, counted, predicted, counted - predicted, len(xs), mode, normalize_sqrt_h,
        tuple(fibers), tuple(failed), skipped, ambiguous, ok21,
    )
