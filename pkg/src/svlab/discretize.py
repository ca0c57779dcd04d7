"""Banded matrix representations of the fiber operators.

Sine model
    Orthonormal Fourier basis ``exp(i k y)/sqrt(2 pi)``, ``k = -N..N``.  The
    derivative is diagonal and ``cos y`` couples neighbouring modes, so the
    matrix is tridiagonal with diagonal ``xi + i h k`` and off-diagonals 1/2.

Cubic model
    Uniform grid on ``[-L, L]`` with nodes ``y_j = -L + j dy``,
    ``dy = 2L/(points-1)``.  The default ``"staggered"`` scheme keeps the
    unknowns ``u_1..u_n`` at the nodes (``u_0 = 0``, a Dirichlet condition at
    the left end where the zero mode ``exp(-f/h)`` is negligible) and
    evaluates ``h u' + (xi + y**2) u`` at the midpoints.  Derivative and
    interpolation weights are of order 2 or 4.  The ``"centered"`` scheme
    uses the textbook centered difference on the nodes with Dirichlet ends.
    It is kept for reference only: conjugating by ``diag((-1)**j)`` maps its
    matrix to the transpose, so every singular value appears twice and the
    spectral gap above ``t0`` disappears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, NamedTuple, Union

import gmpy2
import numpy as np
from scipy import optimize

from . import _xprec
from .asymptotics import action_S0
from .errors import DomainError, SizeError
from .model import ModelSpec, Problem, phase, wells

__all__ = [
    "C_MODES",
    "DY_RULE",
    "TRUNCATION_FACTOR",
    "BandedComplexMatrix",
    "Fourier",
    "Grid",
    "Discretization",
    "TruncationReport",
    "build_sine_matrix",
    "build_cubic_matrix",
    "build_matrix",
    "truncation_check",
    "auto_discretization",
]

# N >= ceil(C_MODES / h) Fourier modes by default.
C_MODES = 40.0
# Resolution rule: dy <= h / DY_RULE.
DY_RULE = 4.0
# Adequate truncation: boundary mass <= TRUNCATION_FACTOR * exp(-S0/h).
TRUNCATION_FACTOR = 1e-3


@dataclass(frozen=True)
class Fourier:
    """Fourier truncation ``|k| <= n_modes``; matrix dimension ``2 n_modes + 1``."""

    n_modes: int

    @property
    def dim(self) -> int:
        return 2 * self.n_modes + 1


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-half_width, half_width]`` with ``points`` nodes."""

    half_width: float
    points: int
    stencil_order: int = 4
    scheme: str = "staggered"

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def dim(self) -> int:
        return self.points - 1 if self.scheme == "staggered" else self.points - 2


Discretization = Union[Fourier, Grid]


class TruncationReport(NamedTuple):
    boundary_mass: float
    adequate: bool
    log_boundary_mass: float


@dataclass(frozen=True, eq=False)
class BandedComplexMatrix:
    """Square banded matrix in LAPACK band layout.

    ``entries[upper_bandwidth + i - j, j] == A[i, j]`` for
    ``-lower_bandwidth <= j - i <= upper_bandwidth``; all other entries are
    zero.  ``entries`` is a float/complex array in standard precision and an
    object array of gmpy2 scalars in extended precision.  ``scale`` bounds
    the maximum column 1-norm from above.
    """

    dim: int
    lower_bandwidth: int
    upper_bandwidth: int
    entries: np.ndarray
    scale: float
    precision_kind: str = "standard"
    digits: int | None = None

    @classmethod
    def from_diagonals(cls, dim: int, diagonals: dict, precision_kind: str = "standard", digits: int | None = None):
        """Assemble from ``{offset: values}`` with ``A[i, i + offset] = values[...]``."""
        kl = max(0, -min(diagonals))
        ku = max(0, max(diagonals))
        extended = precision_kind == "extended"
        if extended:
            cplx = any(isinstance(v, _xprec.MPC) for d in diagonals.values() for v in d)
            ab = _xprec.zeros((kl + ku + 1, dim), cplx)
        else:
            cplx = any(np.iscomplexobj(np.asarray(d)) for d in diagonals.values())
            ab = np.zeros((kl + ku + 1, dim), dtype=complex if cplx else float)
        for o, vals in diagonals.items():
            j0, j1 = max(0, o), dim + min(0, o)
            if len(vals) != j1 - j0:
                raise ValueError(f"diagonal {o} needs {j1 - j0} values, got {len(vals)}")
            ab[ku - o, j0:j1] = vals
        if not extended:
            ab.setflags(write=False)
        return cls(dim, kl, ku, ab, _column_norm_bound(ab, extended), precision_kind, digits)

    @property
    def is_extended(self) -> bool:
        return self.precision_kind == "extended"

    @property
    def is_complex(self) -> bool:
        if self.is_extended:
            return any(isinstance(v, _xprec.MPC) for v in self.entries.ravel())
        return np.iscomplexobj(self.entries)

    def diagonal(self, offset: int) -> np.ndarray:
        """Values ``A[i, i + offset]`` for all valid ``i``."""
        j0, j1 = max(0, offset), self.dim + min(0, offset)
        if abs(offset) >= self.dim:
            return self.entries[:0, 0]
        if not -self.lower_bandwidth <= offset <= self.upper_bandwidth:
            return np.zeros(j1 - j0, dtype=self.entries.dtype) if not self.is_extended else _xprec.zeros(j1 - j0, False)
        return self.entries[self.upper_bandwidth - offset, j0:j1]

    def offsets(self) -> range:
        return range(-self.lower_bandwidth, self.upper_bandwidth + 1)

    def to_dense(self) -> np.ndarray:
        n = self.dim
        if self.is_extended:
            out = _xprec.zeros((n, n), self.is_complex)
        else:
            out = np.zeros((n, n), dtype=self.entries.dtype)
        for o in self.offsets():
            d = self.diagonal(o)
            i = np.arange(len(d)) + max(0, -o)
            out[i, i + o] = d
        return out

    def conj_transpose(self) -> "BandedComplexMatrix":
        diags = {-o: np.conj(self.diagonal(o)) for o in self.offsets() if abs(o) < self.dim}
        return BandedComplexMatrix.from_diagonals(self.dim, diags, self.precision_kind, self.digits)

    def to_extended(self, digits: int) -> "BandedComplexMatrix":
        """Exact conversion of a standard matrix to extended scalars."""
        if self.is_extended:
            return self
        diags = {o: _xprec.array(self.diagonal(o)) for o in self.offsets() if abs(o) < self.dim}
        return BandedComplexMatrix.from_diagonals(self.dim, diags, "extended", digits)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``A @ x`` for a vector or a block of column vectors."""
        return _band_apply(self, x, adjoint=False)

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """``A^* @ x`` (conjugate transpose)."""
        return _band_apply(self, x, adjoint=True)

    def dump(self, fh: IO[str]) -> None:
        """Write nonzero entries as ``row col re im`` lines (17 significant digits)."""
        for j in range(self.dim):
            for i in range(max(0, j - self.upper_bandwidth), min(self.dim, j + self.lower_bandwidth + 1)):
                v = complex(self.entries[self.upper_bandwidth + i - j, j])
                if v != 0:
                    fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def _column_norm_bound(ab: np.ndarray, extended: bool) -> float:
    if extended:
        mags = np.array([[abs(complex(v)) for v in row] for row in ab])
    else:
        mags = np.abs(ab)
    col = mags.sum(axis=0).max() if mags.size else 0.0
    # relative slack covers rounding of the sum and of the conversion
    return float(col) * (1.0 + 1e-12)


def _band_apply(A: BandedComplexMatrix, x: np.ndarray, adjoint: bool) -> np.ndarray:
    x = np.asarray(x)
    vec = x.ndim == 1
    X = x[:, None] if vec else x
    n = A.dim
    if A.is_extended:
        cplx = A.is_complex or any(isinstance(v, _xprec.MPC) for v in X.ravel())
        Y = _xprec.zeros(X.shape, cplx)
    else:
        Y = np.zeros(X.shape, dtype=np.result_type(A.entries.dtype, X.dtype))
    for o in A.offsets():
        if abs(o) >= n:
            continue
        d = A.diagonal(o)
        rows = np.arange(len(d)) + max(0, -o)
        cols = rows + o
        if adjoint:
            Y[cols] += np.conj(d)[:, None] * X[rows]
        else:
            Y[rows] += d[:, None] * X[cols]
    return Y[:, 0] if vec else Y


def _precision(precision: str | None) -> str:
    if precision is None:
        from .smallsvd import get_precision

        return get_precision()[0]
    if precision not in ("standard", "extended"):
        raise DomainError(f"precision must be 'standard' or 'extended', got {precision!r}")
    return precision


def _digits(digits: int | None) -> int:
    if digits is None:
        from .smallsvd import get_precision

        return get_precision()[1]
    return int(digits)


def build_sine_matrix(
    problem: Problem,
    disc: Fourier,
    *,
    adjoint: bool = False,
    c_modes: float = C_MODES,
    override: bool = False,
    precision: str | None = None,
    digits: int | None = None,
) -> BandedComplexMatrix:
    """Tridiagonal Fourier matrix of ``P_xi`` (or ``P_xi^*``) for the sine model.

    Raises
    ------
    SizeError
        If ``n_modes < ceil(c_modes / h)`` and ``override`` is false.
    """
    if problem.model is not ModelSpec.SINE:
        raise DomainError("build_sine_matrix needs the sine model")
    N = int(disc.n_modes)
    if N < 1:
        raise SizeError("n_modes must be >= 1")
    need = math.ceil(c_modes / problem.h - 1e-9)
    if N < need and not override:
        raise SizeError(f"n_modes={N} below ceil(c_modes/h)={need}")
    kind = _precision(precision)
    sgn = -1.0 if adjoint else 1.0
    k = np.arange(-N, N + 1)
    if kind == "extended":
        nd = _digits(digits)
        with _xprec.working_digits(nd):
            xi, hs = gmpy2.mpfr(problem.xi), gmpy2.mpfr(sgn * problem.h)
            diag = np.array([gmpy2.mpc(xi, hs * int(kk)) for kk in k], dtype=object)
            half = np.array([gmpy2.mpc(0.5)] * (2 * N), dtype=object)
            return BandedComplexMatrix.from_diagonals(disc.dim, {-1: half, 0: diag, 1: half.copy()}, "extended", nd)
    diag = problem.xi + 1j * (sgn * problem.h) * k
    half = np.full(2 * N, 0.5 + 0j)
    return BandedComplexMatrix.from_diagonals(disc.dim, {-1: half, 0: diag, 1: half.copy()})


# (offsets, derivative weights, interpolation weights) per scheme and order
_STENCILS = {
    ("staggered", 2): ((-1, 0), (-1.0, 1.0), (0.5, 0.5)),
    ("staggered", 4): ((-2, -1, 0, 1), (1 / 24, -27 / 24, 27 / 24, -1 / 24), (-1 / 16, 9 / 16, 9 / 16, -1 / 16)),
    ("centered", 2): ((-1, 0, 1), (-0.5, 0.0, 0.5), (0.0, 1.0, 0.0)),
    ("centered", 4): ((-2, -1, 0, 1, 2), (1 / 12, -8 / 12, 0.0, 8 / 12, -1 / 12), (0.0, 0.0, 1.0, 0.0, 0.0)),
}


def _stencil_exact(scheme: str, order: int):
    # rational weights rebuilt in extended precision
    offs, dw, iw = _STENCILS[(scheme, order)]
    num = {
        ("staggered", 2): ((-1, 1), 1, (1, 1), 2),
        ("staggered", 4): ((1, -27, 27, -1), 24, (-1, 9, 9, -1), 16),
        ("centered", 2): ((-1, 0, 1), 2, (0, 1, 0), 1),
        ("centered", 4): ((1, -8, 0, 8, -1), 12, (0, 0, 1, 0, 0), 1),
    }[(scheme, order)]
    d = [gmpy2.mpfr(a) / num[1] for a in num[0]]
    w = [gmpy2.mpfr(a) / num[3] for a in num[2]]
    return offs, d, w


def build_cubic_matrix(
    problem: Problem,
    disc: Grid,
    *,
    adjoint: bool = False,
    override: bool = False,
    precision: str | None = None,
    digits: int | None = None,
) -> BandedComplexMatrix:
    """Real banded grid matrix of ``P_xi`` (or ``P_xi^*``) for the cubic model.

    Row ``r`` of the staggered scheme sits at ``-L + (r + 1/2) dy`` and
    couples the nodal unknowns through the derivative and interpolation
    weights of the stencil.  The adjoint is assembled from the same weights
    on the dual (transposed) stencil, i.e. it represents ``-h d/dy + V`` for
    the discrete pairing between nodes and midpoints.

    Raises
    ------
    SizeError
        If ``points < 16``, ``dy > h/4`` or ``L <= max(1, sqrt|xi|) + 1``,
        unless ``override`` is set.
    """
    if problem.model is not ModelSpec.CUBIC:
        raise DomainError("build_cubic_matrix needs the cubic model")
    key = (disc.scheme, int(disc.stencil_order))
    if key not in _STENCILS:
        raise DomainError(f"unsupported scheme/order {key}")
    if disc.points < 16:
        raise SizeError(f"points={disc.points} < 16")
    L, h, xi = float(disc.half_width), problem.h, problem.xi
    dy = disc.spacing
    if not override:
        if dy > h / DY_RULE:
            raise SizeError(f"grid spacing {dy:.3g} exceeds h/{DY_RULE:g} = {h / DY_RULE:.3g}")
        if not L > max(1.0, math.sqrt(abs(xi))) + 1.0:
            raise SizeError(f"half_width {L} must exceed max(1, sqrt|xi|) + 1")
    n = disc.dim
    staggered = disc.scheme == "staggered"
    shift = 0.5 if staggered else 1.0
    kind = _precision(precision)
    if kind == "extended":
        nd = _digits(digits)
        with _xprec.working_digits(nd):
            offs, dw, iw = _stencil_exact(*key)
            Lx, hx, xix = gmpy2.mpfr(L), gmpy2.mpfr(h), gmpy2.mpfr(xi)
            dyx = 2 * Lx / (disc.points - 1)
            c = hx / dyx
            ys = [-Lx + (r + gmpy2.mpfr(shift)) * dyx for r in range(n)]
            V = np.array([xix + y * y for y in ys], dtype=object)
            diags = _assemble(n, offs, [c * d for d in dw], iw, V, adjoint)
            return BandedComplexMatrix.from_diagonals(n, diags, "extended", nd)
    offs, dw, iw = _STENCILS[key]
    c = h / dy
    ys = -L + (np.arange(n) + shift) * dy
    V = xi + ys * ys
    diags = _assemble(n, offs, [c * d for d in dw], iw, V, adjoint)
    return BandedComplexMatrix.from_diagonals(n, diags)


def _assemble(n, offs, dw, iw, V, adjoint):
    diags = {}
    for o, d, w in zip(offs, dw, iw):
        if abs(o) >= n:
            continue
        rows = np.arange(max(0, -o), n - max(0, o))
        vals = np.array([d + w * V[r] for r in rows], dtype=V.dtype) if V.dtype == object else d + w * V[rows]
        if adjoint:
            # entry (r, r+o) of P becomes entry (r+o, r) of the adjoint
            diags[-o] = diags.get(-o, 0) + vals
        else:
            diags[o] = diags.get(o, 0) + vals
    return diags


def build_matrix(problem: Problem, disc: Discretization, **kw) -> BandedComplexMatrix:
    """Dispatch to the builder that matches ``disc``."""
    if isinstance(disc, Fourier):
        return build_sine_matrix(problem, disc, **kw)
    return build_cubic_matrix(problem, disc, **kw)


def _cubic_agmon(xi: float, a: float, b: float) -> float:
    # piecewise |f|-increments between the zeros of xi + y**2
    lo, hi = min(a, b), max(a, b)
    knots = [lo]
    if xi < 0:
        r = math.sqrt(-xi)
        knots += [z for z in (-r, r) if lo < z < hi]
    knots.append(hi)
    f = lambda y: y**3 / 3.0 + xi * y  # noqa: E731
    return sum(abs(f(q) - f(p)) for p, q in zip(knots[:-1], knots[1:]))


def _fourier_log_mass(xi: float, h: float, N: int) -> float:
    k = np.arange(1, N + 1)
    rate = 2.0 * np.abs(xi + 1j * h * k) - 1.0
    return -float(np.sum(np.log(np.maximum(rate, 1.0))))


def truncation_check(problem: Problem, disc: Discretization) -> TruncationReport:
    """Certify that the truncated domain captures both quasimodes.

    Grid: ``boundary_mass`` is the largest envelope ``exp(-d(y_pm, b)/h)``
    over both wells and both endpoints ``b = +-L``.  Fourier: the decay
    bound ``prod_k 1 / max(1, 2|xi + i h k| - 1)`` for ``k = 1..N`` of the
    mode coefficients of any quasimode, from the continued-fraction form of
    the three-term recurrence.  In both cases the truncation is adequate
    when ``boundary_mass <= 1e-3 exp(-S0/h)``.
    """
    m, xi, h = problem.model, problem.xi, problem.h
    w = wells(m, xi)
    s0 = action_S0(m, xi)
    if isinstance(disc, Grid):
        if m is not ModelSpec.CUBIC:
            raise DomainError("grid truncation applies to the cubic model")
        L = float(disc.half_width)
        d = min(_cubic_agmon(xi, y0, b) for y0 in (w.y_plus, w.y_minus) for b in (-L, L))
        log_mass = -d / h
    else:
        if m is not ModelSpec.SINE:
            raise DomainError("Fourier truncation applies to the sine model")
        log_mass = _fourier_log_mass(xi, h, int(disc.n_modes))
    adequate = log_mass <= math.log(TRUNCATION_FACTOR) - s0 / h
    return TruncationReport(math.exp(log_mass), bool(adequate), log_mass)


def auto_discretization(
    problem: Problem,
    *,
    c_modes: float = C_MODES,
    dy_ratio: float = 8.0,
    stencil_order: int = 4,
    margin: float = 1e-12,
) -> Discretization:
    """Size a discretization for ``problem``.

    Fourier: ``N = ceil(c_modes/h)``, enlarged until :func:`truncation_check`
    passes.  Grid: ``dy = h / (dy_ratio max(1, |xi|))`` and ``L`` taken as
    the smallest value whose boundary envelopes lie below
    ``margin exp(-S0/h)``, but at least ``max(1, sqrt|xi|) + 1.05``.
    """
    xi, h = problem.xi, problem.h
    if problem.model is ModelSpec.SINE:
        N = max(1, math.ceil(c_modes / h - 1e-9))
        if abs(xi) < 1.0:
            while not truncation_check(problem, Fourier(N)).adequate:
                N = math.ceil(1.25 * N)
        return Fourier(N)
    L = max(1.0, math.sqrt(abs(xi))) + 1.05
    target = h * math.log(1.0 / margin)
    if xi < 0:
        r = math.sqrt(-xi)
        target += action_S0(problem.model, xi)
        g = lambda y: phase(problem.model, y, xi) - phase(problem.model, r, xi) - target  # noqa: E731
    else:
        g = lambda y: phase(problem.model, y, xi) - target  # noqa: E731
        r = 0.0
    hi = r + 1.0
    while g(hi) < 0:
        hi *= 2.0
    L = max(L, optimize.brentq(g, r, hi, xtol=1e-12))
    dy = h / (dy_ratio * max(1.0, abs(xi)))
    points = int(math.ceil(2.0 * L / dy)) + 1
    return Grid(L, points, stencil_order)
