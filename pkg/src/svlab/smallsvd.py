"""Smallest singular values of banded matrices with residual certificates.

Method
------
Block inverse subspace iteration on ``A^* A``: each sweep applies
``A^{-1} A^{-*}`` through a banded LU factorization computed once, then a
Rayleigh-Ritz step (QR of ``A X`` followed by the SVD of the small triangular
factor).  Pairs whose certificate holds are locked, and their directions are
projected out after every solve.  This keeps the iteration accurate when
``t0`` is many orders of magnitude below ``t1``, where an unlocked block
would collapse onto the first singular vector.

Every returned value carries the residual
``max(||A v - t u||, ||A^* u - t v||)`` of its unit vectors.  One more value
than requested is computed and reported as ``gap_value``.

Precision
---------
``standard`` uses LAPACK in double precision.  ``extended`` runs the same
algorithm on gmpy2 MPFR/MPC scalars with a configurable number of decimal
digits (default 32), so ``t0`` values far below ``1e-16 * scale`` can be
resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from scipy.linalg import lapack

from . import _xprec
from .discretize import BandedComplexMatrix
from .errors import ConvergenceError, DomainError, PrecisionError

__all__ = [
    "SingularSpectrum",
    "set_precision",
    "get_precision",
    "precision_floor",
    "check_precision",
    "digits_for",
    "smallest_singular_values",
    "dense_singular_values",
]

EPS = float(np.finfo(float).eps)
FLOOR_FACTOR = 100.0
DEFAULT_DIGITS = 32
_SEED = 20240601

_STATE = {"kind": "standard", "digits": DEFAULT_DIGITS}


def set_precision(kind: str, digits: int | None = None) -> None:
    """Select the default scalar kind for matrix assembly and solves."""
    if kind not in ("standard", "extended"):
        raise DomainError(f"precision kind must be 'standard' or 'extended', got {kind!r}")
    _STATE["kind"] = kind
    if digits is not None:
        if digits < 16:
            raise DomainError("extended precision needs at least 16 digits")
        _STATE["digits"] = int(digits)


def get_precision() -> tuple[str, int]:
    """Current default ``(kind, digits)``."""
    return _STATE["kind"], _STATE["digits"]


def precision_floor(scale: float, kind: str | None = None, digits: int | None = None) -> float:
    """Smallest ``t0`` the given precision resolves: ``100 * eps * scale``."""
    kind = kind or _STATE["kind"]
    if kind == "standard":
        return FLOOR_FACTOR * EPS * scale
    return FLOOR_FACTOR * _xprec.unit_roundoff(digits or _STATE["digits"]) * scale


def check_precision(t0_hint: float, scale: float, kind: str | None = None, digits: int | None = None) -> None:
    """Raise :class:`PrecisionError` when ``t0_hint`` is below the floor."""
    floor = precision_floor(scale, kind, digits)
    if t0_hint < floor:
        raise PrecisionError(
            f"predicted t0 = {t0_hint:.3e} below the {kind or _STATE['kind']} precision floor {floor:.3e}"
        )


def digits_for(t0_hint: float, scale: float, rel: float = 1e-12, minimum: int = DEFAULT_DIGITS) -> int:
    """Decimal digits that resolve ``t0_hint`` to relative accuracy ``rel``."""
    if not t0_hint > 0:
        return minimum
    need = math.log10(scale / t0_hint) - math.log10(rel) + math.log10(FLOOR_FACTOR) + 2
    return max(minimum, int(math.ceil(need)))


@dataclass(frozen=True)
class SingularSpectrum:
    """Result of :func:`smallest_singular_values`.

    Attributes
    ----------
    values, residuals : tuple of float
        Ascending singular values and the certified residual of each.
    precision_kind : str
    converged : bool
        Whether every requested residual met its target.
    gap_value : float
        The next singular value after the requested ones (``nan`` if
        ``k == dim``); its residual is not required to converge.
    """

    values: tuple
    residuals: tuple
    precision_kind: str
    converged: bool = True
    gap_value: float = math.nan
    iterations: int = 0
    scale: float = math.nan
    digits: int | None = None
    right_vectors: np.ndarray | None = field(default=None, repr=False)
    left_vectors: np.ndarray | None = field(default=None, repr=False)


class _Ops:
    """Linear-algebra kernels for one precision kind."""

    def __init__(self, extended: bool, cplx: bool):
        self.extended = extended
        self.cplx = cplx

    def random(self, n, p):
        rng = np.random.default_rng(_SEED)
        x = rng.standard_normal((n, p))
        if self.cplx:
            x = x + 1j * rng.standard_normal((n, p))
        return _xprec.array(x, self.cplx) if self.extended else x

    def eye(self, n):
        if not self.extended:
            return np.eye(n, dtype=complex if self.cplx else float)
        out = _xprec.zeros((n, n), self.cplx)
        for i in range(n):
            out[i, i] = gmpy2.mpc(1) if self.cplx else gmpy2.mpfr(1)
        return out

    def norm(self, v) -> float:
        return float(_xprec.norm(v)) if self.extended else float(np.linalg.norm(v))

    def qr(self, B):
        if not self.extended:
            return np.linalg.qr(B)
        n, p = B.shape
        Q = B.copy()
        R = _xprec.zeros((p, p), self.cplx)
        for j in range(p):
            v = Q[:, j].copy()
            for _ in range(2):
                for i in range(j):
                    c = np.dot(np.conj(Q[:, i]), v)
                    R[i, j] += c
                    v = v - c * Q[:, i]
            nv = _xprec.norm(v)
            R[j, j] = nv
            Q[:, j] = v / nv if nv != 0 else v
        return Q, R

    def svd(self, R):
        if not self.extended:
            return np.linalg.svd(R)
        return _xprec.small_svd(R)

    def project_out(self, X, basis):
        if not basis:
            return X
        Bm = np.stack(basis, axis=1)
        for _ in range(2):
            X = X - Bm @ (np.conj(Bm.T) @ X)
        return X


class _LapackLU:
    def __init__(self, A: BandedComplexMatrix, shift: float = 0.0):
        kl, ku, n = A.lower_bandwidth, A.upper_bandwidth, A.dim
        self.cplx = A.is_complex
        dtype = complex if self.cplx else float
        ab = np.zeros((2 * kl + ku + 1, n), dtype=dtype)
        ab[kl:, :] = A.entries
        if shift:
            ab[kl + ku, :] += shift
        trf = lapack.zgbtrf if self.cplx else lapack.dgbtrf
        self.trs = lapack.zgbtrs if self.cplx else lapack.dgbtrs
        self.lu, self.piv, info = trf(ab, kl, ku)
        self.kl, self.ku = kl, ku
        self.singular = info > 0
        if info < 0:
            raise ConvergenceError(f"band factorization failed (info={info})")

    def solve(self, B, adjoint=False):
        trans = (2 if self.cplx else 1) if adjoint else 0
        x, info = self.trs(self.lu, self.kl, self.ku, B, self.piv, trans=trans)
        if info != 0:
            raise ConvergenceError(f"band solve failed (info={info})")
        return x


class _ExtendedLU:
    """Band LU with partial pivoting on extended scalars."""

    def __init__(self, A: BandedComplexMatrix, tiny):
        n, kl, ku = A.dim, A.lower_bandwidth, A.upper_bandwidth
        ab = A.entries
        rows = [[ab[ku + i - j, j] for j in range(max(0, i - kl), min(n, i + ku + 1))] for i in range(n)]
        cplx = A.is_complex
        zero = gmpy2.mpc(0) if cplx else gmpy2.mpfr(0)
        mag = gmpy2.norm if cplx else (lambda z: z * z)
        piv, mults, U = [], [], []
        for j in range(n):
            last = min(n, j + kl + 1)
            p = max(range(j, last), key=lambda i: mag(rows[i][0]))
            rows[j], rows[p] = rows[p], rows[j]
            prow = rows[j]
            if prow[0] == 0:
                prow[0] = prow[0] + tiny
            d = prow[0]
            mj = []
            for i in range(j + 1, last):
                r = rows[i]
                m = r[0] / d
                width = max(len(r), len(prow)) - 1
                r = r[1:] + [zero] * (width - len(r) + 1)
                for t in range(1, len(prow)):
                    r[t - 1] = r[t - 1] - m * prow[t]
                rows[i] = r
                mj.append(m)
            piv.append(p)
            mults.append(mj)
            U.append(prow)
        self.n, self.piv, self.mults, self.U = n, piv, mults, U

    def solve(self, B, adjoint=False):
        n = self.n
        y = [B[i].copy() for i in range(n)]
        if not adjoint:
            for j in range(n):
                p = self.piv[j]
                if p != j:
                    y[j], y[p] = y[p], y[j]
                for t, m in enumerate(self.mults[j]):
                    y[j + 1 + t] = y[j + 1 + t] - m * y[j]
            for j in range(n - 1, -1, -1):
                row = self.U[j]
                s = y[j]
                for t in range(1, len(row)):
                    if j + t < n:
                        s = s - row[t] * y[j + t]
                y[j] = s / row[0]
        else:
            for c in range(n):
                row = self.U[c]
                y[c] = y[c] / row[0].conjugate()
                for t in range(1, len(row)):
                    if c + t < n:
                        y[c + t] = y[c + t] - row[t].conjugate() * y[c]
            for j in range(n - 1, -1, -1):
                for t, m in enumerate(self.mults[j]):
                    y[j] = y[j] - m.conjugate() * y[j + 1 + t]
                p = self.piv[j]
                if p != j:
                    y[j], y[p] = y[p], y[j]
        return np.array(y, dtype=object).reshape(B.shape)


def _ritz(A, ops, X, W=None):
    """Two-sided Rayleigh-Ritz on right basis ``X`` and left basis ``W``.

    With ``W`` omitted the left basis is the orthonormalized ``A X``.
    Returns ascending values with right and left vectors.
    """
    B = A.matvec(X)
    if W is None:
        W, M = ops.qr(B)
    else:
        M = np.conj(W.T) @ B
    Ur, s, Wh = ops.svd(M)
    order = sorted(range(len(s)), key=lambda i: s[i])
    V = X @ np.conj(Wh.T)[:, order]
    Uv = W @ Ur[:, order]
    vals = [s[i] for i in order]
    return vals, V, Uv


def _residual(A, ops, t, v, u) -> float:
    r1 = ops.norm(A.matvec(v) - t * u)
    r2 = ops.norm(A.rmatvec(u) - t * v)
    return max(r1, r2)


def dense_singular_values(A: BandedComplexMatrix) -> np.ndarray:
    """All singular values of ``A`` (ascending) from a dense LAPACK SVD."""
    M = A.to_dense()
    if A.is_extended:
        M = _xprec.to_complex(M)
    return np.sort(np.linalg.svd(M, compute_uv=False))


def smallest_singular_values(
    A: BandedComplexMatrix,
    k: int = 1,
    tol: float = 1e-12,
    *,
    rtol: float | None = None,
    t0_hint: float | None = None,
    precision: str | None = None,
    digits: int | None = None,
    method: str = "auto",
    max_iter: int = 300,
    block: int | None = None,
    raise_on_failure: bool = True,
    return_vectors: bool = False,
) -> SingularSpectrum:
    """The ``k`` smallest singular values of a banded matrix.

    Parameters
    ----------
    A : BandedComplexMatrix
    k : int
        Number of values requested, ``1 <= k <= dim``.
    tol : float
        Residual target relative to ``A.scale``: value ``i`` is accepted once
        its residual is at most ``tol * scale``.
    rtol : float, optional
        Alternative relative target: value ``i`` is also accepted once its
        residual is at most ``rtol * t_i``.
    t0_hint : float, optional
        Predicted ``t0``.  In standard precision a hint below
        ``100 eps scale`` raises :class:`PrecisionError`.
    precision : {"standard", "extended"}, optional
        Defaults to the kind of ``A`` if extended, else the global default.
    digits : int, optional
        Extended-precision decimal digits.
    method : {"auto", "iterative", "dense"}
        ``dense`` performs a single Rayleigh-Ritz step on the full space.
    max_iter : int
    block : int, optional
        Subspace dimension, default ``2k + 4``.
    raise_on_failure : bool
        Raise :class:`ConvergenceError` when targets are missed; otherwise
        return with ``converged=False``.
    return_vectors : bool
        Attach right/left singular vectors (complex128) to the result.

    Returns
    -------
    SingularSpectrum
    """
    n = A.dim
    if not 1 <= k <= n:
        raise DomainError(f"k = {k} must lie in [1, {n}]")
    if tol < 0 or (tol == 0 and not rtol):
        raise DomainError("tol must be > 0 unless rtol is given")
    kind = precision or ("extended" if A.is_extended else _STATE["kind"])
    if kind not in ("standard", "extended"):
        raise DomainError(f"unknown precision {kind!r}")
    extended = kind == "extended"
    nd = digits or A.digits or _STATE["digits"]
    if t0_hint is not None and not extended:
        check_precision(t0_hint, A.scale, "standard")
    if extended:
        with _xprec.working_digits(nd):
            B = A.to_extended(nd)
            return _solve(B, k, tol, rtol, method, max_iter, block, raise_on_failure, return_vectors, nd)
    if A.is_extended:
        raise DomainError("standard precision requested for an extended matrix")
    return _solve(A, k, tol, rtol, method, max_iter, block, raise_on_failure, return_vectors, None)


def _solve(A, k, tol, rtol, method, max_iter, block, raise_on_failure, return_vectors, nd):
    n = A.dim
    extended = A.is_extended
    ops = _Ops(extended, A.is_complex)
    p = min(n, block or 2 * k + 4)
    target_abs = tol * A.scale
    kk = min(k + 1, n)

    def accepted(t, r):
        return r <= target_abs or (rtol is not None and r <= rtol * t)

    locked: list = []  # (t, residual, v, u)
    iters = 0
    if method == "dense" or n <= 2 * p:
        vals, V, Uv = _ritz(A, ops, ops.eye(n))
        pairs = [(vals[i], V[:, i], Uv[:, i]) for i in range(kk)]
    else:
        if extended:
            tiny = gmpy2.mpfr(_xprec.unit_roundoff(nd) * A.scale)
            lu = _ExtendedLU(A, tiny)
        else:
            lu = _LapackLU(A)
            if lu.singular:
                lu = _LapackLU(A, shift=EPS * A.scale)
        X = ops.random(n, p)
        pairs = []
        while True:
            iters += 1
            lv = [q[2] for q in locked]
            lu_left = [q[3] for q in locked]
            Y = ops.project_out(lu.solve(X, adjoint=True), lu_left)
            W = ops.qr(ops.project_out(ops.qr(Y)[0], lu_left))[0]
            Z = ops.project_out(lu.solve(Y), lv)
            X = ops.qr(ops.project_out(ops.qr(Z)[0], lv))[0]
            vals, V, Uv = _ritz(A, ops, X, W)
            pairs = [(vals[i], V[:, i], Uv[:, i]) for i in range(len(vals))]
            # lock the leading run of accepted pairs
            while len(locked) < k and pairs:
                t, v, u = pairs[0]
                r = _residual(A, ops, t, v, u)
                if not accepted(t, r):
                    break
                locked.append((t, r, v, u))
                pairs.pop(0)
            if len(locked) >= k or iters >= max_iter:
                break
            X = np.stack([q[1] for q in pairs], axis=1)
        pairs = [(q[0], q[2], q[3]) for q in locked] + pairs
        locked = []
    out = []
    for t, v, u in pairs[:kk]:
        out.append((float(t), _residual(A, ops, t, v, u), v, u))
    out.sort(key=lambda q: q[0])
    values = tuple(q[0] for q in out[:k])
    residuals = tuple(q[1] for q in out[:k])
    converged = all(accepted(t, r) for t, r in zip(values, residuals))
    gap = out[k][0] if len(out) > k else math.nan
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"residuals {['%.2e' % r for r in residuals]} miss target {target_abs:.2e} after {iters} iterations"
        )
    vecs = {}
    if return_vectors:
        conv = _xprec.to_complex if extended else np.asarray
        vecs = dict(
            right_vectors=np.stack([conv(q[2]) for q in out[:k]], axis=1),
            left_vectors=np.stack([conv(q[3]) for q in out[:k]], axis=1),
        )
    return SingularSpectrum(
        values, residuals, "extended" if extended else "standard", converged, gap, iters, A.scale, nd, **vecs
    )
