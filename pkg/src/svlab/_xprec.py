"""Extended-precision scalar helpers built on gmpy2 (MPFR/MPC).

Arrays of extended scalars are numpy object arrays holding ``gmpy2.mpfr`` or
``gmpy2.mpc`` values, so the usual elementwise numpy operations apply.  All
arithmetic rounds to the gmpy2 context that is active when it runs; use
:func:`working_digits` around every extended computation.
"""

from __future__ import annotations

import contextlib
import math

import gmpy2
import mpmath
import numpy as np

LOG2_10 = math.log2(10.0)
MPFR = type(gmpy2.mpfr(0))
MPC = type(gmpy2.mpc(0))


def bits_for(digits: int) -> int:
    """Binary precision carrying ``digits`` significant decimal digits."""
    return int(math.ceil(digits * LOG2_10)) + 8


def unit_roundoff(digits: int) -> float:
    return 2.0 ** (1 - bits_for(digits))


@contextlib.contextmanager
def working_digits(digits: int):
    """Set the gmpy2 and mpmath working precision for the enclosed block."""
    bits = bits_for(digits)
    ctx = gmpy2.get_context().copy()
    ctx.precision = bits
    ctx.real_prec = bits
    ctx.imag_prec = bits
    old = mpmath.mp.prec
    mpmath.mp.prec = bits
    try:
        with ctx:
            yield
    finally:
        mpmath.mp.prec = old


def scalar(x, complex_: bool = False):
    """Convert a Python/numpy scalar exactly into an extended scalar."""
    if isinstance(x, (MPFR, MPC)):
        return gmpy2.mpc(x) if complex_ and isinstance(x, MPFR) else x
    if isinstance(x, (complex, np.complexfloating)):
        return gmpy2.mpc(complex(x))
    return gmpy2.mpc(float(x)) if complex_ else gmpy2.mpfr(float(x))


def array(a, complex_: bool | None = None) -> np.ndarray:
    """Exact elementwise conversion of an array into extended scalars."""
    a = np.asarray(a)
    if a.dtype == object:
        return a.copy()
    if complex_ is None:
        complex_ = np.iscomplexobj(a)
    out = np.empty(a.shape, dtype=object)
    flat = a.ravel()
    conv = (lambda v: gmpy2.mpc(complex(v))) if complex_ else (lambda v: gmpy2.mpfr(float(v)))
    out.ravel()[:] = [conv(v) for v in flat]
    return out


def zeros(shape, complex_: bool) -> np.ndarray:
    z = gmpy2.mpc(0) if complex_ else gmpy2.mpfr(0)
    out = np.empty(shape, dtype=object)
    out.fill(z)
    return out


def to_complex(a) -> np.ndarray:
    """Round an object array of extended scalars to complex128."""
    a = np.asarray(a, dtype=object)
    return np.array([complex(v) for v in a.ravel()], dtype=complex).reshape(a.shape)


def abs2(a: np.ndarray):
    """Elementwise squared modulus as extended reals."""
    out = np.empty(a.shape, dtype=object)
    out.ravel()[:] = [gmpy2.norm(v) if isinstance(v, MPC) else v * v for v in a.ravel()]
    return out


def norm(v: np.ndarray):
    """Euclidean norm of a vector of extended scalars."""
    return gmpy2.sqrt(sum(abs2(v).tolist(), gmpy2.mpfr(0)))


def _to_mp(v):
    if isinstance(v, MPC):
        return mpmath.mpc(_to_mp(v.real), _to_mp(v.imag))
    man, exp = gmpy2.mpfr(v).as_mantissa_exp()
    return mpmath.mpf((int(man), int(exp)))


def _from_mp(v):
    if isinstance(v, mpmath.mpc):
        return gmpy2.mpc(_from_mp(v.real), _from_mp(v.imag))
    sign, man, exp, _ = v._mpf_
    x = gmpy2.mul_2exp(gmpy2.mpfr(int(man)), int(exp))
    return -x if sign else x


def small_svd(r: np.ndarray):
    """SVD of a small square extended matrix, ``r = u @ diag(s) @ vh``.

    Singular values are returned in descending order as extended reals.
    """
    p = r.shape[0]
    m = mpmath.matrix(p, p)
    cplx = any(isinstance(v, MPC) for v in r.ravel())
    for i in range(p):
        for j in range(p):
            m[i, j] = _to_mp(r[i, j])
    u, s, vh = (mpmath.svd_c if cplx else mpmath.svd_r)(m)
    U = np.empty((p, p), dtype=object)
    VH = np.empty((p, p), dtype=object)
    for i in range(p):
        for j in range(p):
            U[i, j] = _from_mp(u[i, j])
            VH[i, j] = _from_mp(vh[i, j])
    S = np.array([_from_mp(s[i]) for i in range(p)], dtype=object)
    return U, S, VH
