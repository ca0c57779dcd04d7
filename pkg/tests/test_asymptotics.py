import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svlab import DomainError, Problem, wells
from svlab.asymptotics import (
    WeylWindow,
    action_S0,
    agmon_distance,
    dJ_distances,
    harmonic_levels,
    m_plus,
    regime,
    resolvent_bound,
    s0_inverse,
    t1_lower_bound,
    weyl_predicted,
)
from svlab.model import phase

# frozen oracle values, evaluated independently with mpmath at 30 digits
M_PLUS_CUBIC = 2.88956169560859979886786945619e-7  # -1, h=0.1, bracket normalization
D_SHORT_05 = 0.684853256372279547373231880413
D_LONG_05 = 3.82644590996207278583587526369
M_PLUS_SINE_05 = 1.24564841604410866831786936817e-4  # -0.5, h=0.1
WEYL_CUBIC = 15.2730428230340321168069141006  # a=0.5, b=1.0, h=0.02
WEYL_SINE = 42.4974850687826098486142098437  # a=0.5, b=1.5, h=0.02
XI0_05 = 0.593154387244460757631883683845  # S0(-u) = 0.5 on the sine model


def test_agmon_cubic():
    assert agmon_distance(Problem("cubic", -1.0, 0.1), -1.0, 1.0) == pytest.approx(4 / 3, abs=1e-12)


def test_agmon_sine_through_zero():
    d = agmon_distance(Problem("sine", 0.0, 0.1), -math.pi / 2, math.pi / 2, "increasing")
    assert d == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("model", ["cubic", "sine"])
def test_agmon_zero_path(model):
    assert agmon_distance(Problem(model, -0.5, 0.1), 0.3, 0.3) == 0.0


def test_action_examples():
    assert action_S0("cubic", -1.0) == pytest.approx(4 / 3, rel=1e-15)
    assert action_S0("sine", 0.0) == pytest.approx(2.0, rel=1e-15)
    assert action_S0("sine", -0.5) == pytest.approx(D_SHORT_05, rel=1e-14)


@pytest.mark.parametrize("xi", [-0.25, -1.0, -4.0])
def test_cubic_action_by_quadrature(xi):
    w = wells("cubic", xi)
    q = agmon_distance(Problem("cubic", xi, 0.1), w.y_minus, w.y_plus)
    assert q == pytest.approx(4 / 3 * abs(xi) ** 1.5, abs=1e-10)


def test_dj_examples():
    assert tuple(dJ_distances(0.0)) == pytest.approx((2.0, 2.0), abs=1e-15)
    d = dJ_distances(-0.5)
    assert d.d_short == pytest.approx(D_SHORT_05, rel=1e-14)
    assert d.d_long == pytest.approx(D_LONG_05, rel=1e-14)


def test_dj_near_degeneracy():
    delta = 1e-4
    d = dJ_distances(-1 + delta)
    assert d.d_short == pytest.approx(2 / 3 * (2 * delta) ** 1.5, rel=1e-3)
    assert d.d_long > 1


def test_dj_quadrature_agrees():
    for xi in (-0.7, -0.2, 0.4):
        p = Problem("sine", xi, 0.1)
        w = wells("sine", xi)
        d = dJ_distances(xi)
        arc_zero = agmon_distance(p, w.y_plus, w.y_minus, "increasing")
        arc_pi = agmon_distance(p, w.y_minus, w.y_plus, "increasing")
        assert arc_zero == pytest.approx(d.d_short, abs=1e-11)
        assert arc_pi == pytest.approx(d.d_long, abs=1e-11)


def test_dj_monotonicity():
    # the arc through 0 lengthens and the arc through -pi shortens as xi grows
    grid = np.linspace(-0.98, 0.98, 50)
    ds = np.array([dJ_distances(x).d_short for x in grid])
    dl = np.array([dJ_distances(x).d_long for x in grid])
    assert np.all(np.diff(ds) > 0)
    assert np.all(np.diff(dl) < 0)
    cross = np.sign(ds - dl)
    assert np.all(cross[grid < 0] < 0) and np.all(cross[grid > 0] > 0)
    assert dJ_distances(0.0).d_short == dJ_distances(0.0).d_long


@pytest.mark.parametrize("model,xi", [("cubic", -1.3), ("cubic", -0.2), ("sine", -0.6), ("sine", 0.4)])
def test_action_derivative(model, xi):
    e = 1e-5
    fd = (action_S0(model, xi + e) - action_S0(model, xi - e)) / (2 * e)
    w = wells(model, xi)
    lhs = abs(w.y_minus - w.y_plus)
    if model == "sine" and xi > 0:
        lhs = 2 * math.pi - lhs
    assert abs(fd) == pytest.approx(lhs, abs=1e-6)


@given(xi=st.floats(-0.98, 0.98), a=st.floats(-3, 3), b=st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_monotone_segment_identity(xi, a, b):
    c = math.acos(-xi)
    lo, hi = sorted((a, b))
    if any(lo < z < hi for z in (c, -c, c - 2 * math.pi, 2 * math.pi - c)):
        return
    p = Problem("sine", xi, 0.1)
    d = agmon_distance(p, lo, hi, "increasing")
    assert d == pytest.approx(abs(phase("sine", hi, xi) - phase("sine", lo, xi)), abs=1e-11)


def test_m_plus_cubic_example():
    pr = m_plus(Problem("cubic", -1.0, 0.1))
    assert pr.value == pytest.approx(M_PLUS_CUBIC, rel=1e-13)
    assert pr.regime == "nondegenerate"
    assert pr.relative_error_scale == pytest.approx(0.1)


def test_m_plus_kernel():
    pr = m_plus(Problem("sine", 0.0, 0.1))
    assert pr.value == 0.0 and pr.regime == "kernel"


def test_m_plus_prefactor_limit():
    for h in (0.05, 0.02, 0.01):
        pr = m_plus(Problem("cubic", -1.0, h))
        assert math.exp(pr.log_value + (4 / 3) / h) / math.sqrt(h) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)


def test_m_plus_sine_two_exponentials():
    pr = m_plus(Problem("sine", -0.5, 0.1))
    assert pr.value == pytest.approx(M_PLUS_SINE_05, rel=1e-13)
    assert pr.sign in ("positive", "negative")


def test_m_plus_normalizations():
    p = Problem("cubic", -2.0, 0.07)
    assert m_plus(p, "kramers").value / m_plus(p).value == pytest.approx(math.sqrt(2), rel=1e-14)
    with pytest.raises(DomainError):
        m_plus(p, "other")


@given(xi=st.floats(-6.0, -0.05), h=st.floats(0.02, 0.5))
def test_m_plus_scaling_consistency(xi, h):
    lhs = m_plus(Problem("cubic", xi, h)).log_value
    h_t = h * abs(xi) ** -1.5
    if h_t > 1:
        return
    rhs = math.log(abs(xi)) + m_plus(Problem("cubic", -1.0, h_t)).log_value
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_m_plus_outside_domain():
    with pytest.raises(DomainError):
        m_plus(Problem("cubic", 0.5, 0.1))


def test_harmonic_levels():
    lv = harmonic_levels(Problem("cubic", -1.0, 0.05), "Qplus", 2)
    assert lv[0] == 0.0
    assert sorted(lv)[1:] == pytest.approx([0.2, 0.2, 0.4])
    assert min(harmonic_levels(Problem("cubic", -1.0, 0.05), "Qminus", 2)) == 0.0


def test_t1_examples():
    assert t1_lower_bound(Problem("cubic", -1.0, 0.05)) == pytest.approx(math.sqrt(0.2), rel=1e-14)
    assert t1_lower_bound(Problem("cubic", -4.0, 0.05)) == pytest.approx(0.632455532033675866, rel=1e-14)
    r = [t1_lower_bound(Problem("cubic", -1.0, h)) / math.sqrt(h) for h in (0.1, 0.01, 0.001)]
    assert r == pytest.approx([r[0]] * 3)


def test_resolvent_bound_examples():
    assert resolvent_bound(1.0, 0.1) == pytest.approx(1.0002083550362293416, rel=1e-14)
    assert resolvent_bound(0.0, 0.1) == pytest.approx(16.3231819464880019387, rel=1e-14)
    assert resolvent_bound(-0.01, 0.1) == pytest.approx(35.2172930767934749205, rel=1e-14)
    with pytest.raises(DomainError):
        resolvent_bound(0.1, 0.1, "sine")


def test_resolvent_bound_grows_into_tunneling():
    b = [resolvent_bound(x, 0.1) for x in (2.0, 1.0, 0.0, -0.5, -1.0)]
    assert all(x < y for x, y in zip(b, b[1:]))


def test_regime_examples():
    assert regime(Problem("cubic", -1.0, 0.05)) == "nondegenerate"
    assert regime(Problem("cubic", -3 * 0.01 ** (2 / 3), 0.01)) == "degenerate"
    assert regime(Problem("cubic", 1.0, 0.05)) == "elliptic"
    assert regime(Problem("cubic", -9.0, 0.05)) == "large_xi"
    assert regime(Problem("sine", 0.0, 0.05)) == "kernel"


def test_s0_inverse():
    assert s0_inverse("cubic", 4 / 3) == pytest.approx((-1.0,), rel=1e-15)
    assert s0_inverse("cubic", 0.5) == pytest.approx((-0.520020955762976028,), rel=1e-14)
    lo, hi = s0_inverse("sine", 2 - 1e-9)
    assert abs(lo) < 1e-3 and hi == -lo
    assert s0_inverse("sine", 0.5)[1] == pytest.approx(XI0_05, abs=1e-12)
    with pytest.raises(DomainError):
        s0_inverse("sine", 2.5)


def test_weyl_predicted_examples():
    assert weyl_predicted("cubic", WeylWindow(0.5, 1.0, 0.02)) == pytest.approx(WEYL_CUBIC, rel=1e-12)
    assert weyl_predicted("sine", WeylWindow(0.5, 1.5, 0.02)) == pytest.approx(WEYL_SINE, rel=1e-10)
    assert weyl_predicted("sine", WeylWindow(0.7, 0.7, 0.02)) == 0.0


@given(a=st.floats(0.05, 1.9), c=st.floats(0.05, 1.9), b=st.floats(0.05, 1.9))
@settings(max_examples=30, deadline=None)
def test_weyl_additivity(a, c, b):
    a, c, b = sorted((a, c, b))
    for model in ("cubic", "sine"):
        whole = weyl_predicted(model, WeylWindow(a, b, 0.01))
        parts = weyl_predicted(model, WeylWindow(a, c, 0.01)) + weyl_predicted(model, WeylWindow(c, b, 0.01))
        assert parts == pytest.approx(whole, rel=1e-12, abs=1e-9)


def test_window_validation():
    with pytest.raises(DomainError):
        WeylWindow(1.0, 0.5, 0.1).validate("cubic")
    with pytest.raises(DomainError):
        WeylWindow(0.5, 2.5, 0.1).validate("sine")
