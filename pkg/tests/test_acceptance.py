"""Acceptance criteria 1-13, each at its stated tolerance.

Every criterion is reported as one ``criterion n: PASS|FAIL`` line in the
terminal summary.  Predictions use the default ``m_plus`` normalization.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from svlab import Problem
from svlab.asymptotics import WeylWindow, action_S0, m_plus, resolvent_bound
from svlab.discretize import BandedComplexMatrix
from svlab.experiments import (
    DiscPolicy,
    overlap_estimate,
    resolvent_experiment,
    scaling_check,
    solve_fiber,
    tunneling_experiment,
    weyl_experiment,
)
from svlab.smallsvd import smallest_singular_values

SWEEP_H = (0.12, 0.10, 0.08, 0.06, 0.05)


def check(record_property, ok: bool, detail: str):
    record_property("detail", detail)
    assert ok, detail


def fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


@pytest.fixture(scope="module")
def cubic_sweep():
    rows = tunneling_experiment("cubic", [-1.0], SWEEP_H)
    assert all(r.ok for r in rows), [r.error for r in rows]
    return rows


@pytest.mark.criterion(1)
def test_c01_tunneling_leading_order(cubic_sweep, record_property):
    err = [abs(r.ratio - 1) for r in cubic_sweep]
    std = all(r.precision_kind == "standard" for r in cubic_sweep)
    bound = all(e <= 1.5 * r.h for e, r in zip(err, cubic_sweep))
    mono = all(a > b for a, b in zip(err, err[1:]))
    check(record_property, bound and mono and std, f"|t0/m+ - 1| = {fmt(err)}, limit 1.5h, monotone={mono}")


@pytest.mark.criterion(2)
def test_c02_prefactor_extraction(cubic_sweep, record_property):
    x = np.log([r.h for r in cubic_sweep])
    y = np.array([math.log(r.t0_numeric) + action_S0("cubic", -1.0) / r.h for r in cubic_sweep])
    slope, intercept = np.polyfit(x, y, 1)
    target = math.log(1 / math.sqrt(math.pi))
    ok = abs(slope - 0.5) <= 0.05 and abs(intercept - target) <= 0.1
    check(record_property, ok, f"slope {slope:.4f} (0.5 +- 0.05), intercept {intercept:.4f} ({target:.4f} +- 0.1)")


@pytest.mark.criterion(3)
def test_c03_gap(cubic_sweep, record_property):
    low = all(r.t1_numeric >= 0.2 * math.sqrt(r.h) for r in cubic_sweep)
    r05 = next(r for r in cubic_sweep if r.h == 0.05)
    rel = abs(r05.t1_numeric / (2 * math.sqrt(0.05)) - 1)
    check(record_property, low and rel <= 0.25, f"t1 >= 0.2 sqrt(h): {low}; |t1/(2 sqrt h) - 1| = {rel:.4f} at h=0.05")


@pytest.mark.criterion(4)
def test_c04_scaling_identity(record_property):
    devs = [scaling_check(xi, 0.1).max_rel_dev for xi in (-0.25, -2.0, -4.0)]
    check(record_property, max(devs) <= 1e-9, f"max relative deviation {fmt(devs)}, limit 1e-9")


@pytest.mark.criterion(5)
def test_c05_sine_symmetry(record_property):
    worst = 0.0
    for xi in (0.3, 0.5, 0.7):
        a = solve_fiber(Problem("sine", xi, 0.05), DiscPolicy(), 1)
        b = solve_fiber(Problem("sine", -xi, 0.05), DiscPolicy(), 1)
        worst = max(worst, abs(a.values[0] - b.values[0]) / a.scale)
    check(record_property, worst <= 1e-12, f"max |t0(xi) - t0(-xi)| / scale = {worst:.3g}, limit 1e-12")


@pytest.mark.criterion(6)
def test_c06_kernel_fiber(record_property):
    s = solve_fiber(Problem("sine", 0.0, 0.1), DiscPolicy(n_modes=800), 1)
    check(record_property, s.values[0] <= 1e-10, f"t0 = {s.values[0]:.3g} at N=800, limit 1e-10")


@pytest.mark.criterion(7)
def test_c07_circle_formula(record_property):
    rows = tunneling_experiment("sine", [-0.5, -0.3], [0.08, 0.06])
    err = [abs(r.ratio - 1) for r in rows]
    ok = all(r.ok for r in rows) and all(e <= 1.5 * r.h for e, r in zip(err, rows))
    check(record_property, ok, f"|t0/|m+| - 1| = {fmt(err)} for (xi, h) in (-0.5,-0.3)x(0.08,0.06), limit 1.5h")


@pytest.mark.criterion(8)
def test_c08_overlap_oracle(record_property):
    err = []
    for h in (0.1, 0.08, 0.06):
        p = Problem("cubic", -1.0, h)
        t0 = solve_fiber(p, DiscPolicy(), 1).values[0]
        err.append(abs(overlap_estimate(p) / t0 - 1))
    bound = all(e <= 2 * h for e, h in zip(err, (0.1, 0.08, 0.06)))
    mono = err[0] > err[1] > err[2]
    check(record_property, bound and mono, f"relative error {fmt(err)}, limit 2h, decreasing={mono}")


@pytest.mark.criterion(9)
def test_c09_subelliptic_scale(record_property):
    vals, above = [], True
    for h in (0.1, 0.05, 0.025, 0.0125):
        t0 = solve_fiber(Problem("cubic", 0.0, h), DiscPolicy(), 1).values[0]
        vals.append(t0 * h ** (-2 / 3))
        above &= t0 >= 1 / resolvent_bound(0.0, h)
    ok = above and all(0.3 <= v <= 3.0 for v in vals)
    check(record_property, ok, f"t0 h^(-2/3) = {fmt(vals)} in [0.3, 3]; t0 >= 1/bound: {above}")


@pytest.mark.criterion(10)
def test_c10_elliptic_bound(record_property):
    rep = resolvent_experiment(0.05, [0.25, 0.5, 1.0])
    ok = all(r.error is None and r.satisfies for r in rep.rows) and rep.max_empirical_C <= 3
    check(record_property, ok, f"empirical C = {fmt([r.empirical_C for r in rep.rows])}, limit 3")


@pytest.mark.criterion(11)
@pytest.mark.slow
def test_c11_weyl_count(record_property):
    r1 = weyl_experiment("sine", WeylWindow(0.5, 1.5, 0.02), "numeric")
    r2 = weyl_experiment("sine", WeylWindow(0.5, 1.5, 0.01), "numeric")
    d1 = abs(r1.counted - r1.predicted)
    d2 = abs(r2.counted - r2.predicted) / r2.predicted
    ok = not r1.failed and not r2.failed and d1 <= 8 and d2 <= 0.15
    check(
        record_property, ok,
        f"h=0.02: {r1.counted} vs {r1.predicted:.2f}; h=0.01: {r2.counted} vs {r2.predicted:.2f} (rel {d2:.3f})",
    )


@pytest.mark.criterion(12)
def test_c12_degenerate_regime(record_property):
    h = 0.01
    err, cs = [], []
    for K in (3, 5, 8):
        xi = -K * h ** (2 / 3)
        (row,) = tunneling_experiment("cubic", [xi], [h])
        assert row.ok, row.error
        e = abs(row.ratio - 1)
        err.append(e)
        cs.append(e / (h * abs(xi) ** -1.5))
    mono = err[0] > err[1] > err[2]
    ok = max(cs) <= 5 and mono
    check(record_property, ok, f"|t0/m+ - 1| = {fmt(err)}, fitted C = {max(cs):.3g} (limit 5), decreasing={mono}")


@pytest.mark.criterion(13)
def test_c13_oracle_suite(record_property):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 13))
        kl, ku = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        diags = {o: rng.standard_normal(n - abs(o)) + 1j * rng.standard_normal(n - abs(o))
                 for o in range(-kl, ku + 1) if abs(o) < n}
        A = BandedComplexMatrix.from_diagonals(n, diags)
        M = A.to_dense()
        H = np.block([[np.zeros((n, n)), M], [M.conj().T, np.zeros((n, n))]])
        oracle = np.sort(np.abs(np.linalg.eigvalsh(H)))[::2]
        k = int(rng.integers(1, n + 1))
        s = smallest_singular_values(A, k)
        worst = max(worst, float(np.max(np.abs(np.array(s.values) - oracle[:k]))) / A.scale)
    check(record_property, worst <= 1e-12, f"max deviation / scale = {worst:.3g} over 200 instances, limit 1e-12")
