"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run ``python tests/test_acceptance.py`` for the lines alone, or pytest for
the full report (the lines are repeated in the terminal summary).
"""
from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from mcgehee import catalog
from mcgehee.blowup import BlownSystem, McGeheeState, boundary_energy_ode_residual
from mcgehee.boundary import (
    ContinuumWarning,
    find_sphere_critical_points,
    fixed_points,
    heteroclinic_closed_form,
    heteroclinic_orbit,
)
from mcgehee.criteria import (
    HYP_ERROR,
    TOTALLY_UNSTABLE,
    UNDECIDED,
    analyze,
    asymptotic_orbit,
    boomerang_demo,
    escape_sweep,
    subcritical_starts,
)
from mcgehee.germ import AnalyticGerm
from mcgehee.integrate import Event, IntegratorConfig, integrate_blown, integrate_original, reparametrize_time
from mcgehee.setdyn import PointCloud, hausdorff_distance, limsup_sets
from mcgehee.system import LagrangianSystem, PhaseState

from acceptance_report import record
from oracles import boomerang_lower_bound, directional_derivative, pendulum_level_set, pendulum_separatrix


def _unit(rng, n):
    q = rng.normal(size=n)
    return q / np.linalg.norm(q)


def _subcritical_boundary_state(bs, rng):
    for _ in range(100_000):
        q = _unit(rng, bs.n)
        f = bs.Ul(q)
        if f < 0:
            y = _unit(rng, bs.n) * math.sqrt(-2 * f * rng.uniform(0, 1))
            return McGeheeState(0.0, q, y)
    raise AssertionError("no subcritical boundary state: f >= 0 on the sphere")


SPHERE_3D = lambda: LagrangianSystem(AnalyticGerm(3, {(2, 0, 0): -1.0, (0, 2, 0): 0.5, (0, 0, 2): 2.0, (1, 1, 1): 0.3}))
# f takes negative values on the sphere for each of these
SUBCRITICAL_BOUNDARY = (catalog.pendulum, catalog.monkey_saddle, catalog.conformal_plane, lambda: catalog.plane(-2.0, -1.0), SPHERE_3D)


# 1 --------------------------------------------------------------------------
def test_criterion_01_pendulum_fixed_points():
    t0 = time.perf_counter()
    fps = fixed_points(BlownSystem(catalog.pendulum()))
    elapsed = time.perf_counter() - t0
    got = sorted((float(fp.q[0]), fp.nu_star) for fp in fps)
    ok = got == [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] and elapsed < 1.0
    record(1, ok, f"{len(fps)} fixed points {got}, {elapsed:.3f} s")
    assert ok


# 2 --------------------------------------------------------------------------
def test_criterion_02_plane_table():
    t0 = time.perf_counter()
    problems = []

    def catalog_for(a, b):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always", ContinuumWarning)
            fps = fixed_points(BlownSystem(catalog.plane(a, b)))
        return fps, any(issubclass(x.category, ContinuumWarning) for x in w)

    for a, b in [(1.0, 2.0), (0.5, 0.5), (2.0, 3.0)]:
        fps, _ = catalog_for(a, b)
        if fps:
            problems.append(f"0<a<=b ({a},{b}): {len(fps)} points")
    fps, _ = catalog_for(0.0, 1.0)
    if len(fps) != 2 or any(fp.nu_star != 0 for fp in fps):
        problems.append(f"0=a<b: {len(fps)} points")
    for a, b in [(-1.0, 1.0), (-2.0, 0.5)]:
        fps, _ = catalog_for(a, b)
        if len(fps) != 4 or not all(abs(abs(fp.q[0]) - 1) < 1e-12 for fp in fps):
            problems.append(f"a<0<b ({a},{b}): {len(fps)} points")
        for q in ([1.0, 0.0], [-1.0, 0.0]):
            here = sorted(fp.source_sink_class for fp in fps if np.allclose(fp.q, q))
            if here != ["sink", "source"]:
                problems.append(f"a<0<b at {q}: classes {here}")
        for fp in fps:
            # sinks attract on the boundary: every tangent eigenvalue has negative real part
            tangent = fp.flow_eigs[2:]
            want = "sink" if all(e.real < 0 for e in tangent) else "source" if all(e.real > 0 for e in tangent) else "saddle"
            if fp.source_sink_class != want:
                problems.append(f"class mismatch at {fp.q}")
    for a, b in [(-2.0, -1.0), (-3.0, -0.5)]:
        fps, _ = catalog_for(a, b)
        if len(fps) != 8:
            problems.append(f"a<b<0 ({a},{b}): {len(fps)} points")
    _, warned = catalog_for(-1.0, -1.0)
    if not warned:
        problems.append("a=b<0: no continuum warning")
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 10.0
    record(2, ok, f"{elapsed:.2f} s" + ("; " + "; ".join(problems) if problems else ""))
    assert ok


# 3 --------------------------------------------------------------------------
CRITERIA_PASSING = [
    catalog.pendulum,
    catalog.quartic_saddle,
    catalog.monkey_saddle,
    catalog.conformal_plane,
    lambda: catalog.plane(-1.0, 1.0),
    lambda: catalog.plane(-2.0, -1.0),
    SPHERE_3D,
]


def test_criterion_03_eigenvalues_vs_jacobian():
    worst, count = 0.0, 0
    for make in CRITERIA_PASSING:
        bs = BlownSystem(make())
        assert analyze(bs).verdict == TOTALLY_UNSTABLE
        for fp in fixed_points(bs):
            if fp.nu_star == 0 or fp.jordan_degenerate or fp.critical.degenerate:
                continue
            worst = max(worst, fp.eig_rel_error)
            count += 1
    ok = count > 0 and worst <= 1e-5
    record(3, ok, f"{count} fixed points, worst relative error {worst:.2e} (<= 1e-5)")
    assert ok


# 4 --------------------------------------------------------------------------
def test_criterion_04_heteroclinic_tanh():
    bs = BlownSystem(LagrangianSystem(AnalyticGerm(2, {(2, 0): -0.5, (0, 2): 1.0})))
    cp = next(p for p in find_sphere_critical_points(bs.U_l) if np.allclose(p.q, [1.0, 0.0]))
    assert cp.f_value == pytest.approx(-0.5)
    tr = heteroclinic_orbit(bs, cp, span=10.0, dt=0.01)
    err = float(np.max(np.abs(tr.nu - np.tanh(tr.times))))
    closed = float(np.max(np.abs(heteroclinic_closed_form(2, -0.5, tr.times) - np.tanh(tr.times))))
    ok = tr.times[0] <= -10 + 1e-9 and tr.times[-1] >= 10 - 1e-9 and err <= 1e-6 and closed == 0.0
    record(4, ok, f"sup |nu - tanh| = {err:.2e} over [{tr.times[0]:g}, {tr.times[-1]:g}] (<= 1e-6)")
    assert ok


# 5 --------------------------------------------------------------------------
def test_criterion_05_conservation_and_residuals():
    rng = np.random.default_rng(5)
    sys = catalog.pendulum()
    tr = integrate_original(sys, PhaseState([math.pi], [1.5]), IntegratorConfig(t_max=300.0, max_step=0.03))
    steps = len(tr) - 1
    drift = float(np.max(np.abs(tr.energy - tr.energy[0])))
    ode_worst = 0.0
    nu_worst = 0.0
    for make in SUBCRITICAL_BOUNDARY:
        bs = BlownSystem(make())
        for _ in range(3):
            z = _subcritical_boundary_state(bs, rng)
            btr = integrate_blown(bs, z, IntegratorConfig(t_max=5.0, sample_dt=1e-3, fixed_point_tol=0.0))
            ode_worst = max(ode_worst, boundary_energy_ode_residual(bs, btr))
        for _ in range(20):
            r = 0.0 if rng.uniform() < 0.3 else rng.uniform(0.01, 0.4) * min(1.0, bs.sys.radius)
            z = McGeheeState(r, _unit(rng, bs.n), rng.normal(size=bs.n))
            za = z.as_array()
            nu = lambda w: np.array([w[1 : bs.n + 1] @ w[bs.n + 1 :]])
            fd = directional_derivative(nu, za, bs.field_array(za))[0]
            nu_worst = max(nu_worst, abs(bs.nu_derivative(z) - fd))
    ok = steps >= 10_000 and drift <= 1e-8 and ode_worst <= 1e-6 and nu_worst <= 1e-6
    record(5, ok, f"energy drift {drift:.2e} over {steps} steps; |H~' + l nu H~| {ode_worst:.2e}; nu' vs FD {nu_worst:.2e}")
    assert ok


# 6 --------------------------------------------------------------------------
def _flow_equivalence_error(sys, seed):
    bs = BlownSystem(sys)
    R = sys.radius
    n = bs.n
    worst = 0.0
    for s0 in subcritical_starts(sys, 0.1 * R, 5, seed):
        ev = [Event(lambda t, z: z[0] - 0.9 * R, "far", True, 1), Event(lambda t, z: z[0] - 1e-3 * R, "near", True, -1)]
        tb = integrate_blown(bs, bs.to_mcgehee(s0), IntegratorConfig(t_max=30.0), events=ev)
        tt = reparametrize_time(bs, tb)
        to = integrate_original(sys, s0, IntegratorConfig(t_max=float(tt[-1, 0]) + 1e-9), t_eval=tt[1:, 0])
        m = min(len(to), len(tb))
        r = tb.states[:m, :1]
        mapped = np.column_stack([r * tb.states[:m, 1 : n + 1], r ** (bs.l / 2) * tb.states[:m, n + 1 :]])
        worst = max(worst, float(np.max(np.abs(mapped - to.states[:m]))))
    return worst


def test_criterion_06_flow_equivalence():
    even = max(_flow_equivalence_error(catalog.quartic_saddle(), 1), _flow_equivalence_error(catalog.conformal_plane(), 2))
    odd = _flow_equivalence_error(catalog.monkey_saddle(), 3)
    ok = even <= 1e-6 and odd <= 1e-6
    record(6, ok, f"l=2 error {even:.2e}, l=3 error {odd:.2e} (<= 1e-6)")
    assert ok


# 7 --------------------------------------------------------------------------
def test_criterion_07_verdicts_and_escape():
    cases = [
        ("pendulum", catalog.pendulum(), TOTALLY_UNSTABLE, "generic", 1.0),
        ("x2^2 - x1^4", catalog.quartic_saddle(), TOTALLY_UNSTABLE, "non-generic", 0.5),
        ("x2^2 + x1^3", catalog.cubic(), UNDECIDED, None, 0.5),
        ("magnetic", catalog.magnetic_quartic_saddle(), HYP_ERROR, None, 0.5),
    ]
    problems, summary = [], []
    for name, sys, verdict, path, r_B in cases:
        rep = analyze(BlownSystem(sys))
        if (rep.verdict, rep.path) != (verdict, path):
            problems.append(f"{name}: {rep.verdict} ({rep.path})")
        if name == "x2^2 - x1^4":
            cs = sorted(c for _, c in rep.C_values)
            if len(cs) != 2 or any(abs(c - 2.0) > 1e-12 for c in cs):
                problems.append(f"C values {cs}")
        times = escape_sweep(sys, r_B, count=10, seed=7)
        misses = sum(t is None for t in times)
        if misses:
            problems.append(f"{name}: {misses} non-escapes")
        summary.append(f"{name} -> {rep.verdict}, {10 - misses}/10 escape")
    ok = not problems
    record(7, ok, "; ".join(summary + problems))
    assert ok


# 8 --------------------------------------------------------------------------
def test_criterion_08_nu_lyapunov():
    rng = np.random.default_rng(8)
    systems = [BlownSystem(m()) for m in SUBCRITICAL_BOUNDARY]
    worst = 0.0
    for k in range(100):
        bs = systems[k % len(systems)]
        z = _subcritical_boundary_state(bs, rng)
        assert bs.rescaled_energy(z) <= 0
        tr = integrate_blown(bs, z, IntegratorConfig(t_max=10.0))
        worst = max(worst, float(np.max(np.maximum(0.0, -np.diff(tr.nu)), initial=0.0)))
    ok = worst <= 1e-9
    record(8, ok, f"100 boundary orbits, worst nu decrease {worst:.2e} (<= 1e-9)")
    assert ok


# 9 --------------------------------------------------------------------------
def _libration_cloud(sys, H):
    x0 = math.acos(1 + H)
    ev = Event(lambda t, y: y[1], "period", True, 1)
    tr = integrate_original(sys, PhaseState([x0], [0.0]), IntegratorConfig(t_max=200.0, sample_dt=0.005, rtol=1e-10, atol=1e-12), events=[ev])
    return PointCloud(tr.states)


def test_criterion_09_set_dynamics():
    rng = np.random.default_rng(9)
    axiom_worst = 0.0
    for _ in range(1000):
        A, B, C = (PointCloud(rng.normal(size=(rng.integers(1, 30), 2))) for _ in range(3))
        dab, dba = hausdorff_distance(A, B), hausdorff_distance(B, A)
        dac, dbc = hausdorff_distance(A, C), hausdorff_distance(B, C)
        axiom_worst = max(
            axiom_worst,
            hausdorff_distance(A, A),
            abs(dab - dba),
            max(0.0, dac - (dab + dbc)),
            max(0.0, -dab),
        )
        if dab == 0 and not np.array_equal(np.unique(A.points, axis=0), np.unique(B.points, axis=0)):
            axiom_worst = math.inf
    sys = catalog.pendulum()
    sep = PointCloud(pendulum_separatrix())
    energies = [-0.5, -0.1, -0.02, -4e-3, -8e-4, -1.6e-4]
    clouds = [_libration_cloud(sys, H) for H in energies]
    dists = [hausdorff_distance(c, sep) for c in clouds]
    # calibration: exact level sets at the same energies
    calib = [hausdorff_distance(PointCloud(pendulum_level_set(H)), sep) for H in energies]
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    eps = 0.02
    min_tail = len(clouds) // 2
    lim = limsup_sets(clouds, eps=eps, min_tail=min_tail)
    # the limsup lies within eps of the last tail, whose worst member is its first cloud
    tail_calib = calib[len(clouds) - min_tail]
    d_lim = hausdorff_distance(lim, sep)
    matches = all(abs(d - c) <= 0.02 + 0.05 * c for d, c in zip(dists, calib))
    ok = axiom_worst <= 1e-12 and decreasing and matches and d_lim <= tail_calib + eps
    record(
        9,
        ok,
        f"axioms worst {axiom_worst:.1e}; d_H to separatrix {', '.join(f'{d:.3f}' for d in dists)} "
        f"(decreasing {decreasing}); limsup d_H {d_lim:.3f} <= {tail_calib + eps:.3f}",
    )
    assert ok


# 10 -------------------------------------------------------------------------
def test_criterion_10_boomerang():
    t0 = time.perf_counter()
    rep = boomerang_demo(BlownSystem(catalog.pendulum()), ns=(4, 8, 16, 32))
    elapsed = time.perf_counter() - t0
    d = rep.distances
    oracle = [boomerang_lower_bound(1.0 / n) for n in rep.ns]
    # the reference contains (0, 1, -1); each orbit cloud stays at least oracle[i] away from it
    bound_ok = all(o * (1 - 1e-3) <= x <= o * 1.05 + 0.01 for x, o in zip(d, oracle))
    converging = d[-1] < d[0]
    ok = rep.monotone(0.10) and converging and bound_ok and elapsed < 60.0
    record(
        10,
        ok,
        f"d_H {', '.join(f'{x:.4f}' for x in d)} for n = {list(rep.ns)}; "
        f"analytic floor {', '.join(f'{x:.4f}' for x in oracle)}; {elapsed:.1f} s",
    )
    assert ok


# 11 -------------------------------------------------------------------------
def test_criterion_11_asymptotic_orbits():
    worst_H, worst_ang, count = 0.0, 0.0, 0
    for make in (catalog.pendulum, catalog.monkey_saddle, catalog.conformal_plane, lambda: catalog.plane(-1.0, 1.0)):
        bs = BlownSystem(make())
        for fp in fixed_points(bs):
            if fp.nu_star >= 0:
                continue
            orb = asymptotic_orbit(bs, fp)
            worst_H = max(worst_H, float(np.max(np.abs(orb.energy))))
            worst_ang = max(worst_ang, orb.angular_error())
            count += 1
    ok = count > 0 and worst_H <= 1e-6 and worst_ang <= 1e-4
    record(11, ok, f"{count} orbits; max |H| {worst_H:.2e} (<= 1e-6); angular error {worst_ang:.2e} (<= 1e-4)")
    assert ok


if __name__ == "__main__":
    import sys as _sys

    _sys.exit(pytest.main([__file__, "-q", "-s"]))
