from __future__ import annotations

import json
import math

import numpy as np
import pytest

from mcgehee import catalog
from mcgehee.blowup import BlownSystem, HypothesisError
from mcgehee.boundary import fixed_points
from mcgehee.criteria import (
    HYP_ERROR,
    STRICT_MIN,
    TOTALLY_UNSTABLE,
    UNDECIDED,
    Inapplicable,
    analyze,
    asymptotic_orbit,
    criterion_function,
    criterion_function_reference,
    generic_criterion,
    nongeneric_criterion,
    subcritical_starts,
)
from mcgehee.germ import AnalyticGerm
from mcgehee.system import LagrangianSystem, MetricField


def normal_coordinate_metric(K: float) -> MetricField:
    """Constant curvature K to second order: g = delta - K/3 (|x|^2 delta - x x^T)."""
    g11 = AnalyticGerm(2, {(0, 0): 1.0, (0, 2): -K / 3})
    g22 = AnalyticGerm(2, {(0, 0): 1.0, (2, 0): -K / 3})
    g12 = AnalyticGerm(2, {(1, 1): K / 3})
    return MetricField.from_matrix([[g11, g12], [g12, g22]])


@pytest.mark.parametrize(
    "make, verdict, path",
    [
        (catalog.pendulum, TOTALLY_UNSTABLE, "generic"),
        (catalog.monkey_saddle, TOTALLY_UNSTABLE, "generic"),
        (catalog.quartic_saddle, TOTALLY_UNSTABLE, "non-generic"),
        (catalog.conformal_plane, TOTALLY_UNSTABLE, "generic"),
        (catalog.cubic, UNDECIDED, None),
        (catalog.magnetic_quartic_saddle, HYP_ERROR, None),
        (lambda: catalog.plane(1.0, 2.0), STRICT_MIN, None),
    ],
)
def test_verdicts(make, verdict, path):
    rep = analyze(BlownSystem(make()))
    assert rep.verdict == verdict and rep.path == path


def test_quartic_saddle_criterion_values():
    rep = analyze(BlownSystem(catalog.quartic_saddle()))
    pts = sorted((tuple(np.round(q, 12)), c) for q, c in rep.C_values)
    assert [p for p, _ in pts] == [(-1.0, 0.0), (1.0, 0.0)]
    assert all(c == pytest.approx(2.0, abs=1e-12) for _, c in pts)


def test_cubic_offending_value():
    _, values, offending = nongeneric_criterion(BlownSystem(catalog.cubic()))
    assert len(offending) == 1
    q, c = offending[0]
    assert np.allclose(q, [1.0, 0.0]) and c == pytest.approx(-1.0)


def test_criterion_function_matches_reference(rng):
    g = normal_coordinate_metric(0.7)
    sys = LagrangianSystem(AnalyticGerm(2, {(0, 2): 1.0, (2, 0): -0.5, (4, 0): 0.3, (1, 3): -0.2}), metric=g)
    bs = BlownSystem(sys)
    for _ in range(20):
        q = rng.normal(size=2)
        q /= np.linalg.norm(q)
        assert abs(criterion_function(bs, q) - criterion_function_reference(bs, q)) <= 1e-12


@pytest.mark.parametrize("K", [-1.0, 0.5, 2.0])
def test_normal_coordinates_give_vanishing_criterion(K, rng):
    # radial lines are unit-speed geodesics, so q.g_2(q).q = 0
    sys = LagrangianSystem(AnalyticGerm(2, {(0, 2): 1.0, (2, 0): -1.0, (5, 0): 1.0}), metric=normal_coordinate_metric(K))
    bs = BlownSystem(sys)
    assert sys.report.mu == 2 and sys.report.m == 2
    for _ in range(10):
        q = rng.normal(size=2)
        q /= np.linalg.norm(q)
        assert abs(criterion_function(bs, q)) <= 1e-14


def test_criterion_scales_linearly_in_second_jet():
    a = BlownSystem(LagrangianSystem(AnalyticGerm(2, {(0, 2): 1.0, (4, 0): -1.0})))
    b = BlownSystem(LagrangianSystem(AnalyticGerm(2, {(0, 2): 1.0, (4, 0): -3.0})))
    assert criterion_function(b, [1.0, 0.0]) == pytest.approx(3 * criterion_function(a, [1.0, 0.0]))


def test_criterion_inapplicable_for_homogeneous_flat():
    with pytest.raises(Inapplicable):
        criterion_function(BlownSystem(catalog.plane(-1.0, 1.0)), [1.0, 0.0])


def test_generic_rejects_weak_magnetism_failure():
    from mcgehee.system import MagneticPotential

    # l = 3 and d = 2 give Delta = 1/2: regular blowup, but below the weak-magnetism bound
    A = MagneticPotential(2, (AnalyticGerm(2, {(0, 2): 1.0}), AnalyticGerm.zero(2)))
    bs = BlownSystem(LagrangianSystem(AnalyticGerm(2, {(3, 0): 1.0, (1, 2): -3.0}), magnetic=A))
    assert bs.Delta == 0.5
    with pytest.raises(HypothesisError):
        generic_criterion(bs)
    assert analyze(bs).verdict == HYP_ERROR


def test_magnetic_nongeneric_hypothesis():
    with pytest.raises(HypothesisError):
        nongeneric_criterion(BlownSystem(catalog.magnetic_quartic_saddle()))


def test_report_serializes():
    d = analyze(BlownSystem(catalog.quartic_saddle())).to_dict()
    text = json.dumps(d, sort_keys=True)
    assert json.loads(text)["verdict"] == TOTALLY_UNSTABLE
    assert analyze(BlownSystem(catalog.plane(-1.0, 1.0))).to_dict()["mu"] is None


def test_subcritical_starts():
    sys = catalog.quartic_saddle()
    starts = subcritical_starts(sys, 0.05, 20, seed=3)
    for s in starts:
        assert np.linalg.norm(s.x) == pytest.approx(0.05)
        assert sys.energy(s) < 0


@pytest.mark.parametrize(
    "make, q",
    [(catalog.pendulum, [1.0]), (lambda: catalog.plane(-1.0, 1.0), [1.0, 0.0])],
)
def test_asymptotic_orbit_contract(make, q):
    bs = BlownSystem(make())
    fp = next(fp for fp in fixed_points(bs) if np.allclose(fp.q, q) and fp.nu_star < 0)
    orb = asymptotic_orbit(bs, fp)
    assert np.max(np.abs(orb.energy)) <= 1e-6
    assert orb.angular_error() <= 1e-4
    r = orb.blown.states[:, 0]
    assert r[-1] < r[0]  # approaches the equilibrium
