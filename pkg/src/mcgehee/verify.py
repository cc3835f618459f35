"""Property suite run by ``mcgehee verify`` on a configured system."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .blowup import BlownSystem, McGeheeState, boundary_energy_ode_residual
from .boundary import ContinuumWarning, find_sphere_critical_points, fixed_points
from .germ import first_nonzero_jet, radial_split
from .integrate import Event, IntegratorConfig, integrate_blown, integrate_original, reparametrize_time
from .system import PhaseState

__all__ = ["CheckResult", "run_suite"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"{status} {self.name}: {self.value:.3e} <= {self.threshold:.1e}{extra}"


def _unit(rng, n):
    q = rng.normal(size=n)
    return q / np.linalg.norm(q)


def check_euler(bs: BlownSystem, rng, samples: int = 200) -> CheckResult:
    _, P = first_nonzero_jet(bs.sys.potential)
    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(-1, 1, size=bs.n)
        worst = max(worst, abs(P.euler_defect(x)) / (1 + abs(P(x))))
    return CheckResult("euler identity", worst <= 1e-12, worst, 1e-12)


def check_radial(bs: BlownSystem, rng, samples: int = 200) -> CheckResult:
    U = bs.sys.potential
    rs = radial_split(U)
    scale = sum(abs(c) for c in U.terms.values())
    worst = 0.0
    for _ in range(samples):
        q = _unit(rng, bs.n)
        r = rng.uniform(-1, 1) * min(1.0, bs.sys.radius)
        worst = max(worst, abs(U(r * q) - rs.reassemble(r, q)) / scale)
    return CheckResult("radial reassembly", worst <= 1e-12, worst, 1e-12)


def _small_state(bs: BlownSystem, rng, frac: float = 0.3) -> PhaseState:
    x = frac * bs.sys.radius * _unit(rng, bs.n)
    v = 0.1 * rng.normal(size=bs.n)
    return PhaseState(x, v)


def check_energy(bs: BlownSystem, rng) -> CheckResult:
    s0 = _small_state(bs, rng)
    tr = integrate_original(bs.sys, s0, IntegratorConfig(t_max=20.0))
    drift = float(np.max(np.abs(tr.energy - tr.energy[0])) / (1 + abs(tr.energy[0])))
    return CheckResult("energy conservation", drift <= 1e-8, drift, 1e-8, f"{len(tr)} samples, {tr.termination.value}")


def _boundary_state(bs: BlownSystem, rng, tries: int = 10_000) -> McGeheeState | None:
    for _ in range(tries):
        q = _unit(rng, bs.n)
        f = bs.Ul(q)
        if f < 0:
            y = rng.normal(size=bs.n)
            y *= math.sqrt(-2 * f * rng.uniform(0, 1)) / np.linalg.norm(y)
            return McGeheeState(0.0, q, y)
    return None


def check_boundary_ode(bs: BlownSystem, rng) -> CheckResult:
    """Residual of ``H~' = -l nu H~``, relative to ``max(1, |l nu H~|)``."""
    z = _boundary_state(bs, rng)
    if z is None:
        # positive-energy boundary orbits can blow up; keep the window short
        z = McGeheeState(0.0, _unit(rng, bs.n), rng.uniform(0, 1.5) * _unit(rng, bs.n))
        t_max = 2.0
    else:
        t_max = 5.0
    tr = integrate_blown(bs, z, IntegratorConfig(t_max=t_max, sample_dt=1e-3, fixed_point_tol=0.0))
    res = boundary_energy_ode_residual(bs, tr)
    rel = res / max(1.0, float(np.max(np.abs(bs.l * tr.nu * tr.energy))))
    return CheckResult("boundary energy ODE residual", rel <= 1e-6, rel, 1e-6, f"absolute {res:.2e}")


def check_nu_monotone(bs: BlownSystem, rng, orbits: int = 5) -> CheckResult:
    worst = 0.0
    used = 0
    for _ in range(orbits):
        z = _boundary_state(bs, rng)
        if z is None:
            break
        used += 1
        tr = integrate_blown(bs, z, IntegratorConfig(t_max=10.0))
        worst = max(worst, float(np.max(np.maximum(0.0, -np.diff(tr.nu)), initial=0.0)))
    note = f"{used} orbits" if used else "no subcritical boundary: vacuous"
    return CheckResult("nu monotone on subcritical boundary", worst <= 1e-9, worst, 1e-9, note)


def check_flow_equivalence(bs: BlownSystem, rng) -> CheckResult:
    s0 = _small_state(bs, rng)
    R = bs.sys.radius
    n = bs.n
    ev = [
        Event(lambda t, z: z[0] - 0.9 * R, "far", True, 1),
        Event(lambda t, z: z[0] - 1e-3 * R, "near", True, -1),
    ]
    tb = integrate_blown(bs, bs.to_mcgehee(s0), IntegratorConfig(t_max=5.0), events=ev)
    tt = reparametrize_time(bs, tb)
    to = integrate_original(bs.sys, s0, IntegratorConfig(t_max=float(tt[-1, 0])), t_eval=tt[1:, 0])
    m = min(len(to), len(tb))
    r = tb.states[:m, :1]
    mapped = np.column_stack([r * tb.states[:m, 1 : n + 1], r ** (bs.l / 2) * tb.states[:m, n + 1 :]])
    err = float(np.max(np.abs(mapped - to.states[:m])))
    return CheckResult("flow equivalence", err <= 1e-6, err, 1e-6, f"{m} samples")


def check_eigenvalues(bs: BlownSystem) -> CheckResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContinuumWarning)
        crit = find_sphere_critical_points(bs.U_l)
    fps = [fp for fp in fixed_points(bs, crit) if fp.nu_star != 0 and not fp.jordan_degenerate and not fp.critical.degenerate]
    worst = max((fp.eig_rel_error for fp in fps), default=0.0)
    return CheckResult("eigenvalue cross-check", worst <= 1e-5, worst, 1e-5, f"{len(fps)} hyperbolic fixed points")


def run_suite(bs: BlownSystem, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_euler(bs, rng),
        check_radial(bs, rng),
        check_energy(bs, rng),
        check_boundary_ode(bs, rng),
        check_nu_monotone(bs, rng),
        check_flow_equivalence(bs, rng),
        check_eigenvalues(bs),
    ]
