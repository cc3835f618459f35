"""Total-instability decision procedures and orbit constructions.

The generic test asks that ``f`` be Morse with zero as a regular value.
The non-generic test evaluates the criterion function ``C`` built from the
second potential jet and the leading metric correction on the critical
points of ``f`` with ``f <= 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blowup import BlownSystem, HypothesisError, McGeheeState
from .boundary import (
    ZERO_TOL,
    BoundaryFixedPoint,
    ContinuumWarning,
    NotHyperbolic,
    SphereCriticalPoint,
    find_sphere_critical_points,
    fixed_points,
    heteroclinic_orbit,
    hypothesis_check,
)
from .germ import PolyBundle
from .integrate import (
    Event,
    IntegratorConfig,
    PreconditionError,
    Termination,
    Trajectory,
    escape_time,
    integrate_blown,
    reparametrize_time,
)
from .setdyn import PointCloud, hausdorff_distance
from .system import LagrangianSystem, PhaseState

__all__ = [
    "Inapplicable",
    "CriterionReport",
    "generic_criterion",
    "criterion_function",
    "criterion_function_reference",
    "nongeneric_criterion",
    "analyze",
    "escape_sweep",
    "AsymptoticOrbit",
    "asymptotic_orbit",
    "BoomerangReport",
    "boomerang_demo",
]

TOTALLY_UNSTABLE = "totally-unstable"
UNDECIDED = "undecided"
STRICT_MIN = "stable-strict-minimum"
HYP_ERROR = "hypothesis-error"


class Inapplicable(ValueError):
    """``mu`` is infinite: homogeneous potential and flat metric."""


@dataclass
class CriterionReport:
    generic_applicable: bool
    generic_verdict: str | None
    nongeneric_applicable: bool
    mu: float
    Delta: float
    C_values: list = field(default_factory=list)
    nongeneric_verdict: str | None = None
    undecided_reason: str | None = None
    verdict: str = UNDECIDED
    path: str | None = None
    hypotheses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def lines(self) -> list[str]:
        fmt = lambda v: "inf" if v == math.inf else f"{v:g}"
        out = [
            f"verdict: {self.verdict}" + (f" ({self.path})" if self.path else ""),
            f"generic criterion applicable: {self.generic_applicable}; verdict: {self.generic_verdict}",
            f"non-generic criterion applicable: {self.nongeneric_applicable}; verdict: {self.nongeneric_verdict}",
            f"mu = {fmt(self.mu)}, Delta = {fmt(self.Delta)}",
            f"f Morse: {self.hypotheses.get('morse')}; zero regular value: {self.hypotheses.get('zero_regular')}",
        ]
        for q, c in self.C_values:
            out.append(f"C({', '.join(f'{x:.12g}' for x in q)}) = {c:.12g}")
        if self.undecided_reason:
            out.append(f"reason: {self.undecided_reason}")
        out.extend(f"note: {n}" for n in self.notes)
        return out

    def to_dict(self) -> dict:
        num = lambda v: None if v == math.inf else v
        return {
            "verdict": self.verdict,
            "path": self.path,
            "generic_applicable": self.generic_applicable,
            "generic_verdict": self.generic_verdict,
            "nongeneric_applicable": self.nongeneric_applicable,
            "nongeneric_verdict": self.nongeneric_verdict,
            "mu": num(self.mu),
            "Delta": num(self.Delta),
            "C_values": [{"q": [float(x) for x in q], "C": float(c)} for q, c in self.C_values],
            "undecided_reason": self.undecided_reason,
            "hypotheses": dict(self.hypotheses),
            "notes": list(self.notes),
        }


def _critical(bs: BlownSystem, crit):
    if crit is not None:
        return crit
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContinuumWarning)
        return find_sphere_critical_points(bs.U_l)


def generic_criterion(bs: BlownSystem, crit: list[SphereCriticalPoint] | None = None) -> tuple[str, str | None]:
    """``(verdict, reason)``; totally unstable when ``f`` is Morse with zero regular."""
    if bs.Delta < 1:
        raise HypothesisError(f"weak magnetism fails: Delta = {bs.Delta:g} < 1")
    hyp = hypothesis_check(bs, _critical(bs, crit))
    if hyp["morse"] and hyp["zero_regular"]:
        return TOTALLY_UNSTABLE, None
    reasons = []
    if not hyp["morse"]:
        reasons.append("f is not a Morse function" + (" (critical continuum)" if hyp["continuum"] else ""))
    if not hyp["zero_regular"]:
        reasons.append("zero is a critical value of f")
    return UNDECIDED, "; ".join(reasons)


class _CriterionParts:
    def __init__(self, bs: BlownSystem):
        rep = bs.sys.report
        if rep.mu == math.inf:
            raise Inapplicable("criterion function undefined: homogeneous potential and Euclidean metric")
        self.l1, self.l2, self.m, self.mu = rep.l, rep.l2, rep.m, rep.mu
        n = bs.n
        self.use_potential = rep.l2 - rep.l == rep.mu
        self.use_metric = rep.m == rep.mu
        U = bs.sys.potential
        self.U_l1 = U.homogeneous_part(rep.l)
        self.U_l2 = U.homogeneous_part(int(rep.l2)) if self.use_potential else None
        self.g_m = bs.sys.metric.leading_part(int(rep.m)) if self.use_metric else None
        self._U1 = PolyBundle([self.U_l1], n)
        self._U2 = PolyBundle([self.U_l2], n) if self.use_potential else None
        self._gm = PolyBundle([e for row in self.g_m for e in row], n) if self.use_metric else None
        self.n = n

    def __call__(self, q) -> float:
        q = np.asarray(q, dtype=float)
        val = 0.0
        if self.use_potential:
            val -= (self.l2 - self.l1) * float(self._U2(q)[0])
        if self.use_metric:
            G = self._gm(q).reshape(self.n, self.n)
            val += self.m * float(self._U1(q)[0]) * float(q @ G @ q)
        return val


def criterion_function(bs: BlownSystem, q) -> float:
    """Criterion function ``C(q)``; both terms contribute when ``mu`` is attained twice."""
    parts = getattr(bs, "_criterion_parts", None)
    if parts is None:
        parts = _CriterionParts(bs)
        bs._criterion_parts = parts
    return parts(q)


def criterion_function_reference(bs: BlownSystem, q) -> float:
    """Same value as ``criterion_function`` by plain term-by-term germ evaluation."""
    rep = bs.sys.report
    if rep.mu == math.inf:
        raise Inapplicable("criterion function undefined")
    q = [float(v) for v in q]
    U = bs.sys.potential
    total = 0.0
    if rep.l2 - rep.l == rep.mu:
        s = 0.0
        for a, c in U.terms.items():
            if sum(a) == rep.l2:
                s += c * math.prod(qi ** ai for qi, ai in zip(q, a))
        total += -(rep.l2 - rep.l) * s
    if rep.m == rep.mu:
        ul = sum(c * math.prod(qi ** ai for qi, ai in zip(q, a)) for a, c in U.terms.items() if sum(a) == rep.l)
        contraction = 0.0
        corr = bs.sys.metric.correction()
        for i in range(bs.n):
            for j in range(bs.n):
                gij = sum(c * math.prod(qk ** ak for qk, ak in zip(q, a)) for a, c in corr[i][j].terms.items() if sum(a) == rep.m)
                contraction += gij * q[i] * q[j]
        total += rep.m * ul * contraction
    return total


def nongeneric_criterion(bs: BlownSystem, crit: list[SphereCriticalPoint] | None = None, tol: float = 1e-10):
    """``(verdict, C_values, offending)`` over critical points with ``f <= 0``."""
    rep = bs.sys.report
    if rep.mu == math.inf:
        raise Inapplicable("criterion function undefined: homogeneous potential and Euclidean metric")
    if not bs.Delta > rep.mu:
        raise HypothesisError(f"weak magnetism II fails: Delta = {bs.Delta:g} <= mu = {rep.mu:g}")
    crit = _critical(bs, crit)
    values = []
    offending = []
    for cp in crit:
        if cp.f_value <= ZERO_TOL:
            c = criterion_function(bs, cp.q)
            values.append((cp.q, c))
            if not c > tol:
                offending.append((cp.q, c))
    verdict = TOTALLY_UNSTABLE if not offending else UNDECIDED
    return verdict, values, offending


def analyze(bs: BlownSystem, crit: list[SphereCriticalPoint] | None = None) -> CriterionReport:
    rep = bs.sys.report
    crit = _critical(bs, crit)
    hyp = hypothesis_check(bs, crit)
    out = CriterionReport(
        generic_applicable=False,
        generic_verdict=None,
        nongeneric_applicable=False,
        mu=rep.mu,
        Delta=rep.Delta,
        hypotheses=hyp,
    )
    if crit and min(p.f_value for p in crit) > ZERO_TOL:
        out.verdict = STRICT_MIN
        out.undecided_reason = "f > 0 on the whole sphere: empty critical and subcritical boundary"
        out.notes.append("stable: strict minimum at jet level; total instability holds vacuously")
        return out
    if hyp["continuum"]:
        out.notes.append("critical points of f form a continuum; only sampled points were tested")
    reasons = []
    errors = []
    try:
        v, why = generic_criterion(bs, crit)
        out.generic_applicable = True
        out.generic_verdict = v
        if why:
            reasons.append(f"generic: {why}")
    except HypothesisError as exc:
        errors.append(str(exc))
    if out.generic_verdict == TOTALLY_UNSTABLE:
        out.verdict, out.path = TOTALLY_UNSTABLE, "generic"
        return out
    try:
        v, values, offending = nongeneric_criterion(bs, crit)
        out.nongeneric_applicable = True
        out.nongeneric_verdict = v
        out.C_values = values
        if offending:
            pts = ", ".join(f"C({', '.join(f'{x:.6g}' for x in q)})={c:.6g}" for q, c in offending)
            reasons.append(f"non-generic: C not positive at {pts}")
    except Inapplicable as exc:
        reasons.append(f"non-generic: {exc}")
    except HypothesisError as exc:
        errors.append(str(exc))
    if out.nongeneric_verdict == TOTALLY_UNSTABLE:
        out.verdict, out.path = TOTALLY_UNSTABLE, "non-generic"
    elif errors:
        out.verdict = HYP_ERROR
        out.undecided_reason = "; ".join(errors + reasons)
    else:
        out.verdict = UNDECIDED
        out.undecided_reason = "; ".join(reasons)
    return out


# ----------------------------------------------------------------------------
# numerical cross-checks


def subcritical_starts(sys: LagrangianSystem, r0: float, count: int, seed: int = 0, max_tries: int = 1_000_000) -> list[PhaseState]:
    """Random states with ``|x| = r0`` and ``H < 0`` by rejection sampling."""
    rng = np.random.default_rng(seed)
    n = sys.n
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise PreconditionError("no subcritical states found at this radius")
        q = rng.normal(size=n)
        q /= np.linalg.norm(q)
        x = r0 * q
        U = sys.potential_at(x)
        if not U < 0:
            continue
        v = rng.normal(size=n)
        G = sys.metric_at(x)
        kin = float(v @ G @ v)
        # kinetic energy a random fraction of the available -U
        v *= math.sqrt(2 * (-U) * rng.uniform(0.0, 0.9) / kin)
        out.append(PhaseState(x, v))
    return out


def escape_sweep(sys: LagrangianSystem, r_B: float, count: int = 10, r0: float | None = None, seed: int = 0, cfg: IntegratorConfig | None = None) -> list[float | None]:
    """Escape times of ``count`` random subcritical starts at ``|x| = r0`` (default ``r_B/10``)."""
    r0 = r_B / 10 if r0 is None else r0
    cfg = cfg or IntegratorConfig(t_max=200.0, rtol=1e-9, atol=1e-12)
    return [escape_time(sys, s, r_B, cfg) for s in subcritical_starts(sys, r0, count, seed)]


# ----------------------------------------------------------------------------
# orbit constructions


@dataclass
class AsymptoticOrbit:
    blown: Trajectory
    original_times: np.ndarray
    original_states: np.ndarray
    energy: np.ndarray
    fixed_point: BoundaryFixedPoint

    def angular_error(self) -> float:
        n = self.blown.n
        x = self.original_states[-1, :n]
        d = x / np.linalg.norm(x) - self.fixed_point.q
        return float(np.linalg.norm(d))


def asymptotic_orbit(
    bs: BlownSystem,
    fp: BoundaryFixedPoint,
    cfg: IntegratorConfig | None = None,
    eps: float = 1e-6,
    r_stop: float | None = None,
    tau_max: float = 60.0,
    dt: float | None = None,
) -> AsymptoticOrbit:
    """Interior orbit converging to ``fp`` (``nu* < 0``) or emanating from it (``nu* > 0``).

    Seeds ``fp + eps * radial eigenvector`` and integrates against the
    radial eigenvalue.  The result is ordered so that the last sample is
    the one next to the equilibrium for ``nu* < 0`` and the first one for
    ``nu* > 0``.
    """
    if fp.nu_star == 0.0:
        raise NotHyperbolic("nu* = 0")
    if fp.radial_vector is None:
        from .boundary import linearize_fixed_point

        fp = linearize_fixed_point(bs, fp)
    r_stop = 0.5 * bs.sys.radius if r_stop is None else r_stop
    cfg = (cfg or IntegratorConfig()).with_(t_max=tau_max, fixed_point_tol=0.0, sample_dt=dt)
    z0 = fp.state.as_array() + eps * fp.radial_vector
    stop = Event(lambda t, z: z[0] - r_stop, name="r-stop", terminal=True, direction=1)
    backward = fp.nu_star < 0
    tr = integrate_blown(bs, McGeheeState.from_array(z0, bs.n), cfg, events=[stop], backward=backward)
    if backward:
        tr = Trajectory("blown", tr.n, tr.times[::-1].copy(), tr.states[::-1].copy(), tr.energy[::-1].copy(), tr.nu[::-1].copy(), tr.termination, 1, tr.events)
    tt = reparametrize_time(bs, tr)
    if backward:
        tt[:, 0] -= tt[-1, 0]
    n, l = bs.n, bs.l
    r = tr.states[:, :1]
    x = r * tr.states[:, 1 : n + 1]
    v = r ** (l / 2) * tr.states[:, n + 1 :]
    X = np.column_stack([x, v])
    H = np.array([bs.sys.energy_array(z) for z in X])
    return AsymptoticOrbit(tr, tt[:, 0], X, H, fp)


@dataclass
class BoomerangReport:
    ns: list
    distances: list
    reversal_error: list
    reference_size: int
    details: dict = field(default_factory=dict)

    def monotone(self, slack: float = 0.10) -> bool:
        d = self.distances
        return all(d[i + 1] <= d[i] * (1 + slack) for i in range(len(d) - 1))

    def lines(self) -> list[str]:
        out = [f"reference cloud size: {self.reference_size}"]
        for n, d, e in zip(self.ns, self.distances, self.reversal_error):
            out.append(f"n = {n}: d_H = {d:.6e}, reversal error = {e:.3e}")
        out.append(f"monotone within 10%: {self.monotone()}")
        return out


def _reverse(states: np.ndarray, n: int) -> np.ndarray:
    out = states.copy()
    out[:, n + 1 :] *= -1
    return out


def boomerang_demo(
    bs: BlownSystem,
    cp: SphereCriticalPoint | None = None,
    ns=(4, 8, 16, 32),
    cfg: IntegratorConfig | None = None,
    dt: float = 0.01,
    tau_max: float = 60.0,
    tau_ref: float = 30.0,
) -> BoomerangReport:
    """Orbit clouds from ``(1/n, q*, 0)`` against ``gamma + heteroclinic + reversed gamma``."""
    if bs.magnetic:
        raise PreconditionError("boomerang construction is for mechanical (non-magnetic) systems")
    crit = _critical(bs, None)
    hyp = hypothesis_check(bs, crit)
    if not (hyp["morse"] and hyp["zero_regular"]):
        raise PreconditionError("f must be Morse with zero as a regular value")
    if cp is None:
        mins = [p for p in crit if p.f_value < -ZERO_TOL and p.morse_index == 0]
        if not mins:
            raise PreconditionError("f has no local minimum with negative value")
        cp = max(mins, key=lambda p: tuple(p.q))
    if not (cp.f_value < -ZERO_TOL and cp.morse_index == 0):
        raise PreconditionError("q* must be a local minimum of f with f(q*) < 0")
    n = bs.n
    cfg = (cfg or IntegratorConfig()).with_(fixed_point_tol=0.0)
    fps = [fp for fp in fixed_points(bs, [cp]) if fp.nu_star < 0]
    gamma = asymptotic_orbit(bs, fps[0], cfg, tau_max=tau_ref, r_stop=bs.sys.radius * 0.999, dt=dt)
    het = heteroclinic_orbit(bs, cp, cfg, span=tau_ref, dt=dt)
    g_states = gamma.blown.states
    ref = np.vstack([g_states, het.states, _reverse(g_states, n)])
    ref_cloud = PointCloud(ref)
    distances, rev = [], []
    for k in ns:
        z0 = McGeheeState(1.0 / k, cp.q, np.zeros(n))
        run = cfg.with_(t_max=tau_max, sample_dt=dt)
        fwd = integrate_blown(bs, z0, run, events=[Event(lambda t, z: z[1 : n + 1] @ z[n + 1 :], "turn", True, -1)])
        bwd = integrate_blown(bs, z0, run, events=[Event(lambda t, z: z[1 : n + 1] @ z[n + 1 :], "turn", True, +1)], backward=True)
        cloud = PointCloud(np.vstack([bwd.states[::-1], fwd.states[1:]]))
        distances.append(hausdorff_distance(cloud, ref_cloud))
        m = min(len(fwd), len(bwd))
        rev.append(float(np.max(np.abs(_reverse(fwd.states[:m], n) - bwd.states[:m]))))
    return BoomerangReport(list(ns), distances, rev, len(ref))
