"""Critical-boundary analysis on ``r = 0``.

Fixed points of the McGehee flow on the boundary sit over critical
points ``q*`` of ``f = U_l`` restricted to the unit sphere, at
``y = nu* q*`` with ``nu*^2 = -2 f(q*)``.  Their spectrum has a closed
form in terms of the sphere Hessian of ``f``; every linearization is
cross-checked against a finite-difference Jacobian of the extended field.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linear_sum_assignment

from .blowup import BlownSystem, McGeheeState
from .germ import AnalyticGerm, PolyBundle
from .integrate import IntegratorConfig, PreconditionError, Trajectory, integrate_blown

__all__ = [
    "SphereCriticalPoint",
    "BoundaryFixedPoint",
    "NotHyperbolic",
    "ContinuumWarning",
    "find_sphere_critical_points",
    "sphere_hessian",
    "fixed_points",
    "linearize_fixed_point",
    "heteroclinic_orbit",
    "hypothesis_check",
]

CRIT_TOL = 1e-8
ZERO_TOL = 1e-8
DEGEN_TOL = 1e-8
MERGE_RADIUS = 1e-6
JORDAN_TOL = 1e-9
FD_STEP = 1e-6


class NotHyperbolic(ValueError):
    """The fixed point has ``nu* = 0``: zero is a critical value of ``f``."""


class ContinuumWarning(UserWarning):
    """Many degenerate critical points share a value; ``f`` has a critical continuum."""


@dataclass(frozen=True)
class SphereCriticalPoint:
    q: np.ndarray
    f_value: float
    lagrange: float
    hess_eigs: tuple
    morse_index: int
    degenerate: bool
    in_continuum: bool = False

    @property
    def zero_value(self) -> bool:
        return abs(self.f_value) < ZERO_TOL


@dataclass(frozen=True)
class BoundaryFixedPoint:
    q: np.ndarray
    nu_star: float
    critical: SphereCriticalPoint
    flow_eigs: tuple = ()
    jordan_degenerate: bool = False
    stable_dim: int = 0
    unstable_dim: int = 0
    source_sink_class: str = "unclassified"
    numeric_eigs: tuple = ()
    eig_rel_error: float = math.nan
    radial_vector: np.ndarray | None = field(default=None, compare=False)

    @property
    def f_value(self) -> float:
        return self.critical.f_value

    @property
    def state(self) -> McGeheeState:
        return McGeheeState(0.0, self.q, self.nu_star * self.q)


class _Jet:
    """Compiled ``U_l`` with gradient and Hessian."""

    def __init__(self, U_l: AnalyticGerm):
        degs = U_l.degrees()
        if len(degs) != 1:
            raise ValueError("expected a non-zero homogeneous polynomial")
        self.l = degs[0]
        self.n = U_l.dim
        self.U = PolyBundle([U_l], self.n)
        self.grad = PolyBundle(U_l.gradient(), self.n)
        self.hess = PolyBundle([h for row in U_l.hessian() for h in row], self.n)

    def f(self, q) -> float:
        return float(self.U(q)[0])

    def H(self, q) -> np.ndarray:
        return self.hess(q).reshape(self.n, self.n)

    def sphere_grad(self, q) -> np.ndarray:
        return self.grad(q) - self.l * self.f(q) * q


def _tangent_basis(q: np.ndarray) -> np.ndarray:
    return null_space(q[None, :])


def sphere_hessian(U_l: AnalyticGerm, q, basis: np.ndarray | None = None) -> np.ndarray:
    """Ascending spectrum of ``Hess f`` at a critical point ``q``."""
    jet = U_l if isinstance(U_l, _Jet) else _Jet(U_l)
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1) > 1e-10:
        raise ValueError("q must be a unit vector")
    res = np.linalg.norm(jet.sphere_grad(q))
    if res > CRIT_TOL:
        raise ValueError(f"q is not critical for f (residual {res:.3g})")
    B = _tangent_basis(q) if basis is None else basis
    M = B.T @ jet.H(q) @ B - jet.l * jet.f(q) * np.eye(B.shape[1])
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def _seeds(n: int, count: int, seed: int) -> np.ndarray:
    if n == 2:
        th = (np.arange(count) + 0.5) * 2 * np.pi / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5 ** 0.5) * k
        rho = np.sqrt(1 - z * z)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    g = np.random.default_rng(seed).normal(size=(count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _newton(jet: _Jet, q0: np.ndarray, iters: int = 60) -> np.ndarray | None:
    q = q0 / np.linalg.norm(q0)
    lam = jet.l * jet.f(q)
    n = jet.n
    for _ in range(iters):
        G = np.concatenate([jet.grad(q) - lam * q, [0.5 * (1 - q @ q)]])
        if np.linalg.norm(G) < 1e-14:
            break
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = jet.H(q) - lam * np.eye(n)
        J[:n, n] = -q
        J[n, :n] = -q
        step = np.linalg.lstsq(J, -G, rcond=None)[0]
        # damp long steps so iterates stay near the sphere
        size = np.linalg.norm(step[:n])
        if size > 0.5:
            step *= 0.5 / size
        q = q + step[:n]
        q /= np.linalg.norm(q)
        lam = jet.l * jet.f(q)
    if np.linalg.norm(jet.sphere_grad(q)) > CRIT_TOL * 1e-2:
        return None
    # round-off dust in exactly vanishing components
    q = np.where(np.abs(q) < 1e-13, 0.0, q)
    return q / np.linalg.norm(q)


def _make_point(jet: _Jet, q: np.ndarray) -> SphereCriticalPoint:
    fv = jet.f(q)
    if jet.n == 1:
        eigs = np.zeros(0)
    else:
        eigs = sphere_hessian(jet, q)
    scale = max(1.0, float(np.max(np.abs(jet.H(q)))))
    degenerate = bool(np.any(np.abs(eigs) < DEGEN_TOL * scale))
    return SphereCriticalPoint(
        q=q,
        f_value=fv,
        lagrange=jet.l * fv,
        hess_eigs=tuple(float(e) for e in eigs),
        morse_index=int(np.sum(eigs < -DEGEN_TOL * scale)),
        degenerate=degenerate,
    )


def find_sphere_critical_points(U_l: AnalyticGerm, n_seeds: int | None = None, seed: int = 0) -> list[SphereCriticalPoint]:
    """Critical points of ``U_l`` on the unit sphere by multi-start Newton.

    Completeness is best effort.  A continuum of critical points shows up
    as many degenerate points sharing a value; they are all returned,
    flagged ``in_continuum``, and a ``ContinuumWarning`` is issued.
    """
    jet = U_l if isinstance(U_l, _Jet) else _Jet(U_l)
    n = jet.n
    if n == 1:
        pts = [_make_point(jet, np.array([s])) for s in (-1.0, 1.0)]
        return sorted(pts, key=lambda p: (p.f_value, tuple(p.q)))
    count = n_seeds if n_seeds is not None else 32 * n * n
    found: list[np.ndarray] = []
    for s in _seeds(n, count, seed):
        q = _newton(jet, s)
        if q is None:
            continue
        if all(np.arccos(np.clip(q @ p, -1, 1)) >= MERGE_RADIUS for p in found):
            found.append(q)
    if not found:
        warnings.warn("Newton failed from every seed", RuntimeWarning, stacklevel=2)
    pts = [_make_point(jet, q) for q in found]
    pts = _flag_continua(pts)
    return sorted(pts, key=lambda p: (round(p.f_value, 12), tuple(np.round(p.q, 12))))


def _flag_continua(pts: list[SphereCriticalPoint]) -> list[SphereCriticalPoint]:
    degen = [p for p in pts if p.degenerate]
    out = []
    flagged = False
    for p in pts:
        same = sum(1 for o in degen if abs(o.f_value - p.f_value) < ZERO_TOL)
        if p.degenerate and same >= 4:
            flagged = True
            p = SphereCriticalPoint(p.q, p.f_value, p.lagrange, p.hess_eigs, p.morse_index, True, True)
        out.append(p)
    if flagged:
        warnings.warn("critical points of f form a continuum", ContinuumWarning, stacklevel=3)
    return out


def fixed_points(bs: BlownSystem, crit: list[SphereCriticalPoint] | None = None, linearize: bool = True) -> list[BoundaryFixedPoint]:
    """All boundary fixed points over the critical points with ``f <= 0``."""
    if crit is None:
        crit = find_sphere_critical_points(bs.U_l)
    out = []
    for cp in crit:
        if cp.f_value > ZERO_TOL:
            continue
        if cp.f_value < -ZERO_TOL:
            a = math.sqrt(-2 * cp.f_value)
            nus = (-a, a)
        else:
            nus = (0.0,)
        for nu in nus:
            fp = BoundaryFixedPoint(q=cp.q, nu_star=nu, critical=cp)
            res = np.linalg.norm(bs.field_array(fp.state.as_array()))
            if res > 1e-10:
                raise RuntimeError(f"emitted fixed point has field norm {res:.3g}")
            if linearize and nu != 0.0:
                fp = linearize_fixed_point(bs, fp)
            elif nu == 0.0:
                fp = BoundaryFixedPoint(q=cp.q, nu_star=0.0, critical=cp, source_sink_class="non-hyperbolic")
            out.append(fp)
    return sorted(out, key=lambda p: (round(p.f_value, 12), p.nu_star, tuple(np.round(p.q, 12))))


def closed_form_eigenvalues(l: int, nu: float, hess_eigs) -> tuple[list[complex], bool]:
    """``{nu, -l nu}`` and the pairs ``k_i`` from the sphere Hessian spectrum."""
    eigs: list[complex] = [complex(nu), complex(-l * nu)]
    jordan = False
    c = l / 2 + 1
    for lam in hess_eigs:
        disc = nu * nu * c * c - 4 * lam
        if abs(disc) <= JORDAN_TOL * max(1.0, nu * nu * c * c):
            jordan = True
        root = np.sqrt(complex(disc))
        eigs.append(-0.5 * nu * c + 0.5 * root)
        eigs.append(-0.5 * nu * c - 0.5 * root)
    return eigs, jordan


def _chart_field(bs: BlownSystem, q0: np.ndarray, B: np.ndarray):
    """Field in gnomonic chart coordinates ``(r, s, y)`` around ``q0``."""
    n = bs.n
    k = B.shape[1]

    def embed(w):
        qv = q0 + B @ w[1 : 1 + k]
        return np.concatenate([[w[0]], qv / np.linalg.norm(qv), w[1 + k :]])

    def field_(w):
        z = embed(w)
        X = bs.field_array(z)
        q, dq = z[1 : n + 1], X[1 : n + 1]
        a, da = q0 @ q, q0 @ dq
        ds = (B.T @ dq * a - B.T @ q * da) / (a * a)
        return np.concatenate([[X[0]], ds, X[n + 1 :]])

    return field_


def numeric_jacobian(bs: BlownSystem, fp: BoundaryFixedPoint, h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobian in chart coordinates and the chart basis."""
    n = bs.n
    B = _tangent_basis(fp.q) if n > 1 else np.zeros((1, 0))
    F = _chart_field(bs, fp.q, B)
    w0 = np.concatenate([[0.0], np.zeros(n - 1), fp.nu_star * fp.q])
    dim = w0.size
    J = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        J[:, j] = (F(w0 + e) - F(w0 - e)) / (2 * h)
    return J, B


def linearize_fixed_point(bs: BlownSystem, fp: BoundaryFixedPoint) -> BoundaryFixedPoint:
    if fp.nu_star == 0.0:
        raise NotHyperbolic("nu* = 0: zero is a critical value of f")
    n, l = bs.n, bs.l
    eigs, jordan = closed_form_eigenvalues(l, fp.nu_star, fp.critical.hess_eigs)
    J, B = numeric_jacobian(bs, fp)
    w, V = np.linalg.eig(J)
    cost = np.abs(np.subtract.outer(np.array(eigs), w))
    rows, cols = linear_sum_assignment(cost)
    num = [complex(w[c]) for c in cols[np.argsort(rows)]]
    floor = 1e-8 * max(abs(e) for e in eigs)
    rel = max(abs(a - b) / max(abs(a), floor) for a, b in zip(eigs, num))
    # radial eigenvector: numeric eigenvector for nu*, mapped back to (r, q, y)
    idx = int(np.argmin(np.abs(w - fp.nu_star)))
    v = np.real_if_close(V[:, idx])
    v = np.real(v)
    dz = np.concatenate([[v[0]], B @ v[1:n], v[n:]])
    if dz[0] < 0:
        dz = -dz
    dz /= np.linalg.norm(dz)
    re = np.array([e.real for e in eigs])
    scale = max(abs(e) for e in eigs)
    tangent = re[2:]
    if n == 1:
        cls = "isolated"
    elif np.all(tangent > 1e-12 * scale):
        cls = "source"
    elif np.all(tangent < -1e-12 * scale):
        cls = "sink"
    else:
        cls = "saddle"
    return BoundaryFixedPoint(
        q=fp.q,
        nu_star=fp.nu_star,
        critical=fp.critical,
        flow_eigs=tuple(eigs),
        jordan_degenerate=jordan,
        stable_dim=int(np.sum(re < -1e-12 * scale)),
        unstable_dim=int(np.sum(re > 1e-12 * scale)),
        source_sink_class=cls,
        numeric_eigs=tuple(num),
        eig_rel_error=float(rel),
        radial_vector=dz,
    )


def heteroclinic_orbit(bs: BlownSystem, cp: SphereCriticalPoint, cfg: IntegratorConfig | None = None, span: float = 10.0, dt: float = 0.01) -> Trajectory:
    """Boundary orbit through ``(0, q*, 0)`` joining ``nu = -A`` to ``nu = +A``.

    Samples cover ``tau`` in ``[-span, span]``; the closed form is
    ``Y(tau) = A tanh(l A tau / 2)`` with ``A = sqrt(-2 f(q*))``.
    """
    if not cp.f_value < -ZERO_TOL:
        raise PreconditionError("heteroclinic orbit needs f(q*) < 0")
    cfg = (cfg or IntegratorConfig()).with_(t_max=span, sample_dt=dt, fixed_point_tol=0.0)
    z0 = McGeheeState(0.0, cp.q, np.zeros(bs.n))
    fwd = integrate_blown(bs, z0, cfg)
    bwd = integrate_blown(bs, z0, cfg, backward=True)
    times = np.concatenate([bwd.times[:0:-1], fwd.times])
    states = np.vstack([bwd.states[:0:-1], fwd.states])
    energy = np.concatenate([bwd.energy[:0:-1], fwd.energy])
    nu = np.concatenate([bwd.nu[:0:-1], fwd.nu])
    return Trajectory("blown", bs.n, times, states, energy, nu, fwd.termination)


def heteroclinic_closed_form(l: int, f_value: float, tau) -> np.ndarray:
    A = math.sqrt(-2 * f_value)
    return A * np.tanh(l * A * np.asarray(tau) / 2)


def hypothesis_check(bs: BlownSystem, crit: list[SphereCriticalPoint] | None = None) -> dict:
    """``morse``: every critical point non-degenerate; ``zero_regular``: no critical value near 0."""
    if crit is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ContinuumWarning)
            crit = find_sphere_critical_points(bs.U_l)
    continuum = any(p.in_continuum for p in crit)
    return {
        "morse": not continuum and not any(p.degenerate for p in crit),
        "zero_regular": not any(p.zero_value for p in crit),
        "continuum": continuum,
    }
