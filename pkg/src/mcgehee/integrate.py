"""Adaptive integration of the original and McGehee flows.

The stepper is the Dormand-Prince 5(4) pair with its free continuous
extension.  It is written out here rather than borrowed because the
McGehee flow needs hooks a black-box solver does not offer: stage
evaluations outside the coordinate ball must reject the step, ``q`` is
projected back to the sphere after accepted steps, and runs stop when
the field has effectively vanished.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .blowup import BlownSystem, McGeheeState
from .system import DomainError, LagrangianSystem, PhaseState

__all__ = [
    "IntegratorConfig",
    "Termination",
    "Event",
    "Trajectory",
    "StiffnessError",
    "PreconditionError",
    "integrate_original",
    "integrate_blown",
    "reparametrize_time",
    "escape_time",
]


class StiffnessError(RuntimeError):
    """Step size underflow; ``trajectory`` holds what was computed."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


class PreconditionError(ValueError):
    """Inputs violate the stated precondition of an operation."""


class Termination(str, enum.Enum):
    TIME_OUT = "time-out"
    DOMAIN_EXIT = "domain-exit"
    FIXED_POINT = "fixed-point-convergence"
    EVENT = "event"


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-11
    atol: float = 1e-13
    max_step: float = math.inf
    t_max: float = 10.0
    first_step: float | None = None
    max_steps: int = 1_000_000
    fixed_point_tol: float = 1e-10
    fixed_point_steps: int = 3
    event_tol: float = 1e-13
    sphere_tol: float = 1e-10
    wall_margin: float = 1e-6
    sample_dt: float | None = None

    def __post_init__(self):
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if not self.t_max > 0 or not self.max_step > 0:
            raise ValueError("t_max and max_step must be positive")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")

    def with_(self, **kw) -> "IntegratorConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Event:
    """Zero crossing of ``fn(t, y)``; ``direction`` +1/-1 restricts the sign change."""

    fn: Callable[[float, np.ndarray], float]
    name: str = "event"
    terminal: bool = True
    direction: int = 0


@dataclass
class Trajectory:
    """Sampled orbit.  Times are strictly monotone in the integration direction."""

    frame: str  # "original" or "blown"
    n: int
    times: np.ndarray
    states: np.ndarray
    energy: np.ndarray
    nu: np.ndarray
    termination: Termination
    direction: int = 1
    events: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def columns(self) -> list[str]:
        n = self.n
        if self.frame == "blown":
            head = ["r"] + [f"q_{i + 1}" for i in range(n)] + [f"y_{i + 1}" for i in range(n)]
        else:
            head = ["norm_x"] + [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
        return ["time"] + head + ["energy", "nu"]

    def table(self) -> np.ndarray:
        if self.frame == "blown":
            core = self.states
        else:
            nx = np.linalg.norm(self.states[:, : self.n], axis=1)
            core = np.column_stack([nx, self.states])
        return np.column_stack([self.times, core, self.energy, self.nu])

    def to_csv(self, path_or_buf) -> None:
        header = ",".join(self.columns())
        np.savetxt(path_or_buf, self.table(), delimiter=",", header=header, comments="", fmt="%.17g")

    def positions(self) -> np.ndarray:
        """Configuration points ``x`` (``r q`` for blown trajectories)."""
        if self.frame == "blown":
            return self.states[:, :1] * self.states[:, 1 : self.n + 1]
        return self.states[:, : self.n]


# ----------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + s h) = y + h K^T P [s, s^2, s^3, s^4]
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


class _Step:
    """One accepted step with its dense interpolant."""

    def __init__(self, t0, y0, h, K):
        self.t0, self.y0, self.h = t0, y0, h
        self.Q = K.T @ _P

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        return self.y0 + self.h * (self.Q @ np.array([s, s * s, s ** 3, s ** 4]))


@dataclass
class _RunResult:
    times: list
    states: list
    termination: Termination
    events: list
    error: str | None = None


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _dopri(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    cfg: IntegratorConfig,
    direction: int = 1,
    events: Sequence[Event] = (),
    project: Callable[[np.ndarray], np.ndarray | None] | None = None,
    t_eval: np.ndarray | None = None,
) -> _RunResult:
    t = 0.0
    y = np.array(y0, dtype=float)
    t_end = direction * cfg.t_max
    fy = f(y)
    times, states, hits = [t], [y.copy()], []

    if t_eval is None and cfg.sample_dt is not None:
        k = int(math.floor(cfg.t_max / cfg.sample_dt + 1e-9))
        t_eval = direction * cfg.sample_dt * np.arange(1, k + 1)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        t_eval = t_eval[direction * t_eval > 0]
        times, states = [0.0], [y.copy()]
    next_eval = 0

    if not np.any(fy):
        # exact equilibrium
        grid = t_eval if t_eval is not None else np.array([t_end])
        for te in grid:
            times.append(float(te))
            states.append(y.copy())
        return _RunResult(times, states, Termination.FIXED_POINT, hits)

    def scale(a, b):
        return cfg.atol + cfg.rtol * np.maximum(np.abs(a), np.abs(b))

    # initial step (Hairer, Norsett, Wanner II.4)
    if cfg.first_step is not None:
        h = cfg.first_step
    else:
        sc = scale(y, y)
        d0, d1 = _rms(y / sc), _rms(fy / sc)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, cfg.t_max, cfg.max_step)
        try:
            f1 = f(y + direction * h0 * fy)
            d2 = _rms((f1 - fy) / sc) / h0
        except DomainError:
            d2 = 0.0
        h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h0, h1)
    h = min(h, cfg.max_step)

    ev_vals = [e.fn(t, y) for e in events]
    err_old = 1e-4
    small = 0
    rejected = False
    steps = 0
    termination = Termination.TIME_OUT

    while direction * (t_end - t) > 0:
        steps += 1
        if steps > cfg.max_steps:
            raise StiffnessError("maximum number of steps exceeded", _RunResult(times, states, termination, hits))
        hmin = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < hmin:
            raise StiffnessError(f"step size underflow at t={t:.6g}", _RunResult(times, states, termination, hits))
        last = h >= abs(t_end - t)
        if last:
            h = abs(t_end - t)
        hs = direction * h
        K = np.empty((7, y.size))
        K[0] = fy
        try:
            for i in range(1, 7):
                K[i] = f(y + hs * (np.asarray(_A[i]) @ K[:i]))
        except DomainError:
            if h <= 1e3 * hmin:
                termination = Termination.DOMAIN_EXIT
                break
            h *= 0.25
            rejected = True
            continue
        y_new = y + hs * (_B @ K)
        err = _rms(hs * (_E @ K) / scale(y, y_new))
        if not np.isfinite(err):
            h *= 0.25
            rejected = True
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            rejected = True
            continue

        # accepted
        step = _Step(t, y, hs, K)
        t_new = t_end if last else t + hs
        f_new = K[6]
        if project is not None:
            yp = project(y_new)
            if yp is not None:
                y_new = yp
                f_new = f(y_new)

        stop = False
        for j, e in enumerate(events):
            v_new = e.fn(t_new, y_new)
            v_old = ev_vals[j]
            crossed = (v_old < 0 <= v_new and e.direction >= 0) or (v_old > 0 >= v_new and e.direction <= 0)
            if crossed and v_old != 0:
                g = lambda s: e.fn(s, step(s))
                lo, hi = (t, t_new)
                try:
                    te = brentq(g, min(lo, hi), max(lo, hi), xtol=cfg.event_tol, rtol=4 * np.finfo(float).eps)
                except ValueError:
                    te = t_new
                hits.append((e.name, te, step(te)))
                if e.terminal:
                    stop = True
                    t_new, y_new = te, step(te)
                    break
            ev_vals[j] = v_new

        if t_eval is not None:
            while next_eval < len(t_eval) and direction * (t_eval[next_eval] - t_new) <= 0:
                te = t_eval[next_eval]
                times.append(float(te))
                states.append(step(te) if te != t_new else y_new.copy())
                next_eval += 1
            if stop and (times[-1] != t_new):
                times.append(t_new)
                states.append(y_new.copy())
        else:
            times.append(t_new)
            states.append(y_new.copy())

        if stop:
            termination = Termination.EVENT
            break

        fac = 0.9 * err ** -0.17 * err_old ** 0.04 if err > 0 else 10.0
        fac = min(10.0, max(0.2, fac))
        if rejected:
            fac = min(fac, 1.0)
        h = min(h * fac, cfg.max_step)
        err_old = max(err, 1e-4)
        rejected = False
        t, y, fy = t_new, y_new, f_new

        if np.linalg.norm(fy) < cfg.fixed_point_tol:
            small += 1
            if small >= cfg.fixed_point_steps:
                termination = Termination.FIXED_POINT
                break
        else:
            small = 0
    if termination is Termination.DOMAIN_EXIT and t_eval is not None and times[-1] != t:
        times.append(t)
        states.append(y.copy())
    return _RunResult(times, states, termination, hits)


def _run(f, y0, cfg, direction, events, project, t_eval):
    try:
        return _dopri(f, y0, cfg, direction, events, project, t_eval), None
    except StiffnessError as exc:
        return exc.trajectory, str(exc)


# ----------------------------------------------------------------------------
# public drivers


def _wall_event(radius_fn, limit: float) -> Event:
    return Event(lambda t, y: limit - radius_fn(y), name="domain-exit", terminal=True, direction=-1)


def integrate_original(
    sys: LagrangianSystem,
    s0: PhaseState,
    cfg: IntegratorConfig = IntegratorConfig(),
    events: Sequence[Event] = (),
    backward: bool = False,
    t_eval=None,
) -> Trajectory:
    """Euler-Lagrange flow from ``s0``."""
    n = sys.n
    y0 = s0.as_array()
    if not np.linalg.norm(s0.x) < sys.radius:
        raise DomainError("initial position outside the domain ball")
    wall = _wall_event(lambda y: np.linalg.norm(y[:n]), sys.radius * (1 - cfg.wall_margin))
    res, err = _run(sys.field_array, y0, cfg, -1 if backward else 1, [wall, *events], None, t_eval)
    traj = _original_trajectory(sys, res, -1 if backward else 1)
    if err:
        raise StiffnessError(err, traj)
    return traj


def _original_trajectory(sys: LagrangianSystem, res: _RunResult, direction: int) -> Trajectory:
    n = sys.n
    S = np.array(res.states)
    H = np.array([sys.energy_array(z) for z in S])
    nx = np.linalg.norm(S[:, :n], axis=1)
    radial = np.einsum("ij,ij->i", S[:, :n], S[:, n:])
    nu = np.divide(radial, nx, out=np.zeros_like(radial), where=nx > 0)
    term, events = _classify(res)
    return Trajectory("original", n, np.array(res.times), S, H, nu, term, direction, events)


def _classify(res: _RunResult):
    term = res.termination
    events = [(name, t, y) for name, t, y in res.events if name != "domain-exit"]
    if term is Termination.EVENT and any(name == "domain-exit" for name, _, _ in res.events):
        if not events or events[-1][1] != res.times[-1]:
            term = Termination.DOMAIN_EXIT
    return term, events


def _sphere_projector(n: int, tol: float):
    def project(z: np.ndarray):
        nq = np.linalg.norm(z[1 : n + 1])
        if abs(nq - 1.0) > tol:
            z = z.copy()
            z[1 : n + 1] /= nq
            return z
        return None

    return project


def integrate_blown(
    bs: BlownSystem,
    z0: McGeheeState,
    cfg: IntegratorConfig = IntegratorConfig(),
    events: Sequence[Event] = (),
    backward: bool = False,
    t_eval=None,
) -> Trajectory:
    """McGehee flow from ``z0`` (``r`` of either sign on the extended manifold)."""
    n = bs.n
    y0 = z0.as_array()
    if not abs(z0.r) < bs.sys.radius:
        raise DomainError("initial radius outside the domain")
    wall = _wall_event(lambda y: abs(y[0]), bs.sys.radius * (1 - cfg.wall_margin))
    direction = -1 if backward else 1
    res, err = _run(bs.field_array, y0, cfg, direction, [wall, *events], _sphere_projector(n, cfg.sphere_tol), t_eval)
    traj = _blown_trajectory(bs, res, direction)
    if err:
        raise StiffnessError(err, traj)
    return traj


def _blown_trajectory(bs: BlownSystem, res: _RunResult, direction: int) -> Trajectory:
    n = bs.n
    S = np.array(res.states)
    H = np.array([bs.energy_array(z) for z in S])
    nu = np.einsum("ij,ij->i", S[:, 1 : n + 1], S[:, n + 1 :])
    term, events = _classify(res)
    return Trajectory("blown", n, np.array(res.times), S, H, nu, term, direction, events)


def reparametrize_time(bs: BlownSystem, traj: Trajectory) -> np.ndarray:
    """Pairs ``(t, tau)`` with ``dt = r^(1 - l/2) dtau`` accumulated over samples.

    Each interval uses the trapezoid rule with the endpoint-derivative
    correction ``-h^2/12 (w'(b) - w'(a))``; the derivative of
    ``w = r^(1 - l/2)`` along the flow is ``(1 - l/2) w nu`` exactly, so
    the quadrature is fourth order at no extra cost.
    """
    if traj.frame != "blown":
        raise PreconditionError("time reparametrization needs a McGehee trajectory")
    r = traj.states[:, 0]
    if np.any(r <= 0):
        raise PreconditionError("reparametrization requires r > 0 along the trajectory")
    e = 1 - bs.l / 2
    w = r ** e
    dw = e * w * traj.nu
    tau = traj.times
    h = np.diff(tau)
    inc = 0.5 * h * (w[:-1] + w[1:]) - h * h / 12 * (dw[1:] - dw[:-1])
    t = np.concatenate([[0.0], np.cumsum(inc)])
    return np.column_stack([t, tau])


def escape_time(
    sys: LagrangianSystem,
    s0: PhaseState,
    r_B: float,
    cfg: IntegratorConfig = IntegratorConfig(),
) -> float | None:
    """First time with ``|x(t)| >= r_B``, or ``None`` if the run times out."""
    if not sys.energy(s0) < 0:
        raise PreconditionError("escape time is defined for subcritical starts (H < 0) only")
    if not np.linalg.norm(s0.x) < r_B < sys.radius:
        raise PreconditionError("need |x0| < r_B < domain radius")
    n = sys.n
    ev = Event(lambda t, y: np.linalg.norm(y[:n]) - r_B, name="escape", terminal=True, direction=1)
    traj = integrate_original(sys, s0, cfg, events=[ev])
    for name, t, _ in traj.events:
        if name == "escape":
            return float(t)
    return None
