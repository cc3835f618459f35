"""McGehee coordinates and the blown-up vector field.

With ``l`` the degree of the first non-zero jet of the potential,

    x = r q,   v = r^(l/2) y,   |q| = 1,

and time rescaled by ``dtau = r^(l/2 - 1) dt``.  The resulting field
extends to ``r = 0`` (and to ``r < 0``).  Every correction term is
assembled from radial tails of the germs, i.e. ``w(rq) = r^d w_d(q) +
r^(d+1) w_tail(r, q)`` evaluated termwise, so nothing is ever divided by
``r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .germ import PolyBundle
from .system import DomainError, LagrangianSystem, PhaseState

__all__ = [
    "BlowupPointError",
    "HypothesisError",
    "McGeheeState",
    "BlownSystem",
    "to_mcgehee",
    "from_mcgehee",
    "boundary_energy_ode_residual",
]


class BlowupPointError(ValueError):
    """The equilibrium itself has no McGehee coordinates."""


class HypothesisError(ValueError):
    """A magnetism or jet hypothesis required by an operation fails."""


@dataclass(frozen=True)
class McGeheeState:
    r: float
    q: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))

    @property
    def nu(self) -> float:
        return float(self.q @ self.y)

    @property
    def y_tg(self) -> np.ndarray:
        return self.y - self.nu * self.q

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.r], self.q, self.y])

    @classmethod
    def from_array(cls, z, n: int) -> "McGeheeState":
        z = np.asarray(z, dtype=float)
        return cls(z[0], z[1 : n + 1], z[n + 1 :])


def to_mcgehee(sys: LagrangianSystem, s: PhaseState) -> McGeheeState:
    r = float(np.linalg.norm(s.x))
    if r == 0.0:
        raise BlowupPointError("x = 0 is blown up to the whole boundary sphere bundle")
    l = sys.report.l
    return McGeheeState(r, s.x / r, s.v / r ** (l / 2))


def from_mcgehee(sys: LagrangianSystem, z: McGeheeState) -> PhaseState:
    if z.r < 0:
        raise ValueError("negative radius lies on the extended manifold only")
    l = sys.report.l
    if z.r == 0.0:
        return PhaseState(np.zeros_like(z.q), np.zeros_like(z.y))
    return PhaseState(z.r * z.q, z.r ** (l / 2) * z.y)


class BlownSystem:
    """The McGehee vector field and rescaled energy of a Lagrangian system."""

    def __init__(self, sys: LagrangianSystem):
        rep = sys.validate()
        if rep.Delta <= 0:
            raise HypothesisError(
                f"magnetic jet degree d={rep.d:g} gives Delta={rep.Delta:g} <= 0; the blown-up field is singular"
            )
        self.sys = sys
        self.n = sys.n
        self.l = rep.l
        self.Delta = rep.Delta
        n, l = self.n, self.l
        U = sys.potential
        self.U_l = U.homogeneous_part(l)
        grad = U.gradient()
        self._grad_Ul = PolyBundle(self.U_l.gradient(), n)
        self._hess_Ul = PolyBundle([h for row in self.U_l.hessian() for h in row], n)
        self._Ul = PolyBundle([self.U_l], n)
        # V_tail: grad U(rq) = r^(l-1) grad U_l(q) + r^l V(r, q)
        self._V = PolyBundle([_higher(g, l) for g in grad], n)
        # u_tail: U(rq) = r^l U_l(q) + r^(l+1) u(r, q)
        self._u = PolyBundle([_higher(U, l + 1)], n)
        self.euclidean = sys.metric.is_euclidean
        # h_ab: g_ab(rq) = delta_ab + r h_ab(r, q)
        self._h = PolyBundle([e for row in sys.metric.correction() for e in row], n)
        self.magnetic = not sys.magnetic.is_zero and math.isfinite(rep.d)
        if self.magnetic:
            d = int(rep.d)
            # F_ab(rq) = r^(d-1) F_tail(r, q)
            self._Ftail = PolyBundle([e for row in sys.magnetic.field_strength() for e in row], n)
            self._Fshift = d - 1
            self._Delta_integer = float(self.Delta).is_integer()

    # pieces -----------------------------------------------------------------
    def grad_Ul(self, q) -> np.ndarray:
        return self._grad_Ul(q)

    def hess_Ul(self, q) -> np.ndarray:
        return self._hess_Ul(q).reshape(self.n, self.n)

    def Ul(self, q) -> float:
        return float(self._Ul(q)[0])

    def _check(self, r: float):
        if not abs(r) < self.sys.radius:
            raise DomainError(f"|r| = {abs(r):.6g} outside the domain radius {self.sys.radius}")

    def _metric_parts(self, r: float, q: np.ndarray):
        """Return ``(g^{-1}(rq), h_lower(r,q), h^upper(r,q))``."""
        n = self.n
        h = self._h.radial(r, q, 1).reshape(n, n)
        G = np.eye(n) + r * h
        ginv = np.linalg.solve(G, np.eye(n))
        # g^{-1} - I = -g^{-1} (g - I) = r * (-g^{-1} h)
        return ginv, h, -ginv @ h

    def _rpow_Delta(self, r: float) -> float:
        if self._Delta_integer:
            return r ** int(self.Delta)
        return abs(r) ** self.Delta

    def corrections(self, z: McGeheeState) -> tuple[np.ndarray, np.ndarray, float]:
        """``(F_X, bold F_X, F_H)`` at ``z``."""
        r, q, y = z.r, z.q, z.y
        n = self.n
        V = self._V.radial(r, q, self.l)
        u = float(self._u.radial(r, q, self.l + 1)[0])
        if self.euclidean:
            FX = -V
            FH = u
            ginv = None
        else:
            ginv, h, h_up = self._metric_parts(r, q)
            gamma = self.sys.christoffel(r * q, check=False)
            FX = -ginv @ V - h_up @ self._grad_Ul(q) - np.einsum("kij,i,j->k", gamma, y, y)
            FH = u + 0.5 * float(y @ h @ y)
        if self.magnetic:
            Ft = self._Ftail.radial(r, q, self._Fshift).reshape(n, n)
            bold = Ft @ y if ginv is None else ginv @ (Ft @ y)
        else:
            bold = np.zeros(n)
        return FX, bold, FH

    # public operations ------------------------------------------------------
    def field_array(self, zeta: np.ndarray) -> np.ndarray:
        n, l = self.n, self.l
        r = float(zeta[0])
        q = zeta[1 : n + 1]
        y = zeta[n + 1 :]
        self._check(r)
        nu = float(q @ y)
        dy = -self._grad_Ul(q) - 0.5 * l * nu * y
        if r != 0.0 or self.magnetic:
            FX, bold, _ = self.corrections(McGeheeState(r, q, y))
            dy = dy + r * FX
            if self.magnetic:
                dy = dy + self._rpow_Delta(r) * bold
        out = np.empty_like(zeta)
        out[0] = nu * r
        out[1 : n + 1] = y - nu * q
        out[n + 1 :] = dy
        return out

    def blown_field(self, z: McGeheeState) -> McGeheeState:
        """``(r', q', y')`` packed as a state-shaped triple."""
        out = self.field_array(z.as_array())
        return McGeheeState.from_array(out, self.n)

    def energy_array(self, zeta: np.ndarray) -> float:
        n = self.n
        r = float(zeta[0])
        q = zeta[1 : n + 1]
        y = zeta[n + 1 :]
        base = 0.5 * float(y @ y) + self.Ul(q)
        if r == 0.0:
            return base
        if self.euclidean:
            FH = float(self._u.radial(r, q, self.l + 1)[0])
        else:
            FH = self.corrections(McGeheeState(r, q, y))[2]
        return base + r * FH

    def rescaled_energy(self, z: McGeheeState) -> float:
        self._check(z.r)
        return self.energy_array(z.as_array())

    def nu_derivative(self, z: McGeheeState) -> float:
        """Derivative of ``nu = <q, y>`` along the McGehee flow."""
        self._check(z.r)
        r, q, y, l = z.r, z.q, z.y, self.l
        nu = float(q @ y)
        val = (1 + l / 2) * (float(y @ y) - nu ** 2) - l * self.rescaled_energy(z)
        if r != 0.0 or self.magnetic:
            FX, bold, FH = self.corrections(z)
            val += r * (float(q @ FX) + l * FH)
            if self.magnetic:
                val += self._rpow_Delta(r) * float(q @ bold)
        return val

    def pushforward_field(self, z: McGeheeState) -> np.ndarray:
        """``r^(1 - l/2) X(pi(z))`` in phase coordinates, for ``r > 0``."""
        s = from_mcgehee(self.sys, z)
        xd, vd = self.sys.original_field(s)
        return z.r ** (1 - self.l / 2) * np.concatenate([xd, vd])

    # convenience ------------------------------------------------------------
    def state(self, r: float, q, y) -> McGeheeState:
        return McGeheeState(r, q, y)

    def to_mcgehee(self, s: PhaseState) -> McGeheeState:
        return to_mcgehee(self.sys, s)

    def from_mcgehee(self, z: McGeheeState) -> PhaseState:
        return from_mcgehee(self.sys, z)


def _higher(g, shift: int):
    from .germ import AnalyticGerm

    return AnalyticGerm(g.dim, {a: c for a, c in g.terms.items() if sum(a) >= shift}, max(g.trunc, shift))


def boundary_energy_ode_residual(bs: BlownSystem, traj) -> float:
    """Max of ``|dH~/dtau + l nu H~|`` over a boundary trajectory.

    The derivative is a finite difference of the recorded energies:
    fourth-order central differences on uniformly spaced samples,
    second-order ``np.gradient`` otherwise.
    """
    r = traj.states[:, 0]
    if np.max(np.abs(r)) > 1e-12:
        raise ValueError("trajectory is not contained in the boundary r = 0")
    t = traj.times
    H = traj.energy
    nu = traj.nu
    dt = np.diff(t)
    if len(t) < 5:
        raise ValueError("need at least five samples")
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        h = dt[0]
        dH = (H[:-4] - 8 * H[1:-3] + 8 * H[3:-1] - H[4:]) / (12 * h)
        sl = slice(2, -2)
    else:
        dH = np.gradient(H, t, edge_order=2)
        sl = slice(None)
    return float(np.max(np.abs(dH + bs.l * nu[sl] * H[sl])))
