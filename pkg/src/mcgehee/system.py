"""Electromagnetic Lagrangian systems and their Euler-Lagrange flow.

Coordinates are centred at the equilibrium: the potential germ vanishes
together with its gradient at the origin and the metric is the identity
there.  ``L = g(v, v)/2 + A(x).v - U(x)`` on the ball of radius ``radius``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .germ import JET_TOL, AnalyticGerm, PolyBundle, first_nonzero_jet, second_nonzero_jet

__all__ = [
    "ValidationError",
    "DomainError",
    "MetricField",
    "MagneticPotential",
    "LagrangianSystem",
    "PhaseState",
    "SystemReport",
]


class ValidationError(ValueError):
    """A standing assumption on the system does not hold."""


class DomainError(ValueError):
    """A state left the coordinate ball on which the germs are trusted."""


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))
        if self.x.shape != self.v.shape:
            raise ValueError("position and velocity have different lengths")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])

    @classmethod
    def from_array(cls, z, n: int) -> "PhaseState":
        z = np.asarray(z, dtype=float)
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class MetricField:
    dim: int
    gij: tuple[tuple[AnalyticGerm, ...], ...]

    @classmethod
    def euclidean(cls, dim: int) -> "MetricField":
        one = AnalyticGerm.constant(dim, 1.0)
        zero = AnalyticGerm.zero(dim)
        return cls(dim, tuple(tuple(one if i == j else zero for j in range(dim)) for i in range(dim)))

    @classmethod
    def from_matrix(cls, entries: Sequence[Sequence[AnalyticGerm]]) -> "MetricField":
        dim = len(entries)
        if any(len(row) != dim for row in entries):
            raise ValidationError("metric must be a square matrix of germs")
        return cls(dim, tuple(tuple(row) for row in entries))

    def correction(self) -> list[list[AnalyticGerm]]:
        """``g_ab - delta_ab`` entrywise."""
        return [
            [self.gij[a][b] - (1.0 if a == b else 0.0) for b in range(self.dim)]
            for a in range(self.dim)
        ]

    @cached_property
    def is_euclidean(self) -> bool:
        return all(c.is_zero() for row in self.correction() for c in row)

    def leading_degree(self) -> float:
        """First degree present in ``g - I``; infinity for the flat metric."""
        return min(c.min_degree() for row in self.correction() for c in row)

    def leading_part(self, m: int) -> list[list[AnalyticGerm]]:
        return [[c.homogeneous_part(m) for c in row] for row in self.correction()]


@dataclass(frozen=True)
class MagneticPotential:
    dim: int
    A: tuple[AnalyticGerm, ...]

    @classmethod
    def zero(cls, dim: int) -> "MagneticPotential":
        return cls(dim, tuple(AnalyticGerm.zero(dim) for _ in range(dim)))

    @cached_property
    def is_zero(self) -> bool:
        return all(a.is_zero() for a in self.A)

    def jet_degree(self, tol: float = JET_TOL) -> float:
        return min(a.min_degree(tol) for a in self.A)

    def field_strength(self) -> list[list[AnalyticGerm]]:
        """``F_ab = d_a A_b - d_b A_a`` as germs."""
        n = self.dim
        return [[self.A[b].derivative(a) - self.A[a].derivative(b) for b in range(n)] for a in range(n)]


@dataclass(frozen=True)
class SystemReport:
    l: int
    l2: float
    d: float
    Delta: float
    m: float
    mu: float
    weak_magnetism: bool
    weak_magnetism_II: bool

    def lines(self) -> list[str]:
        fmt = lambda v: "inf" if v == math.inf else (f"{v:g}" if isinstance(v, float) else str(v))
        return [
            f"l = {self.l}",
            f"l2 = {fmt(self.l2)}",
            f"d = {fmt(self.d)}",
            f"Delta = {fmt(self.Delta)}",
            f"m = {fmt(self.m)}",
            f"mu = {fmt(self.mu)}",
            f"weak magnetism (Delta >= 1): {self.weak_magnetism}",
            f"weak magnetism II (Delta > mu): {self.weak_magnetism_II}",
        ]


@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    potential: AnalyticGerm
    metric: MetricField | None = None
    magnetic: MagneticPotential | None = None
    radius: float = 1.0
    name: str = ""

    def __post_init__(self):
        n = self.potential.dim
        if self.metric is None:
            object.__setattr__(self, "metric", MetricField.euclidean(n))
        if self.magnetic is None:
            object.__setattr__(self, "magnetic", MagneticPotential.zero(n))
        if self.metric.dim != n or self.magnetic.dim != n:
            raise ValidationError("potential, metric and magnetic potential have different dimensions")
        if not self.radius > 0:
            raise ValidationError("domain radius must be positive")

    @property
    def n(self) -> int:
        return self.potential.dim

    # ------------------------------------------------------------------
    def validate(self, samples: int = 64, seed: int = 0) -> SystemReport:
        """Check the standing assumptions and return the jet degrees."""
        U, n = self.potential, self.n
        if U.is_zero(JET_TOL):
            raise ValidationError("potential germ is zero")
        if abs(U.terms.get((0,) * n, 0.0)) > JET_TOL:
            raise ValidationError("potential not zero at p")
        if any(abs(c) > JET_TOL for a, c in U.terms.items() if sum(a) == 1):
            raise ValidationError("p is not a critical point of the potential")
        g = self.metric.gij
        for a in range(n):
            for b in range(a + 1, n):
                if g[a][b] != g[b][a]:
                    raise ValidationError(f"metric not symmetric: g[{a}][{b}] != g[{b}][{a}]")
        for a in range(n):
            for b in range(n):
                want = 1.0 if a == b else 0.0
                if abs(g[a][b].terms.get((0,) * n, 0.0) - want) > JET_TOL:
                    raise ValidationError("metric is not the identity at p")
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            x = rng.normal(size=n)
            x *= self.radius * rng.uniform() ** (1.0 / n) / np.linalg.norm(x)
            if np.linalg.eigvalsh(self.metric_at(x)).min() <= 0:
                raise ValidationError(f"metric not positive definite at {x.tolist()}")
        return self.report

    @cached_property
    def report(self) -> SystemReport:
        l, _ = first_nonzero_jet(self.potential)
        if l < 2:
            raise ValidationError("first non-zero jet has degree below 2")
        second = second_nonzero_jet(self.potential)
        l2 = second[0] if second else math.inf
        d = self.magnetic.jet_degree()
        Delta = d - l / 2
        m = self.metric.leading_degree()
        mu = min(l2 - l, m)
        return SystemReport(
            l=l,
            l2=l2,
            d=d,
            Delta=Delta,
            m=m,
            mu=mu,
            weak_magnetism=Delta >= 1,
            weak_magnetism_II=bool(mu < math.inf and Delta > mu),
        )

    # compiled pieces ---------------------------------------------------
    @cached_property
    def _grad_U(self) -> PolyBundle:
        return PolyBundle(self.potential.gradient(), self.n)

    @cached_property
    def _U(self) -> PolyBundle:
        return PolyBundle([self.potential], self.n)

    @cached_property
    def _g(self) -> PolyBundle:
        return PolyBundle([e for row in self.metric.gij for e in row], self.n)

    @cached_property
    def _dg(self) -> PolyBundle:
        # row index c*n*n + a*n + b holds d_c g_ab
        n = self.n
        return PolyBundle([self.metric.gij[a][b].derivative(c) for c in range(n) for a in range(n) for b in range(n)], n)

    @cached_property
    def _F(self) -> PolyBundle:
        return PolyBundle([e for row in self.magnetic.field_strength() for e in row], self.n)

    # pointwise geometry -----------------------------------------------
    def _check_domain(self, x: np.ndarray):
        if not np.linalg.norm(x) < self.radius:
            raise DomainError(f"|x| = {np.linalg.norm(x):.6g} outside the ball of radius {self.radius}")

    def metric_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.metric.is_euclidean:
            return np.eye(self.n)
        return self._g(x).reshape(self.n, self.n)

    def metric_inverse(self, x) -> np.ndarray:
        if self.metric.is_euclidean:
            return np.eye(self.n)
        G = self.metric_at(x)
        try:
            return np.linalg.solve(G, np.eye(self.n))
        except np.linalg.LinAlgError as exc:
            raise DomainError(f"metric singular at {np.asarray(x).tolist()}") from exc

    def christoffel(self, x, check: bool = True) -> np.ndarray:
        """``Gamma[k, i, j]`` at ``x``."""
        x = np.asarray(x, dtype=float)
        n = self.n
        if check:
            self._check_domain(x)
        if self.metric.is_euclidean:
            return np.zeros((n, n, n))
        dg = self._dg(x).reshape(n, n, n)  # dg[c, a, b] = d_c g_ab
        lower = 0.5 * (dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg)  # [a, i, j]
        return np.einsum("ka,aij->kij", self.metric_inverse(x), lower)

    def field_strength_at(self, x) -> np.ndarray:
        if self.magnetic.is_zero:
            return np.zeros((self.n, self.n))
        return self._F(np.asarray(x, dtype=float)).reshape(self.n, self.n)

    def grad_potential(self, x) -> np.ndarray:
        return self._grad_U(np.asarray(x, dtype=float))

    def potential_at(self, x) -> float:
        return float(self._U(np.asarray(x, dtype=float))[0])

    # flow -----------------------------------------------------------------
    def acceleration(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        self._check_domain(x)
        gradU = self.grad_potential(x)
        if self.metric.is_euclidean:
            acc = -gradU
            if not self.magnetic.is_zero:
                acc = acc + self.field_strength_at(x) @ v
            return acc
        ginv = self.metric_inverse(x)
        force = -gradU
        if not self.magnetic.is_zero:
            force = force + self.field_strength_at(x) @ v
        gamma = self.christoffel(x, check=False)
        return ginv @ force - np.einsum("kij,i,j->k", gamma, v, v)

    def original_field(self, s: PhaseState) -> tuple[np.ndarray, np.ndarray]:
        """Right-hand side ``(xdot, vdot)`` of the Euler-Lagrange flow."""
        return s.v.copy(), self.acceleration(s.x, s.v)

    def field_array(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        return np.concatenate([z[n:], self.acceleration(z[:n], z[n:])])

    def energy(self, s: PhaseState) -> float:
        return self.energy_array(s.as_array())

    def energy_array(self, z: np.ndarray) -> float:
        n = self.n
        x, v = z[:n], z[n:]
        if self.metric.is_euclidean:
            kin = 0.5 * float(v @ v)
        else:
            kin = 0.5 * float(v @ self.metric_at(x) @ v)
        return kin + self.potential_at(x)

