"""Ready-made systems used in examples, the CLI and the test-suite."""
from __future__ import annotations

import math

from .germ import AnalyticGerm
from .system import LagrangianSystem, MagneticPotential, MetricField

__all__ = ["pendulum", "plane", "polynomial", "PRESETS", "preset"]


def pendulum(order: int = 40, radius: float = 7.0) -> LagrangianSystem:
    """``U = cos x - 1`` at the upright position, Taylor-truncated at ``order``.

    The default ball reaches past ``2 pi`` so full librations and both
    separatrix loops fit inside.
    """
    terms = {(2 * k,): (-1) ** k / math.factorial(2 * k) for k in range(1, order // 2 + 1)}
    return LagrangianSystem(AnalyticGerm(1, terms, order), radius=radius, name="pendulum")


def plane(a: float, b: float, radius: float = 1.0) -> LagrangianSystem:
    """Quadratic potential ``a x1^2 + b x2^2``."""
    return LagrangianSystem(AnalyticGerm(2, {(2, 0): a, (0, 2): b}), radius=radius, name=f"plane({a:g},{b:g})")


def polynomial(dim: int, terms: dict, radius: float = 1.0, name: str = "", metric=None, magnetic=None) -> LagrangianSystem:
    return LagrangianSystem(AnalyticGerm(dim, terms), metric=metric, magnetic=magnetic, radius=radius, name=name)


def quartic_saddle(radius: float = 1.0) -> LagrangianSystem:
    """``x2^2 - x1^4``: zero is a critical value of ``f``; decided by the criterion function."""
    return polynomial(2, {(0, 2): 1.0, (4, 0): -1.0}, radius, "quartic-saddle")


def cubic(radius: float = 1.0) -> LagrangianSystem:
    """``x2^2 + x1^3``: neither criterion decides."""
    return polynomial(2, {(0, 2): 1.0, (3, 0): 1.0}, radius, "cubic")


def monkey_saddle(radius: float = 1.0) -> LagrangianSystem:
    """``x1^3 - 3 x1 x2^2`` (odd leading degree)."""
    return polynomial(2, {(3, 0): 1.0, (1, 2): -3.0}, radius, "monkey-saddle")


def magnetic_quartic_saddle(radius: float = 1.0) -> LagrangianSystem:
    """``x2^2 - x1^4`` with ``A = x1 x2 dx1 - x1^2 dx2`` (jet degree 2, so Delta = 1 <= mu = 2)."""
    A = MagneticPotential(2, (AnalyticGerm(2, {(1, 1): 1.0}), AnalyticGerm(2, {(2, 0): -1.0})))
    return polynomial(2, {(0, 2): 1.0, (4, 0): -1.0}, radius, "magnetic-quartic-saddle", magnetic=A)


def conformal_plane(radius: float = 0.5) -> LagrangianSystem:
    """``-x1^2 + x2^2`` with metric ``(1 + x1) I``."""
    one_plus = AnalyticGerm(2, {(0, 0): 1.0, (1, 0): 1.0})
    zero = AnalyticGerm.zero(2)
    return polynomial(2, {(2, 0): -1.0, (0, 2): 1.0}, radius, "conformal-plane",
                      metric=MetricField.from_matrix([[one_plus, zero], [zero, one_plus]]))


PRESETS = {
    "pendulum": pendulum,
    "quartic-saddle": quartic_saddle,
    "cubic": cubic,
    "monkey-saddle": monkey_saddle,
    "magnetic-quartic-saddle": magnetic_quartic_saddle,
    "conformal-plane": conformal_plane,
}


def preset(name: str, **kw) -> LagrangianSystem:
    if name == "plane":
        return plane(**kw)
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS) + ['plane']}") from None
