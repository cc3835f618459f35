"""Truncated multivariate power series graded by homogeneous degree.

A germ is stored as a sparse map from exponent multi-indices to real
coefficients together with a truncation order: every degree above
``trunc`` is unknown and treated as absent.  Zero coefficients are never
stored, so two germs with the same terms compare equal.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "JET_TOL",
    "NoJetError",
    "AnalyticGerm",
    "HomogeneousPoly",
    "RadialSplit",
    "PolyBundle",
    "first_nonzero_jet",
    "second_nonzero_jet",
    "radial_split",
    "parse_germ",
]

#: coefficients at or below this magnitude are ignored when detecting jets
JET_TOL = 1e-12

Exponent = tuple[int, ...]


class NoJetError(ValueError):
    """Raised when a jet is requested from the zero germ."""


def _canonical(dim: int, terms: Mapping[Sequence[int], float]) -> dict[Exponent, float]:
    out: dict[Exponent, float] = {}
    for alpha, c in terms.items():
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != dim:
            raise ValueError(f"multi-index {alpha} does not have length {dim}")
        if any(a < 0 for a in alpha):
            raise ValueError(f"negative exponent in {alpha}")
        c = float(c)
        if not math.isfinite(c):
            raise ValueError(f"non-finite coefficient for {alpha}")
        out[alpha] = out.get(alpha, 0.0) + c
    return {a: c for a, c in sorted(out.items()) if c != 0.0}


@dataclass(frozen=True, eq=False)
class AnalyticGerm:
    """Sparse truncated power series in ``dim`` variables."""

    dim: int
    terms: Mapping[Exponent, float] = field(default_factory=dict)
    trunc: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        terms = _canonical(self.dim, self.terms)
        top = max((sum(a) for a in terms), default=0)
        trunc = top if self.trunc is None else int(self.trunc)
        if top > trunc:
            raise ValueError(f"term of degree {top} exceeds truncation order {trunc}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "trunc", trunc)

    # construction -----------------------------------------------------
    @classmethod
    def zero(cls, dim: int, trunc: int = 0) -> "AnalyticGerm":
        return cls(dim, {}, trunc)

    @classmethod
    def constant(cls, dim: int, value: float, trunc: int = 0) -> "AnalyticGerm":
        return cls(dim, {(0,) * dim: value}, trunc)

    @classmethod
    def monomial(cls, dim: int, alpha: Sequence[int], coeff: float = 1.0) -> "AnalyticGerm":
        return cls(dim, {tuple(alpha): coeff})

    @classmethod
    def from_records(cls, dim: int, records: Iterable[Mapping], trunc: int | None = None):
        """Build from ``[{"exponents": [...], "coeff": c}, ...]``."""
        terms: dict[Exponent, float] = {}
        for rec in records:
            alpha = tuple(int(e) for e in rec["exponents"])
            if len(alpha) != dim:
                raise ValueError(f"record {rec!r} does not have {dim} exponents")
            terms[alpha] = terms.get(alpha, 0.0) + float(rec["coeff"])
        return cls(dim, terms, trunc)

    def to_records(self) -> list[dict]:
        return [{"exponents": list(a), "coeff": c} for a, c in self.terms.items()]

    # inspection -------------------------------------------------------
    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def degrees(self, tol: float = 0.0) -> list[int]:
        return sorted({sum(a) for a, c in self.terms.items() if abs(c) > tol})

    def homogeneous_part(self, degree: int) -> "HomogeneousPoly":
        return HomogeneousPoly(
            self.dim, {a: c for a, c in self.terms.items() if sum(a) == degree}, degree
        )

    def min_degree(self, tol: float = 0.0) -> float:
        degs = self.degrees(tol)
        return degs[0] if degs else math.inf

    def __eq__(self, other):
        if not isinstance(other, AnalyticGerm):
            return NotImplemented
        return self.dim == other.dim and self.trunc == other.trunc and self.terms == other.terms

    def __hash__(self):
        return hash((self.dim, self.trunc, tuple(self.terms.items())))

    # arithmetic -------------------------------------------------------
    def _combine(self, other: "AnalyticGerm", sign: float) -> "AnalyticGerm":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        # a germ without terms is an exact zero and does not lower the order
        if not other.terms:
            return self
        if not self.terms:
            return other.scale(sign)
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0.0) + sign * c
        return AnalyticGerm(self.dim, terms, min(self.trunc, other.trunc))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = AnalyticGerm.constant(self.dim, other, self.trunc)
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = AnalyticGerm.constant(self.dim, other, self.trunc)
        return self._combine(other, -1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c: float) -> "AnalyticGerm":
        return AnalyticGerm(self.dim, {a: c * v for a, v in self.terms.items()}, self.trunc)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        # a product is known up to min(t1 + v2, t2 + v1), v = lowest degree present
        v1 = self.min_degree() if self.terms else self.trunc + 1
        v2 = other.min_degree() if other.terms else other.trunc + 1
        trunc = int(min(self.trunc + v2, other.trunc + v1))
        terms: dict[Exponent, float] = {}
        for a, c in self.terms.items():
            for b, d in other.terms.items():
                ab = tuple(x + y for x, y in zip(a, b))
                if sum(ab) <= trunc:
                    terms[ab] = terms.get(ab, 0.0) + c * d
        return AnalyticGerm(self.dim, terms, trunc)

    __rmul__ = __mul__

    # calculus ---------------------------------------------------------
    def derivative(self, i: int) -> "AnalyticGerm":
        terms: dict[Exponent, float] = {}
        for a, c in self.terms.items():
            if a[i] == 0:
                continue
            b = list(a)
            b[i] -= 1
            terms[tuple(b)] = c * a[i]
        return AnalyticGerm(self.dim, terms, max(self.trunc - 1, 0))

    def gradient(self) -> list["AnalyticGerm"]:
        return [self.derivative(i) for i in range(self.dim)]

    def hessian(self) -> list[list["AnalyticGerm"]]:
        grad = self.gradient()
        return [[gi.derivative(j) for j in range(self.dim)] for gi in grad]

    # evaluation -------------------------------------------------------
    def __call__(self, x) -> float:
        return self.evaluate(x)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"point has length {x.size}, germ has dimension {self.dim}")
        total = 0.0
        for a, c in self.terms.items():
            total += c * float(np.prod(x ** np.asarray(a)))
        return total

    # printing ---------------------------------------------------------
    def format(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for a, c in self.terms.items():
            mono = "*".join(
                f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(a) if e
            )
            parts.append(f"{c!r}*{mono}" if mono else f"{c!r}")
        return " + ".join(parts)

    def __str__(self):
        return self.format()

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, trunc={self.trunc}, {self.format()})"


class HomogeneousPoly(AnalyticGerm):
    """A germ whose terms all have total degree ``degree``."""

    def __init__(self, dim: int, terms: Mapping[Exponent, float], degree: int):
        super().__init__(dim, terms, degree)
        bad = [a for a in self.terms if sum(a) != degree]
        if bad:
            raise ValueError(f"terms {bad} are not of degree {degree}")

    @property
    def degree(self) -> int:
        return self.trunc

    def euler_defect(self, x) -> float:
        """``<grad P(x), x> - degree * P(x)``; zero for homogeneous P."""
        x = np.asarray(x, dtype=float)
        g = np.array([d.evaluate(x) for d in self.gradient()])
        return float(g @ x - self.degree * self.evaluate(x))


def _jets(g: AnalyticGerm, tol: float) -> list[tuple[int, HomogeneousPoly]]:
    out = []
    for k in g.degrees():
        part = g.homogeneous_part(k)
        if any(abs(c) > tol for c in part.terms.values()):
            out.append((k, part))
    return out


def first_nonzero_jet(g: AnalyticGerm, tol: float = JET_TOL) -> tuple[int, HomogeneousPoly]:
    jets = _jets(g, tol)
    if not jets:
        raise NoJetError("germ is zero up to its truncation order")
    return jets[0]


def second_nonzero_jet(g: AnalyticGerm, tol: float = JET_TOL) -> tuple[int, HomogeneousPoly] | None:
    jets = _jets(g, tol)
    if not jets:
        raise NoJetError("germ is zero up to its truncation order")
    return jets[1] if len(jets) > 1 else None


@dataclass(frozen=True)
class RadialSplit:
    """``w(rq) = r^d w_d(q) + r^(d+1) w_tail(r, q)``.

    ``tail[j-1]`` is the degree ``d+j`` homogeneous part of ``w``, so the
    tail function is ``sum_j r^(j-1) tail[j-1](q)``.
    """

    degree: int
    base: HomogeneousPoly
    tail: tuple[HomogeneousPoly, ...]

    def tail_value(self, r: float, q) -> float:
        return sum(r ** j * p.evaluate(q) for j, p in enumerate(self.tail))

    def reassemble(self, r: float, q) -> float:
        return r ** self.degree * self.base.evaluate(q) + r ** (self.degree + 1) * self.tail_value(r, q)


def radial_split(g: AnalyticGerm, tol: float = JET_TOL) -> RadialSplit:
    d, base = first_nonzero_jet(g, tol)
    tail = tuple(g.homogeneous_part(k) for k in range(d + 1, g.trunc + 1))
    return RadialSplit(d, base, tail)


_TERM_RE = re.compile(r"x(\d+)(?:\^(\d+))?")


def parse_germ(text: str, dim: int, trunc: int | None = None) -> AnalyticGerm:
    """Inverse of :meth:`AnalyticGerm.format`.

    Accepts sums and differences of ``coeff*x1^a*x2^b`` terms; a bare
    monomial has coefficient one.
    """
    text = text.strip()
    if text == "0":
        return AnalyticGerm.zero(dim, trunc or 0)
    terms: dict[Exponent, float] = {}
    # binary minus becomes "+ -"; exponent signs like 1e-05 are not spaced
    text = re.sub(r"\s-\s+", " + -", text)
    if text.startswith("+ "):
        text = text[2:]
    for chunk in re.split(r"\s\+\s", text):
        chunk = chunk.strip()
        coeff = 1.0
        alpha = [0] * dim
        for factor in chunk.split("*"):
            factor = factor.strip()
            m = _TERM_RE.fullmatch(factor)
            if m:
                i = int(m.group(1)) - 1
                if not 0 <= i < dim:
                    raise ValueError(f"variable x{i + 1} out of range for dimension {dim}")
                alpha[i] += int(m.group(2) or 1)
            elif factor.startswith("-x"):
                coeff = -coeff
                m = _TERM_RE.fullmatch(factor[1:])
                if not m:
                    raise ValueError(f"cannot parse factor {factor!r}")
                alpha[int(m.group(1)) - 1] += int(m.group(2) or 1)
            else:
                coeff *= float(factor)
        a = tuple(alpha)
        terms[a] = terms.get(a, 0.0) + coeff
    return AnalyticGerm(dim, terms, trunc)


class PolyBundle:
    """Several germs in the same variables compiled for fast evaluation.

    All monomials are collected once; a bundle evaluation is then one
    matrix-vector product.  ``radial`` evaluates the shifted radial tail
    ``sum_a c_a q^a r^(|a| - shift)`` which is how the blown-up field
    avoids dividing by ``r``.
    """

    def __init__(self, germs: Sequence[AnalyticGerm], dim: int | None = None):
        if dim is None:
            if not germs:
                raise ValueError("empty bundle needs an explicit dimension")
            dim = germs[0].dim
        monos = sorted({a for g in germs for a in g.terms})
        index = {a: k for k, a in enumerate(monos)}
        self.dim = dim
        self.size = len(germs)
        self.exps = np.array(monos, dtype=np.int64).reshape(len(monos), dim)
        self.degs = self.exps.sum(axis=1)
        self.coefs = np.zeros((len(germs), len(monos)))
        for i, g in enumerate(germs):
            if g.dim != dim:
                raise ValueError("dimension mismatch in bundle")
            for a, c in g.terms.items():
                self.coefs[i, index[a]] = c
        self._maxexp = int(self.exps.max()) if self.exps.size else 0
        self._cols = np.arange(dim)

    def _monomials(self, x: np.ndarray) -> np.ndarray:
        # power table avoids repeated float pow
        table = np.ones((self._maxexp + 1, self.dim))
        for k in range(1, self._maxexp + 1):
            table[k] = table[k - 1] * x
        return table[self.exps, self._cols].prod(axis=1)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.exps.size:
            return np.zeros(self.size)
        return self.coefs @ self._monomials(x)

    def radial(self, r: float, q, shift: int) -> np.ndarray:
        if not self.exps.size:
            return np.zeros(self.size)
        powers = self.degs - shift
        mask = self.coefs[:, powers < 0]
        if mask.size and np.any(mask != 0.0):
            raise ValueError(f"bundle has terms of degree below the radial shift {shift}")
        mono = self._monomials(np.asarray(q, dtype=float))
        rp = np.where(powers >= 0, float(r) ** np.maximum(powers, 0), 0.0)
        return self.coefs @ (mono * rp)
