"""Exact sparse polynomials in three Cartesian variables.

Coefficients are kept as :class:`fractions.Fraction` while fields are being
built, so divergence and boundary tangency hold exactly before the final
conversion to floating point.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb, factorial
from typing import Dict, Iterable, Tuple

import numpy as np

Exponent = Tuple[int, int, int]


class Polynomial:
    """Sparse polynomial ``sum c * x**i * y**j * z**k``."""

    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Exponent, Fraction] | None = None):
        self.terms: Dict[Exponent, Fraction] = {}
        if terms:
            for e, c in terms.items():
                if c != 0:
                    self.terms[tuple(e)] = Fraction(c)

    @classmethod
    def constant(cls, c) -> "Polynomial":
        return cls({(0, 0, 0): Fraction(c)})

    @classmethod
    def coordinate(cls, axis: int) -> "Polynomial":
        e = [0, 0, 0]
        e[axis] = 1
        return cls({tuple(e): Fraction(1)})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other) -> "Polynomial":
        other = _as_poly(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "Polynomial":
        return _as_poly(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = _as_poly(other)
        out: Dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2])
                out[e] = out.get(e, 0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        out = Polynomial.constant(1)
        for _ in range(n):
            out = out * self
        return out

    def diff(self, axis: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[axis] == 0:
                continue
            d = list(e)
            d[axis] -= 1
            out[tuple(d)] = c * e[axis]
        return Polynomial(out)

    def laplacian(self) -> "Polynomial":
        return sum((self.diff(a).diff(a) for a in range(3)), Polynomial())

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for (i, j, k), c in self.terms.items():
            out += float(c) * pts[:, 0] ** i * pts[:, 1] ** j * pts[:, 2] ** k
        return out

    def __repr__(self) -> str:
        return f"Polynomial({len(self.terms)} terms, degree {self.degree})"


def _as_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial.constant(p)


X, Y, Z = (Polynomial.coordinate(a) for a in range(3))


def radius_squared() -> Polynomial:
    return X * X + Y * Y + Z * Z


def gradient(p: Polynomial) -> list[Polynomial]:
    return [p.diff(a) for a in range(3)]


def cross(u: list[Polynomial], v: list[Polynomial]) -> list[Polynomial]:
    return [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]


def curl(v: list[Polynomial]) -> list[Polynomial]:
    return [
        v[2].diff(1) - v[1].diff(2),
        v[0].diff(2) - v[2].diff(0),
        v[1].diff(0) - v[0].diff(1),
    ]


def divergence(v: list[Polynomial]) -> Polynomial:
    return v[0].diff(0) + v[1].diff(1) + v[2].diff(2)


def solid_harmonic(l: int, m: int) -> Polynomial:
    """Real regular solid harmonic ``r**l * Y_lm`` (unnormalized).

    ``m > 0`` gives the cosine family, ``m < 0`` the sine family.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic indices l={l}, m={m}")
    am = abs(m)
    r2 = radius_squared()
    pi_lm = Polynomial()
    for k in range((l - am) // 2 + 1):
        coef = Fraction(
            (-1) ** k * comb(l, k) * comb(2 * l - 2 * k, l) * factorial(l - 2 * k),
            2**l * factorial(l - 2 * k - am),
        )
        pi_lm = pi_lm + coef * (r2**k) * (Z ** (l - 2 * k - am))
    # Re / Im of (x + i y)**|m|
    azimuthal = Polynomial()
    for p in range(am + 1):
        q = am - p  # power of i*y
        if m >= 0 and q % 2 == 0:
            sign = (-1) ** (q // 2)
        elif m < 0 and q % 2 == 1:
            sign = (-1) ** ((q - 1) // 2)
        else:
            continue
        azimuthal = azimuthal + sign * comb(am, p) * (X**p) * (Y**q)
    return pi_lm * azimuthal


class MonomialTable:
    """Dense index over all monomials up to a total degree.

    Used to stack many polynomials into a coefficient matrix so that
    evaluation on a grid becomes a single matrix product.
    """

    def __init__(self, max_degree: int):
        self.max_degree = max_degree
        self.exponents: list[Exponent] = [
            (i, j, d - i - j)
            for d in range(max_degree + 1)
            for i in range(d, -1, -1)
            for j in range(d - i, -1, -1)
        ]
        self.index = {e: n for n, e in enumerate(self.exponents)}

    def __len__(self) -> int:
        return len(self.exponents)

    def coefficients(self, polys: Iterable[Polynomial]) -> np.ndarray:
        polys = list(polys)
        out = np.zeros((len(polys), len(self)))
        for row, p in enumerate(polys):
            for e, c in p.terms.items():
                out[row, self.index[e]] = float(c)
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Monomial values, shape ``(n_monomials, n_points)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.max_degree
        powers = [np.ones((d + 1, pts.shape[0])) for _ in range(3)]
        for a in range(3):
            for p in range(1, d + 1):
                powers[a][p] = powers[a][p - 1] * pts[:, a]
        return np.array([powers[0][i] * powers[1][j] * powers[2][k] for i, j, k in self.exponents])
