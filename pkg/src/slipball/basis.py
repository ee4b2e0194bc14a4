"""Divergence-free, boundary-tangent polynomial fields on the ball.

Toroidal fields are ``grad(f) x x`` and poloidal fields are
``curl(grad(f) x x)`` with ``f = r**(2n) * H_lm`` (toroidal) or
``f = r**(2n) * (R**2 - r**2) * H_lm`` (poloidal), where ``H_lm`` is a real
solid harmonic.  Everything is built as exact Cartesian polynomials, so values
and Jacobians are closed form and finite at the origin and on the axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import polynomial as P
from .quadrature import QuadratureGrid

KINDS = ("toroidal", "poloidal")
DEFAULT_MAX_FIELDS = 512


class BasisSizeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class BasisIndex:
    """Label of one basis field; ordering is (kind, l, m, n)."""

    kind_rank: int
    l: int
    m: int
    n: int
    R: float = field(default=1.0, compare=False)

    @property
    def kind(self) -> str:
        return KINDS[self.kind_rank]

    @classmethod
    def make(cls, kind: str, l: int, m: int, n: int, R: float = 1.0) -> "BasisIndex":
        if kind not in KINDS:
            raise ValueError(f"unknown field kind {kind!r}")
        if l < 1 or abs(m) > l or n < 0:
            raise ValueError(f"invalid basis index l={l}, m={m}, n={n}")
        return cls(KINDS.index(kind), l, m, n, float(R))

    @property
    def degree(self) -> int:
        """Total polynomial degree of the field components."""
        return self.l + 2 * self.n + (1 if self.kind == "poloidal" else 0)

    def label(self) -> str:
        return f"{self.kind}(l={self.l},m={self.m},n={self.n})"


def build_basis(R: float, l_max: int, n_max: int, max_fields: int = DEFAULT_MAX_FIELDS) -> list[BasisIndex]:
    """Ordered list of basis labels; ``n`` runs over ``0..n_max`` for both kinds."""
    if R <= 0:
        raise ValueError("R must be positive")
    if l_max < 1 or n_max < 0:
        raise ValueError("need l_max >= 1 and n_max >= 0")
    count = 2 * (n_max + 1) * ((l_max + 1) ** 2 - 1)
    if count > max_fields:
        raise BasisSizeError(f"basis would have {count} fields, limit is {max_fields}")
    return sorted(
        BasisIndex.make(kind, l, m, n, R)
        for kind in KINDS
        for l in range(1, l_max + 1)
        for m in range(-l, l + 1)
        for n in range(n_max + 1)
    )


@lru_cache(maxsize=None)
def _harmonic(l: int, m: int) -> P.Polynomial:
    return P.solid_harmonic(l, m)


def field_polynomials(idx: BasisIndex) -> tuple[P.Polynomial, P.Polynomial, P.Polynomial]:
    """Unnormalized field components as exact polynomials."""
    # R is excluded from BasisIndex equality, so it must be part of the cache key here
    return _field_polynomials(idx.kind_rank, idx.l, idx.m, idx.n, idx.R)


@lru_cache(maxsize=None)
def _field_polynomials(kind_rank: int, l: int, m: int, n: int, R: float):
    r2 = P.radius_squared()
    f = (r2**n) * _harmonic(l, m)
    poloidal = KINDS[kind_rank] == "poloidal"
    if poloidal:
        R = Fraction(R)
        f = f * (R * R - r2)
    xvec = [P.X, P.Y, P.Z]
    v = P.cross(P.gradient(f), xvec)
    if poloidal:
        v = P.curl(v)
    return tuple(v)


@dataclass(frozen=True)
class FieldSample:
    """Field data on a grid.

    ``values`` is ``(N, Q, 3)``, ``jacobians`` is ``(N, Q, 3, 3)`` with
    ``jacobians[..., a, b] = d v_a / d x_b``; ``boundary_values`` is
    ``(N, Qb, 3)``.
    """

    grid: QuadratureGrid
    values: np.ndarray
    jacobians: np.ndarray
    boundary_values: np.ndarray

    @property
    def symmetric(self) -> np.ndarray:
        return 0.5 * (self.jacobians + np.swapaxes(self.jacobians, -1, -2))

    def divergence(self) -> np.ndarray:
        return np.trace(self.jacobians, axis1=-2, axis2=-1)


class Basis:
    """A normalized family of basis fields with vectorized evaluation."""

    def __init__(self, R: float, l_max: int, n_max: int, max_fields: int = DEFAULT_MAX_FIELDS):
        self.R = float(R)
        self.l_max = l_max
        self.n_max = n_max
        self.indices = build_basis(R, l_max, n_max, max_fields)
        self.degree = max(i.degree for i in self.indices)
        self._table = P.MonomialTable(self.degree)
        polys = [field_polynomials(i) for i in self.indices]
        self._value_coef = self._table.coefficients(p for v in polys for p in v)
        self._jac_coef = self._table.coefficients(c.diff(b) for v in polys for c in v for b in range(3))
        self.scale = np.ones(len(self.indices))
        norms = self._raw_norms()
        self.scale = 1.0 / norms

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def bilinear_orders(self) -> tuple[int, int]:
        """(radial nodes, angular degree) integrating every bilinear form exactly."""
        radial = max(2 * (self.l_max + self.n_max) + 6, self.degree + 2)
        angular = 2 * self.l_max + 4
        return radial, angular

    @property
    def cubic_orders(self) -> tuple[int, int]:
        """Orders for the trilinear advection integrand (1.5x bilinear, at least exact)."""
        radial, angular = self.bilinear_orders
        radial = max(int(np.ceil(1.5 * radial)), (3 * self.degree + 4) // 2 + 1)
        angular = max(int(np.ceil(1.5 * angular)), 3 * self.l_max + 4)
        return radial, angular

    def grid(self, cubic: bool = False) -> QuadratureGrid:
        radial, angular = self.cubic_orders if cubic else self.bilinear_orders
        return QuadratureGrid.build(self.R, radial, angular)

    def _raw_norms(self) -> np.ndarray:
        grid = self.grid()
        vals = self.values_at(grid.points)
        return np.sqrt(np.einsum("nqa,nqa,q->n", vals, vals, grid.weights))

    def values_at(self, points: np.ndarray) -> np.ndarray:
        mon = self._table.evaluate(points)
        vals = (self._value_coef @ mon).reshape(len(self), 3, -1)
        return np.transpose(vals, (0, 2, 1)) * self.scale[:, None, None]

    def jacobians_at(self, points: np.ndarray) -> np.ndarray:
        mon = self._table.evaluate(points)
        jac = (self._jac_coef @ mon).reshape(len(self), 3, 3, -1)
        return np.transpose(jac, (0, 3, 1, 2)) * self.scale[:, None, None, None]

    def evaluate(self, grid: QuadratureGrid) -> FieldSample:
        if not np.isclose(grid.R, self.R):
            raise ValueError("grid radius does not match basis radius")
        return FieldSample(
            grid=grid,
            values=self.values_at(grid.points),
            jacobians=self.jacobians_at(grid.points),
            boundary_values=self.values_at(grid.boundary_points),
        )

    def position(self, idx: BasisIndex) -> int:
        return self.indices.index(idx)

    def combine(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Field ``sum_k c_k v_k`` at ``points``."""
        return np.einsum("n,nqa->qa", np.asarray(coeffs, dtype=float), self.values_at(points))

    def inventory(self) -> list[tuple[str, float]]:
        return [(i.label(), 1.0 / s) for i, s in zip(self.indices, self.scale)]


def evaluate_field(idx: BasisIndex, grid: QuadratureGrid) -> FieldSample:
    """Sample a single, unnormalized field on ``grid``."""
    polys = field_polynomials(idx)
    table = P.MonomialTable(max(idx.degree, 1))
    vcoef = table.coefficients(polys)
    jcoef = table.coefficients(c.diff(b) for c in polys for b in range(3))

    def at(points):
        mon = table.evaluate(points)
        return (vcoef @ mon).T[None], (jcoef @ mon).T.reshape(1, -1, 3, 3)

    vals, jac = at(grid.points)
    bvals, _ = at(grid.boundary_points)
    return FieldSample(grid=grid, values=vals, jacobians=jac, boundary_values=bvals)


def rigid_rotation_coefficients(basis: Basis) -> np.ndarray:
    """Coefficients of Y_1, Y_2, Y_3 (``e_i x x``) in ``basis``; shape (3, N).

    ``e_1 x x`` is the toroidal field generated by ``H = x``, i.e. (l=1, m=1);
    ``e_2 x x`` comes from ``H = y`` (m=-1) and ``e_3 x x`` from ``H = z`` (m=0).
    """
    if basis.l_max < 1:
        raise ValueError("rigid rotations need l_max >= 1")
    out = np.zeros((3, len(basis)))
    for row, m in enumerate((1, -1, 0)):
        k = basis.position(BasisIndex.make("toroidal", 1, m, 0, basis.R))
        out[row, k] = 1.0 / basis.scale[k]
    return out


def rigid_rotation(axis: int, points: np.ndarray) -> np.ndarray:
    e = np.zeros(3)
    e[axis] = 1.0
    return np.cross(e, np.asarray(points, dtype=float))
