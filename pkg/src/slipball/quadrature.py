"""Product quadrature rules on the ball and its boundary sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre


def sphere_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos(colatitude) times uniform azimuth.

    Exact for spherical polynomials through ``degree``.  Returns unit
    direction vectors ``(n, 3)`` and weights summing to ``4*pi``.
    """
    n_theta = degree // 2 + 1
    n_phi = degree + 1
    mu, w_mu = roots_legendre(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    sin_t = np.sqrt(1.0 - mu**2)
    dirs = np.stack(
        [
            np.outer(sin_t, np.cos(phi)).ravel(),
            np.outer(sin_t, np.sin(phi)).ravel(),
            np.repeat(mu, n_phi),
        ],
        axis=1,
    )
    weights = np.repeat(w_mu, n_phi) * (2.0 * np.pi / n_phi)
    return dirs, weights


@dataclass(frozen=True)
class QuadratureGrid:
    """Volume nodes in the ball of radius ``R`` plus nodes on its boundary.

    ``radial_order`` Gauss-Legendre nodes on [0, R] integrate ``r**2 p(r)``
    exactly for ``deg p <= 2*radial_order - 3``; the angular rule is exact
    through ``angular_degree``.
    """

    R: float
    radial_order: int
    angular_degree: int
    points: np.ndarray
    weights: np.ndarray
    boundary_points: np.ndarray
    boundary_weights: np.ndarray
    boundary_normals: np.ndarray

    @classmethod
    def build(cls, R: float, radial_order: int, angular_degree: int) -> "QuadratureGrid":
        if R <= 0:
            raise ValueError("radius must be positive")
        x, w = roots_legendre(radial_order)
        r = 0.5 * R * (x + 1.0)
        w_r = 0.5 * R * w * r**2
        dirs, w_ang = sphere_rule(angular_degree)
        points = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        weights = np.outer(w_r, w_ang).ravel()
        return cls(
            R=float(R),
            radial_order=radial_order,
            angular_degree=angular_degree,
            points=points,
            weights=weights,
            boundary_points=R * dirs,
            boundary_weights=R**2 * w_ang,
            boundary_normals=dirs.copy(),
        )

    @property
    def size(self) -> int:
        return self.weights.size

    def colatitude(self) -> np.ndarray:
        """Colatitude of every boundary node."""
        return np.arccos(np.clip(self.boundary_normals[:, 2], -1.0, 1.0))

    def refined(self, factor: float = 2.0) -> "QuadratureGrid":
        return QuadratureGrid.build(
            self.R,
            int(np.ceil(factor * self.radial_order)),
            int(np.ceil(factor * self.angular_degree)),
        )


def ball_monomial_integral(i: int, j: int, k: int, R: float = 1.0) -> float:
    """Closed-form integral of ``x**i y**j z**k`` over the ball of radius R."""
    from scipy.special import gamma

    if i % 2 or j % 2 or k % 2:
        return 0.0
    a, b, c = (i + 1) / 2, (j + 1) / 2, (k + 1) / 2
    sphere = 2.0 * gamma(a) * gamma(b) * gamma(c) / gamma(a + b + c)
    n = i + j + k
    return sphere * R ** (n + 3) / (n + 3)


def sphere_monomial_integral(i: int, j: int, k: int, R: float = 1.0) -> float:
    """Closed-form surface integral of ``x**i y**j z**k`` over |x| = R."""
    from scipy.special import gamma

    if i % 2 or j % 2 or k % 2:
        return 0.0
    a, b, c = (i + 1) / 2, (j + 1) / 2, (k + 1) / 2
    return 2.0 * gamma(a) * gamma(b) * gamma(c) / gamma(a + b + c) * R ** (i + j + k + 2)
