"""Smooth bounded domains, their Gauss map and rigid-motion symmetries.

Every supported boundary is written, in a local frame ``y = Q^T (x - c)``, as
the zero set of a function ``F`` with outward gradient, so the shape operator
is ``dn(v) = P_tan(Hess F v) / |grad F|`` on tangent vectors.  Principal
curvatures follow the convention that they are the eigenvalues of ``-dn``;
only their absolute values enter the curvature bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEFAULT_RESOLUTION = (200, 200)
TANGENCY_TOL = 1e-9
NULL_SV_RTOL = 1e-7


class GeometryError(ValueError):
    """Invalid geometry parameters."""


class OffSurfaceError(ValueError):
    pass


class NonTangentError(ValueError):
    pass


def _frame_for_axis(axis) -> np.ndarray:
    """Rotation whose third column is the unit ``axis``."""
    e3 = np.asarray(axis, dtype=float)
    nrm = np.linalg.norm(e3)
    if nrm == 0:
        raise GeometryError("axis must be nonzero")
    e3 = e3 / nrm
    trial = np.eye(3)[np.argmin(np.abs(e3))]
    e1 = np.cross(trial, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3])


@dataclass(frozen=True)
class Profile:
    """Squared radius ``h(z) = rho(z)**2`` of a solid of revolution and its derivatives."""

    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]
    d2h: Callable[[np.ndarray], np.ndarray]
    z0: float
    z1: float
    expression: str = ""

    @classmethod
    def from_expression(cls, rho: str, z0: float, z1: float) -> "Profile":
        import sympy

        z = sympy.Symbol("z")
        expr = sympy.sympify(rho, locals={"z": z})
        h = sympy.expand(expr**2)
        fns = [sympy.lambdify(z, e, "numpy") for e in (h, sympy.diff(h, z), sympy.diff(h, z, 2))]
        vec = [lambda t, f=f: np.broadcast_to(np.asarray(f(t), dtype=float), np.shape(t)).copy() for f in fns]
        return cls(vec[0], vec[1], vec[2], float(z0), float(z1), expression=str(rho))

    @classmethod
    def from_callable(cls, rho: Callable, z0: float, z1: float, step: float = 1e-4) -> "Profile":
        """Profile with derivatives of ``rho**2`` from 5-point central differences."""

        def h(t):
            return np.asarray(rho(t), dtype=float) ** 2

        def dh(t):
            t = np.asarray(t, dtype=float)
            return (h(t - 2 * step) - 8 * h(t - step) + 8 * h(t + step) - h(t + 2 * step)) / (12 * step)

        def d2h(t):
            t = np.asarray(t, dtype=float)
            return (
                -h(t - 2 * step) + 16 * h(t - step) - 30 * h(t) + 16 * h(t + step) - h(t + 2 * step)
            ) / (12 * step**2)

        return cls(h, dh, d2h, float(z0), float(z1))


@dataclass(frozen=True)
class GeometryDescriptor:
    """A bounded smooth domain.

    ``kind`` is one of ``ball``, ``spheroid``, ``revolution``, ``ellipsoid``.
    ``semi_axes`` are the local (a, b, c); for a ball all three equal R.
    """

    kind: str
    center: np.ndarray
    rotation: np.ndarray
    semi_axes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    profile: Optional[Profile] = None
    resolution: tuple[int, int] = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.validate()

    # -- construction -------------------------------------------------
    @classmethod
    def ball(cls, R: float = 1.0, center=(0.0, 0.0, 0.0), resolution=DEFAULT_RESOLUTION):
        return cls("ball", np.asarray(center, float), np.eye(3), (R, R, R), resolution=tuple(resolution))

    @classmethod
    def spheroid(cls, a: float, c: float, axis=(0, 0, 1), center=(0, 0, 0), resolution=DEFAULT_RESOLUTION):
        return cls(
            "spheroid", np.asarray(center, float), _frame_for_axis(axis), (a, a, c), resolution=tuple(resolution)
        )

    @classmethod
    def ellipsoid(cls, a: float, b: float, c: float, center=(0, 0, 0), rotation=None, resolution=DEFAULT_RESOLUTION):
        rot = np.eye(3) if rotation is None else np.asarray(rotation, float)
        return cls("ellipsoid", np.asarray(center, float), rot, (a, b, c), resolution=tuple(resolution))

    @classmethod
    def revolution(cls, profile: Profile, axis=(0, 0, 1), center=(0, 0, 0), resolution=DEFAULT_RESOLUTION):
        return cls(
            "revolution",
            np.asarray(center, float),
            _frame_for_axis(axis),
            profile=profile,
            resolution=tuple(resolution),
        )

    def with_resolution(self, resolution) -> "GeometryDescriptor":
        return GeometryDescriptor(
            self.kind, self.center, self.rotation, self.semi_axes, self.profile, tuple(resolution)
        )

    # -- validity -----------------------------------------------------
    def validate(self) -> None:
        if self.kind not in ("ball", "spheroid", "revolution", "ellipsoid"):
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if np.shape(self.center) != (3,) or not np.all(np.isfinite(self.center)):
            raise GeometryError("center must be a finite 3-vector")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-12):
            raise GeometryError("rotation must be orthogonal")
        if min(self.resolution) < 2:
            raise GeometryError("sampling resolution must be at least 2x2")
        if self.kind == "revolution":
            self._validate_profile()
        elif min(self.semi_axes) <= 0:
            raise GeometryError("semi-axes must be positive")

    def _validate_profile(self) -> None:
        p = self.profile
        if p is None or not p.z1 > p.z0:
            raise GeometryError("revolution profile needs z0 < z1")
        scale = max(p.z1 - p.z0, 1.0) ** 2
        zs = np.linspace(p.z0, p.z1, 2001)[1:-1]
        if np.any(p.h(zs) <= 0):
            raise GeometryError("profile radius must be positive inside (z0, z1)")
        end_h = np.abs(p.h(np.array([p.z0, p.z1])))
        if np.any(end_h > 1e-10 * scale):
            raise GeometryError("profile must close on the axis at z0 and z1")
        slopes = p.dh(np.array([p.z0, p.z1]))
        if not (slopes[0] > 0 and slopes[1] < 0):
            raise GeometryError("profile caps are not smooth (d(rho^2)/dz must be nonzero at the ends)")

    # -- implicit description in the local frame ----------------------
    def _to_local(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, float)) - self.center) @ self.rotation

    def _implicit(self, y: np.ndarray):
        """F, grad F, Hess F at local points ``y`` (n, 3)."""
        n = y.shape[0]
        hess = np.zeros((n, 3, 3))
        if self.kind == "revolution":
            p = self.profile
            z = y[:, 2]
            F = y[:, 0] ** 2 + y[:, 1] ** 2 - p.h(z)
            grad = np.stack([2 * y[:, 0], 2 * y[:, 1], -p.dh(z)], axis=1)
            hess[:, 0, 0] = 2.0
            hess[:, 1, 1] = 2.0
            hess[:, 2, 2] = -p.d2h(z)
        else:
            inv2 = 1.0 / np.asarray(self.semi_axes, float) ** 2
            F = (y**2 @ inv2) - 1.0
            grad = 2.0 * y * inv2
            hess[:, [0, 1, 2], [0, 1, 2]] = 2.0 * inv2
        return F, grad, hess

    def distance_estimate(self, x) -> np.ndarray:
        F, grad, _ = self._implicit(self._to_local(x))
        return np.abs(F) / np.linalg.norm(grad, axis=1)

    def normals(self, x) -> np.ndarray:
        _, grad, _ = self._implicit(self._to_local(x))
        n = grad / np.linalg.norm(grad, axis=1)[:, None]
        return n @ self.rotation.T

    # -- sampling -----------------------------------------------------
    def surface_samples(self, resolution=None) -> np.ndarray:
        """Boundary points on a nested parameter grid, shape (n, 3).

        Grids with resolution ``k * (n1, n2)`` contain the ``(n1, n2)`` grid.
        """
        n1, n2 = resolution or self.resolution
        phi = 2.0 * np.pi * np.arange(n2) / n2
        if self.kind == "revolution":
            p = self.profile
            z = p.z0 + (p.z1 - p.z0) * np.arange(n1 + 1) / n1
            rho = np.sqrt(np.clip(p.h(z), 0.0, None))
            y = np.stack(
                [np.outer(rho, np.cos(phi)), np.outer(rho, np.sin(phi)), np.repeat(z[:, None], n2, axis=1)],
                axis=-1,
            ).reshape(-1, 3)
        else:
            a, b, c = self.semi_axes
            theta = np.pi * np.arange(n1 + 1) / n1
            st, ct = np.sin(theta), np.cos(theta)
            y = np.stack(
                [a * np.outer(st, np.cos(phi)), b * np.outer(st, np.sin(phi)), c * np.repeat(ct[:, None], n2, axis=1)],
                axis=-1,
            ).reshape(-1, 3)
        return y @ self.rotation.T + self.center

    # -- shape operator -----------------------------------------------
    def shape_operator(self, x, vectors) -> np.ndarray:
        """Vectorized ``dn_p(v)`` for boundary points ``x`` and tangent ``vectors`` (n, 3)."""
        y = self._to_local(x)
        v = np.atleast_2d(np.asarray(vectors, float)) @ self.rotation
        _, grad, hess = self._implicit(y)
        gn = np.linalg.norm(grad, axis=1)
        n = grad / gn[:, None]
        hv = np.einsum("nab,nb->na", hess, v) / gn[:, None]
        hv -= np.einsum("na,na->n", hv, n)[:, None] * n
        return hv @ self.rotation.T

    def shape_operator_matrices(self, x):
        """Tangent frames and the 2x2 matrix of dn in them, for points ``x`` (n, 3)."""
        y = self._to_local(x)
        _, grad, hess = self._implicit(y)
        gn = np.linalg.norm(grad, axis=1)
        n = grad / gn[:, None]
        trial = np.eye(3)[np.argmin(np.abs(n), axis=1)]
        t1 = np.cross(n, trial)
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        t2 = np.cross(n, t1)
        frame = np.stack([t1, t2], axis=1)  # (n, 2, 3)
        mat = np.einsum("nia,nab,njb->nij", frame, hess, frame) / gn[:, None, None]
        return frame @ self.rotation.T, n @ self.rotation.T, mat

    def principal_curvatures(self, x) -> np.ndarray:
        """Signed (k1, k2) per point, the eigenvalues of ``-dn``; shape (n, 2)."""
        _, _, mat = self.shape_operator_matrices(x)
        return -np.linalg.eigvalsh(0.5 * (mat + np.swapaxes(mat, 1, 2)))[:, ::-1]


@dataclass(frozen=True)
class ShapeOperatorSample:
    point: np.ndarray
    tangents: np.ndarray
    matrix: np.ndarray
    k1: float
    k2: float


def shape_operator_sample(geom: GeometryDescriptor, p) -> ShapeOperatorSample:
    p = np.asarray(p, float)
    _check_on_surface(geom, p)
    frame, _, mat = geom.shape_operator_matrices(p[None])
    ev = np.linalg.eigvalsh(0.5 * (mat[0] + mat[0].T))
    k2, k1 = -ev
    return ShapeOperatorSample(p, frame[0], mat[0], float(k1), float(k2))


def _check_on_surface(geom: GeometryDescriptor, p: np.ndarray, tol: float = 1e-10) -> None:
    d = geom.distance_estimate(p[None])[0]
    if d > tol:
        raise OffSurfaceError(f"point {p.tolist()} is {d:.3e} away from the boundary")


def gauss_map_differential(geom: GeometryDescriptor, p, v, tol: float = 1e-10) -> np.ndarray:
    """``dn_p(v)`` for a boundary point ``p`` and tangent vector ``v``."""
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    _check_on_surface(geom, p, tol)
    n = geom.normals(p[None])[0]
    if abs(v @ n) > tol * max(1.0, np.linalg.norm(v)):
        raise NonTangentError(f"vector has normal component {v @ n:.3e}")
    return geom.shape_operator(p[None], v[None])[0]


def curvature_bound_lambda(geom: GeometryDescriptor, resolution=None) -> float:
    """Sup over boundary samples of max(|k1|, |k2|)."""
    pts = geom.surface_samples(resolution)
    return float(np.abs(geom.principal_curvatures(pts)).max())


def curvature_extrema(geom: GeometryDescriptor, resolution=None) -> dict:
    k = geom.principal_curvatures(geom.surface_samples(resolution))
    return {"k_min": float(k.min()), "k_max": float(k.max()), "lambda_bound": float(np.abs(k).max())}


@dataclass(frozen=True)
class RigidField:
    """``w(x) = a + b x (x - center)``."""

    a: np.ndarray
    b: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return np.asarray(self.a, float) + np.cross(np.asarray(self.b, float), x - self.center)

    def jacobian(self) -> np.ndarray:
        b1, b2, b3 = np.asarray(self.b, float)
        return np.array([[0.0, -b3, b2], [b3, 0.0, -b1], [-b2, b1, 0.0]])

    def symmetric_gradient(self) -> np.ndarray:
        j = self.jacobian()
        return 0.5 * (j + j.T)


def rigid_field_tangency(geom: GeometryDescriptor, w: RigidField, resolution=None, tol: float = TANGENCY_TOL):
    """(tangent?, max |w.n| / (1 + |w|)) over the boundary samples."""
    pts = geom.surface_samples(resolution)
    vals = w(pts)
    viol = np.abs(np.einsum("na,na->n", vals, geom.normals(pts))) / (1.0 + np.linalg.norm(vals, axis=1))
    worst = float(viol.max())
    return worst <= tol, worst


@dataclass(frozen=True)
class KernelClassification:
    dimension: int
    center: np.ndarray
    generators: tuple[RigidField, ...]
    axis: Optional[np.ndarray] = None
    axis_point: Optional[np.ndarray] = None
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(6))


def ker_s_classification(geom: GeometryDescriptor, resolution=None) -> KernelClassification:
    """Dimension of the rigid fields tangent to the boundary, with generators.

    Solves ``min sum |w.n|^2`` over ``(a, b)`` on the sample grid and counts
    near-null singular values.
    """
    pts = geom.surface_samples(resolution)
    nrm = geom.normals(pts)
    c = np.asarray(geom.center, float)
    A = np.hstack([nrm, np.cross(pts - c, nrm)])
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    null = vt[s <= NULL_SV_RTOL * s[0]].T  # (6, d)
    d = null.shape[1]
    gens: list[RigidField] = []
    axis = axis_point = None
    if d == 3:
        bpart = null[3:, :]
        coeffs = null @ np.linalg.inv(bpart)
        coeffs[np.abs(coeffs) < 1e-12] = 0.0
        coeffs = coeffs + 0.0
        gens = [RigidField(coeffs[:3, i], coeffs[3:, i], c) for i in range(3)]
    elif d == 1:
        vec = null[:, 0] / np.linalg.norm(null[3:, 0])
        vec[np.abs(vec) < 1e-12] = 0.0
        vec = vec + 0.0
        a, b = vec[:3], vec[3:]
        if b @ geom.rotation[:, 2] < 0:
            a, b = -a + 0.0, -b + 0.0
        gens = [RigidField(a, b, c)]
        axis = b
        axis_point = c + np.cross(b, a)
    elif d != 0:
        gens = [RigidField(null[:3, i], null[3:, i], c) for i in range(d)]
    return KernelClassification(d, c, tuple(gens), axis, axis_point, s)
