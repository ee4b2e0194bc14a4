"""Mass matrix, Stokes forms, advection tensor and spectral constants.

All matrices are dense and indexed by the basis order of :mod:`slipball.basis`.
Two independent expressions of the Stokes form are assembled:

* ``B_Su[i, j] = 2 int Sv_i : Sv_j + int_bdry alpha v_i . v_j``
* ``B_Du[i, j] = int Dv_i : Dv_j + int_bdry v_i . (alpha v_j - dn(v_j))``

and they agree for tangent, divergence-free fields.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .basis import Basis, FieldSample, rigid_rotation_coefficients
from .geometry import GeometryDescriptor, curvature_bound_lambda

log = logging.getLogger(__name__)

NULL_EIG_TOL = 1e-9
MAX_ADVECTION_FIELDS = 512


class NegativeFrictionError(ValueError):
    pass


class UnsupportedGeometryError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


class KernelDeflationError(ValueError):
    pass


@dataclass(frozen=True)
class FrictionSpec:
    """Friction coefficient on the boundary sphere, constant or a function of colatitude."""

    expression: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    constant: Optional[float] = None

    @classmethod
    def uniform(cls, alpha: float) -> "FrictionSpec":
        alpha = float(alpha)
        if alpha < 0:
            raise NegativeFrictionError(f"friction coefficient {alpha} is negative")
        return cls(repr(alpha), lambda theta: np.full(np.shape(theta), alpha), alpha)

    @classmethod
    def parse(cls, text: str) -> "FrictionSpec":
        """Constant (``"1"``) or an expression in ``theta`` (``"0.5 + cos(theta)**2"``)."""
        try:
            return cls.uniform(float(text))
        except ValueError as exc:
            if isinstance(exc, NegativeFrictionError):
                raise
        import sympy

        theta = sympy.Symbol("theta")
        expr = sympy.sympify(text, locals={"theta": theta})
        if expr.free_symbols - {theta}:
            raise ValueError(f"friction expression may only depend on theta: {text!r}")
        f = sympy.lambdify(theta, expr, "numpy")

        def func(t):
            return np.broadcast_to(np.asarray(f(t), dtype=float), np.shape(t)).copy()

        return cls(str(text), func, None)

    def at(self, theta: np.ndarray) -> np.ndarray:
        vals = self.func(np.asarray(theta, dtype=float))
        if np.any(vals < 0):
            raise NegativeFrictionError(f"friction {self.expression} is negative at some boundary nodes")
        return vals

    def extrema(self, theta: np.ndarray) -> tuple[float, float]:
        vals = self.at(theta)
        return float(vals.min()), float(vals.max())

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0


def _weighted_gram(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``G[i, j] = sum_q w_q <a_i(q), b_j(q)>`` for arrays (N, Q, ...)."""
    n = a.shape[0]
    aw = (a * w.reshape((1, -1) + (1,) * (a.ndim - 2))).reshape(n, -1)
    return aw @ b.reshape(b.shape[0], -1).T


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def assemble_mass(sample: FieldSample) -> np.ndarray:
    M = _symmetrize(_weighted_gram(sample.values, sample.values, sample.grid.weights))
    cond = np.linalg.cond(M)
    if cond > 1e10:
        warnings.warn(f"mass matrix is ill-conditioned (cond = {cond:.3e})", RuntimeWarning)
    return M


def assemble_strain_form(sample: FieldSample) -> np.ndarray:
    """``int Sv_i : Sv_j`` (without the factor 2 of the Stokes form)."""
    S = sample.symmetric
    return _symmetrize(_weighted_gram(S, S, sample.grid.weights))


def assemble_gradient_form(sample: FieldSample) -> np.ndarray:
    """``int Dv_i : Dv_j``."""
    return _symmetrize(_weighted_gram(sample.jacobians, sample.jacobians, sample.grid.weights))


def assemble_boundary_mass(sample: FieldSample, weight: Optional[np.ndarray] = None) -> np.ndarray:
    w = sample.grid.boundary_weights if weight is None else sample.grid.boundary_weights * weight
    bv = sample.boundary_values
    return _symmetrize(_weighted_gram(bv, bv, w))


def assemble_form_su(sample: FieldSample, alpha: FrictionSpec) -> np.ndarray:
    a = alpha.at(sample.grid.colatitude())
    return 2.0 * assemble_strain_form(sample) + assemble_boundary_mass(sample, a)


def assemble_form_du(sample: FieldSample, alpha: FrictionSpec, geom: GeometryDescriptor) -> np.ndarray:
    """Gradient form with the shape-operator boundary term (ball only)."""
    if geom.kind != "ball" or not np.isclose(geom.semi_axes[0], sample.grid.R) or np.any(geom.center != 0):
        raise UnsupportedGeometryError("the Du-form is assembled on the centered ball of the basis radius only")
    grid = sample.grid
    a = alpha.at(grid.colatitude())
    bv = sample.boundary_values
    n, qb, _ = bv.shape
    dn = geom.shape_operator(np.tile(grid.boundary_points, (n, 1)), bv.reshape(-1, 3)).reshape(n, qb, 3)
    friction = a[None, :, None] * bv - dn
    bdry = _weighted_gram(bv, friction, grid.boundary_weights)
    return _symmetrize(assemble_gradient_form(sample) + bdry)


def shape_operator_form(sample: FieldSample, geom: GeometryDescriptor) -> np.ndarray:
    """``int_bdry v_i . dn(v_j) dS``."""
    grid = sample.grid
    bv = sample.boundary_values
    n, qb, _ = bv.shape
    dn = geom.shape_operator(np.tile(grid.boundary_points, (n, 1)), bv.reshape(-1, 3)).reshape(n, qb, 3)
    return _symmetrize(_weighted_gram(bv, dn, grid.boundary_weights))


def _is_positive_definite(A: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


def coercivity_shift(B: np.ndarray, M: np.ndarray, margin: float = 1e-9, tol: float = 1e-6) -> float:
    """Smallest ``C >= 0`` (to ``tol``) with ``B + (C + margin) M`` positive definite."""
    def ok(c):
        return _is_positive_definite(B + (c + margin) * M)

    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e12:
            raise EigenSolverError("could not bracket the coercivity shift")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class EigenDecomposition:
    """Generalized eigenpairs of ``B w = lambda M w``; columns of ``vectors`` are M-orthonormal."""

    values: np.ndarray
    vectors: np.ndarray
    residual: float

    def null_count(self, tol: float = NULL_EIG_TOL) -> int:
        return int(np.sum(np.abs(self.values) <= tol))

    def orthonormality_residual(self, M: np.ndarray) -> float:
        W = self.vectors
        return float(np.abs(W.T @ M @ W - np.eye(W.shape[1])).max())


def solve_stokes_eigenproblem(B: np.ndarray, M: np.ndarray, C_beta: float = 0.0) -> EigenDecomposition:
    """Dense generalized eigensolve of the shifted pencil, shifted back."""
    try:
        vals, vecs = sla.eigh(B + C_beta * M, M)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(str(exc)) from exc
    vals = vals - C_beta
    res = np.abs(B @ vecs - (M @ vecs) * vals).max()
    bnorm = np.abs(B).max()
    if not np.all(np.isfinite(vals)) or res > 1e-8 * max(bnorm, 1.0):
        raise EigenSolverError(f"eigenpair residual {res:.3e} exceeds tolerance")
    return EigenDecomposition(vals, vecs, float(res))


def assemble_advection(sample: FieldSample, chunk: int = 8) -> np.ndarray:
    """``T[i, j, k] = int (v_i . grad) v_j . v_k``; needs a cubic-exact grid."""
    n = sample.values.shape[0]
    if n > MAX_ADVECTION_FIELDS:
        raise MemoryError(f"dense advection tensor for {n} fields exceeds the {MAX_ADVECTION_FIELDS} limit")
    w = sample.grid.weights
    vals = sample.values
    jac = sample.jacobians  # (N, Q, b, a) = d v_b / d x_a
    vk = vals.reshape(n, -1).T  # (Q*3, N)
    T = np.empty((n, n, n))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        vi = vals[start:stop] * w[None, :, None]  # (c, Q, 3)
        # (v_i . grad) v_j at every node: sum_a v_i[a] d v_j[b] / d x_a
        G = np.einsum("iqa,jqba->ijqb", vi, jac, optimize=True)
        T[start:stop] = (G.reshape((stop - start) * n, -1) @ vk).reshape(stop - start, n, n)
    return T


def antisymmetry_defect(T: np.ndarray) -> float:
    """``max |T[i,j,k] + T[i,k,j]| / (1 + max |T|)``."""
    return float(np.abs(T + np.swapaxes(T, 1, 2)).max() / (1.0 + np.abs(T).max()))


@dataclass(frozen=True)
class PoincareConstants:
    """Discrete symmetric-Poincare data.

    ``mu1`` is the smallest ``int |Su|^2 / int |u|^2`` on the M-orthogonal
    complement of the rigid rotations, so ``|u| <= C |Su|`` with
    ``C = 1/sqrt(mu1)``.  The Stokes form with zero friction is ``2 x`` this
    strain form, hence its first nonzero eigenvalue is ``2 mu1``.
    """

    mu1: float
    C: float
    classical: float
    korn: float
    complement: np.ndarray = field(repr=False)


def m_orthonormalize(K: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Rows of ``K`` made M-orthonormal (Cholesky of their Gram matrix)."""
    G = K @ M @ K.T
    L = np.linalg.cholesky(G)
    return np.linalg.solve(L, K)


def deflated_complement(K: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Orthonormal (Euclidean) basis of ``{u : K M u = 0}``, shape (N, N - k)."""
    return sla.null_space(K @ M)


def symmetric_poincare_constant(
    S_form: np.ndarray,
    M: np.ndarray,
    kernel: np.ndarray,
    D_form: Optional[np.ndarray] = None,
    tol: float = 1e-10,
) -> PoincareConstants:
    """Smallest eigenvalue of the strain form deflated by the rigid rotations ``kernel`` (k, N)."""
    K = np.atleast_2d(kernel)
    leak = np.abs(K @ S_form).max() / max(np.abs(S_form).max(), 1.0)
    if leak > tol:
        raise KernelDeflationError(f"kernel vectors are not strain-null (relative leak {leak:.3e})")
    Z = deflated_complement(K, M)
    mu = sla.eigh(Z.T @ S_form @ Z, Z.T @ M @ Z, eigvals_only=True)
    mu1 = float(mu[0])
    classical = korn = float("nan")
    if D_form is not None:
        classical = float(sla.eigh(D_form, M, eigvals_only=True)[0])
        korn = float(sla.eigh(Z.T @ D_form @ Z, Z.T @ S_form @ Z, eigvals_only=True)[-1])
    return PoincareConstants(mu1, 1.0 / np.sqrt(mu1), classical, korn, Z)


def rayleigh_quotient(A: np.ndarray, M: np.ndarray, u: np.ndarray) -> float:
    return float(u @ A @ u / (u @ M @ u))


def korn_step1_residuals(
    D_form: np.ndarray,
    S_form: np.ndarray,
    dn_form: np.ndarray,
    coeffs: np.ndarray,
) -> np.ndarray:
    """``|Du|^2 - 2|Su|^2 - int u.dn(u)`` relative to ``|Du|^2`` for each row of ``coeffs``."""
    U = np.atleast_2d(coeffs)
    d = np.einsum("ri,ij,rj->r", U, D_form, U)
    s = np.einsum("ri,ij,rj->r", U, S_form, U)
    b = np.einsum("ri,ij,rj->r", U, dn_form, U)
    return np.abs(d - 2.0 * s - b) / d


def korn_step1_check(
    basis: Basis,
    sample: FieldSample,
    geom: GeometryDescriptor,
    n_fields: int = 100,
    seed: int = 0,
) -> float:
    """Max relative residual of ``|Du|^2 = 2|Su|^2 + (1/R) int_bdry |u|^2`` over random fields."""
    if geom.kind != "ball":
        raise UnsupportedGeometryError("the step-1 identity check runs on the ball")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_fields, len(basis)))
    res = korn_step1_residuals(
        assemble_gradient_form(sample),
        assemble_strain_form(sample),
        shape_operator_form(sample, geom),
        U,
    )
    return float(res.max())


@dataclass
class OperatorSet:
    """Everything the dynamics needs, in the original basis coordinates."""

    basis: Basis
    alpha: FrictionSpec
    geometry: GeometryDescriptor
    M: np.ndarray
    B_su: np.ndarray
    B_du: np.ndarray
    strain: np.ndarray
    gradient: np.ndarray
    boundary_mass: np.ndarray
    boundary_alpha: np.ndarray
    C_beta: float
    eig: EigenDecomposition
    kernel: np.ndarray
    poincare: PoincareConstants
    lambda_bound: float
    alpha_min: float
    alpha_max: float
    T: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.M.shape[0]

    @property
    def sigma1(self) -> float:
        """Smallest eigenvalue of the Stokes pencil."""
        return float(self.eig.values[0])

    def first_nonzero_eigenvalue(self) -> float:
        vals = self.eig.values
        return float(vals[np.abs(vals) > NULL_EIG_TOL][0])

    def constants(self) -> dict:
        return {
            "mu1": self.poincare.mu1,
            "C": self.poincare.C,
            "C_beta": self.C_beta,
            "sigma1": self.sigma1,
            "lambda_bound": self.lambda_bound,
            "min_alpha": self.alpha_min,
            "max_alpha": self.alpha_max,
            "null_count": self.eig.null_count(),
            "classical_poincare": self.poincare.classical,
            "korn_ratio": self.poincare.korn,
            "n_fields": self.size,
        }


def build_operator_set(
    basis: Basis,
    alpha: FrictionSpec,
    geom: Optional[GeometryDescriptor] = None,
    advection: bool = True,
    quadrature_scale: float = 1.0,
) -> OperatorSet:
    """Assemble every matrix on the exact-order grids (optionally refined by ``quadrature_scale``)."""
    geom = geom or GeometryDescriptor.ball(basis.R)

    def grid(cubic=False):
        g = basis.grid(cubic=cubic)
        return g.refined(quadrature_scale) if quadrature_scale > 1.0 else g

    sample = basis.evaluate(grid())
    theta = sample.grid.colatitude()
    a_min, a_max = alpha.extrema(theta)
    M = assemble_mass(sample)
    strain = assemble_strain_form(sample)
    grad = assemble_gradient_form(sample)
    bmass = assemble_boundary_mass(sample)
    balpha = assemble_boundary_mass(sample, alpha.at(theta))
    B_su = 2.0 * strain + balpha
    B_du = assemble_form_du(sample, alpha, geom)
    C_beta = coercivity_shift(B_su, M)
    eig = solve_stokes_eigenproblem(B_su, M, C_beta)
    kernel = rigid_rotation_coefficients(basis)
    poincare = symmetric_poincare_constant(strain, M, kernel, grad)
    T = None
    if advection:
        T = assemble_advection(basis.evaluate(grid(cubic=True)))
    log.info("assembled %d-field operator set (C_beta=%g, mu1=%g)", len(basis), C_beta, poincare.mu1)
    return OperatorSet(
        basis=basis,
        alpha=alpha,
        geometry=geom,
        M=M,
        B_su=B_su,
        B_du=B_du,
        strain=strain,
        gradient=grad,
        boundary_mass=bmass,
        boundary_alpha=balpha,
        C_beta=C_beta,
        eig=eig,
        kernel=kernel,
        poincare=poincare,
        lambda_bound=curvature_bound_lambda(geom),
        alpha_min=a_min,
        alpha_max=a_max,
        T=T,
    )
