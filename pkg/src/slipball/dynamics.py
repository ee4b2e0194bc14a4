"""Galerkin Navier-Stokes dynamics in the Stokes eigenbasis, with diagnostics.

The state is the coefficient vector ``g`` of ``u`` in the M-orthonormal
eigenbasis, so ``|u|^2 = g . g``.  Time integrals of the dissipation terms
(``int |Su|^2``, ``int |Du|^2`` and the two boundary integrals) are carried as
extra ODE components and advanced by the same Runge-Kutta stages, which keeps
the energy-balance residuals at the order of the time stepper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import NULL_EIG_TOL, FrictionSpec, OperatorSet, m_orthonormalize

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t",
    "E",
    "Dsq",
    "Ssq",
    "bnd_alpha",
    "bnd_u2",
    "pairing_Y1",
    "pairing_Y2",
    "pairing_Y3",
    "r_Su",
    "r_Du",
    "inst_rate",
    "E_dev",
)

INTEGRATORS = ("rk4", "rk2")
TARGETS = ("none", "zero", "kernel")


class StabilityGuardError(ValueError):
    pass


class InstabilityError(RuntimeError):
    def __init__(self, message: str, series: "TimeSeries | None" = None):
        super().__init__(message)
        self.series = series


class WindowTooShortError(ValueError):
    pass


class UnsupportedTargetError(ValueError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    """How ``u0`` is chosen.

    kind:
      ``field``        named rigid rotation ``Y1``/``Y2``/``Y3`` times ``amplitude``
      ``eigenmode``    ``amplitude`` times Stokes eigenmode ``mode`` (0-based; ``-1``
                       means the first mode with nonzero eigenvalue)
      ``coefficients`` explicit eigenbasis coefficients
      ``random``       isotropic Gaussian over the first ``modes`` eigenmodes,
                       scaled to ``energy``, optionally with the rigid part removed
    """

    kind: str = "random"
    name: str = "Y3"
    amplitude: float = 1.0
    mode: int = -1
    coefficients: tuple[float, ...] = ()
    energy: float = 1.0
    modes: Optional[int] = None
    deflate_kernel: bool = False
    add_field: str = ""


@dataclass(frozen=True)
class SimulationConfig:
    nu: float = 0.1
    alpha: FrictionSpec = field(default_factory=lambda: FrictionSpec.uniform(0.0))
    R: float = 1.0
    l_max: int = 4
    n_max: int = 2
    n_modes: Optional[int] = None
    initial: InitialCondition = field(default_factory=InitialCondition)
    dt: float = 1e-3
    T: float = 1.0
    integrator: str = "rk4"
    cadence: int = 1
    seed: int = 0
    target: str = "none"

    def validate(self, lambda_max: Optional[float] = None) -> None:
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.dt <= 0 or self.T < self.dt:
            raise ValueError("need dt > 0 and T >= dt")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.cadence < 1:
            raise ValueError("diagnostic cadence must be >= 1 step")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if lambda_max is not None and self.dt > 0.5 / (self.nu * lambda_max):
            raise StabilityGuardError(
                f"dt={self.dt} exceeds the explicit stability guard 0.5/(nu*lambda_max)="
                f"{0.5 / (self.nu * lambda_max):.3e}"
            )


class GalerkinSystem:
    """Operators rotated into the (possibly truncated) Stokes eigenbasis."""

    def __init__(self, ops: OperatorSet, nu: float, n_modes: Optional[int] = None):
        if ops.T is None:
            raise ValueError("operator set was built without the advection tensor")
        W = ops.eig.vectors
        if n_modes is not None:
            W = W[:, :n_modes]
        self.ops = ops
        self.nu = float(nu)
        self.W = W
        self.lam = ops.eig.values[: W.shape[1]].copy()
        self.size = W.shape[1]
        T = np.tensordot(W, ops.T, axes=(0, 0))
        T = np.tensordot(W, T, axes=(0, 1)).transpose(1, 0, 2)
        T = np.tensordot(T, W, axes=(2, 0))
        # exact quadrature makes T antisymmetric in (j, k); drop the roundoff
        self.T = np.ascontiguousarray(0.5 * (T - T.transpose(0, 2, 1)))
        # N_k = sum_{i<=j} (g_i g_j) Tsym[(i,j), k]: half the memory traffic of the full contraction
        self._pairs = np.triu_indices(self.size)
        Tsym = self.T + self.T.transpose(1, 0, 2)
        Tsym[np.arange(self.size), np.arange(self.size)] *= 0.5
        self._T_pairs = np.ascontiguousarray(Tsym[self._pairs])
        self.strain = W.T @ ops.strain @ W
        self.gradient = W.T @ ops.gradient @ W
        self.boundary_mass = W.T @ ops.boundary_mass @ W
        self.boundary_alpha = W.T @ ops.boundary_alpha @ W
        # eigen-coordinates of Y_1..Y_3 and the L2 pairings <u, Y_i> = g . pair[i]
        self.pair = ops.kernel @ ops.M @ W
        self.kernel = m_orthonormalize(ops.kernel, ops.M) @ ops.M @ W
        self.lambda_bound = ops.lambda_bound
        self.alpha_min = ops.alpha_min

    @property
    def lambda_max(self) -> float:
        return float(self.lam.max())

    def nonlinear(self, g: np.ndarray) -> np.ndarray:
        """``N(g)_k = sum_ij T[i,j,k] g_i g_j``."""
        return np.outer(g, g)[self._pairs] @ self._T_pairs

    def rhs(self, g: np.ndarray) -> np.ndarray:
        return -self.nonlinear(g) - self.nu * self.lam * g

    def dissipation_rates(self, g: np.ndarray) -> np.ndarray:
        """(|Su|^2, |Du|^2, int |u|^2 dS, int alpha |u|^2 dS)."""
        return np.array(
            [
                g @ self.strain @ g,
                g @ self.gradient @ g,
                g @ self.boundary_mass @ g,
                g @ self.boundary_alpha @ g,
            ]
        )

    def augmented_rhs(self, y: np.ndarray) -> np.ndarray:
        g = y[: self.size]
        return np.concatenate([self.rhs(g), self.dissipation_rates(g)])

    def project_kernel(self, g: np.ndarray) -> np.ndarray:
        return project_kernel(g, self.kernel, np.eye(self.size))

    def to_basis(self, g: np.ndarray) -> np.ndarray:
        """Coefficients in the original (unrotated) field basis."""
        return self.W @ g


def rhs(g: np.ndarray, system: GalerkinSystem) -> np.ndarray:
    return system.rhs(np.asarray(g, dtype=float))


def project_kernel(u: np.ndarray, kernel: np.ndarray, M: np.ndarray) -> np.ndarray:
    """M-orthogonal projection of ``u`` onto the span of the rows of ``kernel``."""
    K = m_orthonormalize(np.atleast_2d(kernel), M)
    return K.T @ (K @ M @ u)


@dataclass(frozen=True)
class SimulationState:
    t: float
    g: np.ndarray


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E: float
    Dsq: float
    Ssq: float
    bnd_alpha: float
    bnd_u2: float
    pairings: tuple[float, float, float]
    r_Su: float
    r_Du: float
    inst_rate: float
    E_dev: float


@dataclass
class TimeSeries:
    """Recorded states and diagnostics; ``integrals`` columns are the running
    time integrals of (Ssq, Dsq, bnd_u2, bnd_alpha) from t = 0."""

    t: np.ndarray
    g: np.ndarray
    diag: np.ndarray  # (n, 4) instantaneous Ssq, Dsq, bnd_u2, bnd_alpha
    integrals: np.ndarray  # (n, 4)
    pairings: np.ndarray
    target_state: np.ndarray
    nu: float
    lambda_bound: float
    alpha_min: float
    kernel: np.ndarray = field(repr=False)
    R: float = 1.0
    aborted: str = ""

    @property
    def E(self) -> np.ndarray:
        return np.einsum("ni,ni->n", self.g, self.g)

    @property
    def Ssq(self) -> np.ndarray:
        return self.diag[:, 0]

    @property
    def Dsq(self) -> np.ndarray:
        return self.diag[:, 1]

    @property
    def bnd_u2(self) -> np.ndarray:
        return self.diag[:, 2]

    @property
    def bnd_alpha(self) -> np.ndarray:
        return self.diag[:, 3]

    @property
    def E_dev(self) -> np.ndarray:
        d = self.g - self.target_state
        return np.einsum("ni,ni->n", d, d)

    def states(self):
        for t, g in zip(self.t, self.g):
            yield SimulationState(float(t), g)

    def inst_rate(self) -> np.ndarray:
        E = self.E
        if len(E) < 2 or np.any(E <= 0):
            return np.zeros_like(E)
        return -np.gradient(np.log(E), self.t)

    def records(self) -> list[DiagnosticsRecord]:
        res = energy_inequality_residuals(self)
        rate = self.inst_rate()
        E, Ed = self.E, self.E_dev
        return [
            DiagnosticsRecord(
                float(self.t[n]),
                float(E[n]),
                float(self.Dsq[n]),
                float(self.Ssq[n]),
                float(self.bnd_alpha[n]),
                float(self.bnd_u2[n]),
                tuple(float(p) for p in self.pairings[n]),
                float(res.r_su[n]),
                float(res.r_du[n]),
                float(rate[n]),
                float(Ed[n]),
            )
            for n in range(len(self.t))
        ]

    def table(self) -> np.ndarray:
        res = energy_inequality_residuals(self)
        return np.column_stack(
            [
                self.t,
                self.E,
                self.Dsq,
                self.Ssq,
                self.bnd_alpha,
                self.bnd_u2,
                self.pairings,
                res.r_su,
                res.r_du,
                self.inst_rate(),
                self.E_dev,
            ]
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.table():
                fh.write(",".join(f"{x:.16e}" for x in row) + "\n")


def initial_coefficients(config: SimulationConfig, system: GalerkinSystem) -> np.ndarray:
    ic = config.initial
    n = system.size
    if ic.kind == "field":
        names = {"Y1": 0, "Y2": 1, "Y3": 2}
        if ic.name not in names:
            raise ValueError(f"unknown named field {ic.name!r}")
        c = system.ops.kernel[names[ic.name]]
        return ic.amplitude * (system.W.T @ system.ops.M @ c)
    if ic.kind == "eigenmode":
        mode = ic.mode
        if mode < 0:
            mode = int(np.flatnonzero(np.abs(system.lam) > NULL_EIG_TOL)[0])
        g = np.zeros(n)
        g[mode] = ic.amplitude
        return g
    if ic.kind == "coefficients":
        g = np.zeros(n)
        vals = np.asarray(ic.coefficients, dtype=float)
        g[: vals.size] = vals
        return g
    if ic.kind == "random":
        rng = np.random.default_rng(config.seed)
        modes = n if ic.modes is None else min(ic.modes, n)
        g = np.zeros(n)
        g[:modes] = rng.standard_normal(modes)
        if ic.deflate_kernel:
            g -= system.project_kernel(g)
        if ic.add_field:
            # equal-energy mix of the random part and a unit rigid rotation
            rigid = initial_coefficients(
                SimulationConfig(initial=InitialCondition(kind="field", name=ic.add_field)), system
            )
            g = g / np.sqrt(g @ g) + rigid / np.sqrt(rigid @ rigid)
        return g * np.sqrt(ic.energy / (g @ g))
    raise ValueError(f"unknown initial condition kind {ic.kind!r}")


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk2(f, y, dt):
    k1 = f(y)
    k2 = f(y + dt * k1)
    return y + 0.5 * dt * (k1 + k2)


def integrate(
    config: SimulationConfig,
    ops: OperatorSet,
    system: Optional[GalerkinSystem] = None,
    g0: Optional[np.ndarray] = None,
    monotone_tol: float = 1e-6,
) -> TimeSeries:
    """Fixed-step Runge-Kutta trajectory with diagnostics every ``cadence`` steps."""
    system = system or GalerkinSystem(ops, config.nu, config.n_modes)
    config.validate(system.lambda_max)
    if config.target == "kernel" and not ops.alpha.is_zero:
        raise UnsupportedTargetError("decay to the rigid projection needs zero friction")
    n = system.size
    g = initial_coefficients(config, system) if g0 is None else np.asarray(g0, float)
    target = system.project_kernel(g) if config.target == "kernel" else np.zeros(n)
    step = _rk4 if config.integrator == "rk4" else _rk2
    n_steps = int(round(config.T / config.dt))

    y = np.concatenate([g, np.zeros(4)])
    times, gs, diags, ints = [], [], [], []

    def record(t, y):
        g = y[:n]
        times.append(t)
        gs.append(g.copy())
        diags.append(system.dissipation_rates(g))
        ints.append(y[n:].copy())

    def series(reason=""):
        return TimeSeries(
            t=np.array(times),
            g=np.array(gs),
            diag=np.array(diags),
            integrals=np.array(ints),
            pairings=np.array(gs) @ system.pair.T,
            target_state=target,
            nu=config.nu,
            lambda_bound=system.lambda_bound,
            alpha_min=system.alpha_min,
            kernel=system.kernel,
            R=ops.basis.R,
            aborted=reason,
        )

    record(0.0, y)
    E_prev = g @ g
    for k in range(1, n_steps + 1):
        y = step(system.augmented_rhs, y, config.dt)
        g = y[:n]
        E = g @ g
        if not np.all(np.isfinite(y)):
            record(k * config.dt, y)
            raise InstabilityError(f"non-finite state at step {k}", series("non-finite state"))
        if E > E_prev * (1.0 + monotone_tol) + 1e-300:
            record(k * config.dt, y)
            raise InstabilityError(
                f"energy grew by {(E - E_prev) / E_prev:.3e} at step {k}", series("energy growth")
            )
        E_prev = E
        if k % config.cadence == 0 or k == n_steps:
            record(k * config.dt, y)
    log.info("integrated %d steps of %d modes", n_steps, n)
    return series()


@dataclass(frozen=True)
class ResidualReport:
    """Energy-balance residuals.

    ``r_su[n]`` / ``r_du[n]`` cover the interval between records n-1 and n
    (zero for the first record); the ``*_all_pairs`` values are extremes over
    every recorded pair s < t.  ``r_du <= 0`` certifies the curvature-bound
    inequality.
    """

    r_su: np.ndarray
    r_du: np.ndarray
    max_abs_r_su_all_pairs: float
    max_r_du_all_pairs: float


def _max_increase(phi: np.ndarray) -> float:
    """``max_{s<t} phi(t) - phi(s)`` (or 0 for fewer than two samples)."""
    if phi.size < 2:
        return 0.0
    running_min = np.minimum.accumulate(phi)[:-1]
    return float(np.max(phi[1:] - running_min))


def _integrals(series: TimeSeries, quadrature: str) -> np.ndarray:
    if quadrature == "accumulated":
        return series.integrals
    if quadrature == "trapezoid":
        from scipy.integrate import cumulative_trapezoid

        return cumulative_trapezoid(series.diag, series.t, axis=0, initial=0.0)
    raise ValueError(f"unknown quadrature {quadrature!r}")


def energy_inequality_residuals(
    series: TimeSeries,
    nu: Optional[float] = None,
    lambda_bound: Optional[float] = None,
    quadrature: str = "accumulated",
) -> ResidualReport:
    nu = series.nu if nu is None else nu
    lam = series.lambda_bound if lambda_bound is None else lambda_bound
    I = _integrals(series, quadrature)
    E = series.E
    phi_su = E + 4 * nu * I[:, 0] + 2 * nu * I[:, 3]
    phi_du = E + 2 * nu * I[:, 1] - 2 * nu * (lam * I[:, 2] - I[:, 3])
    r_su = np.concatenate([[0.0], np.diff(phi_su)])
    r_du = np.concatenate([[0.0], np.diff(phi_du)])
    return ResidualReport(
        r_su=r_su,
        r_du=r_du,
        max_abs_r_su_all_pairs=float(phi_su.max() - phi_su.min()) if phi_su.size else 0.0,
        max_r_du_all_pairs=_max_increase(phi_du),
    )


@dataclass(frozen=True)
class ConvexCombinationReport:
    eta: float
    max_violation: float
    holds: bool


def convex_combination_check(
    series: TimeSeries,
    nu: Optional[float] = None,
    alpha_min: Optional[float] = None,
    lambda_bound: Optional[float] = None,
    tol: float = 1e-9,
    quadrature: str = "accumulated",
    eta: Optional[float] = None,
) -> ConvexCombinationReport:
    """Checks ``E(t) <= E(s) - 2 nu eta int Dsq - 4 nu (1 - eta) int Ssq`` on all pairs,
    with ``eta = min(min alpha / lambda_bound, 1/2)`` unless given."""
    nu = series.nu if nu is None else nu
    a_min = series.alpha_min if alpha_min is None else alpha_min
    lam = series.lambda_bound if lambda_bound is None else lambda_bound
    if a_min <= 0:
        raise ValueError("the convex-combination estimate needs a strictly positive friction")
    if eta is None:
        eta = min(a_min / lam, 0.5)
    I = _integrals(series, quadrature)
    psi = series.E + 2 * nu * eta * I[:, 1] + 4 * nu * (1 - eta) * I[:, 0]
    worst = _max_increase(psi)
    return ConvexCombinationReport(eta, worst, worst <= tol)


@dataclass(frozen=True)
class DecayReport:
    target: str
    predicted_rate: float
    fitted_rate: float
    max_bound_ratio: float
    window: tuple[float, float]
    slope_ok: bool
    bound_ok: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.slope_ok and self.bound_ok else "FAIL"


def decay_analysis(
    series: TimeSeries,
    target: str,
    predicted_rate: float,
    alpha_zero: bool = True,
    slope_rtol: float = 0.02,
    bound_rtol: float = 1e-6,
) -> DecayReport:
    """Fit the decay rate of ``|u - target|^2`` and check the exponential bound.

    ``target`` is ``zero`` or ``kernel`` (the rigid projection of ``u0``).
    """
    if target == "kernel":
        if not alpha_zero:
            raise UnsupportedTargetError("decay to the rigid projection is only claimed for zero friction")
        ref = project_kernel(series.g[0], series.kernel, np.eye(series.g.shape[1]))
    elif target == "zero":
        ref = np.zeros(series.g.shape[1])
    else:
        raise UnsupportedTargetError(f"unknown decay target {target!r}")
    d = series.g - ref
    E_dev = np.einsum("ni,ni->n", d, d)
    if E_dev[0] <= 0:
        raise WindowTooShortError("initial deviation from the target is zero")
    ratio = E_dev / E_dev[0]
    if ratio[-1] > 1e-4:
        raise WindowTooShortError(f"trajectory too short: final deviation ratio {ratio[-1]:.3e} > 1e-4")
    window = (ratio >= 1e-8) & (ratio <= 1e-1)
    if window.sum() < 3:
        raise WindowTooShortError("fewer than three samples inside the fit window")
    t = series.t[window]
    slope = np.polyfit(t, np.log(E_dev[window]), 1)[0]
    bound = np.exp(-predicted_rate * series.t)
    max_ratio = float(np.max(ratio / bound))
    return DecayReport(
        target=target,
        predicted_rate=float(predicted_rate),
        fitted_rate=float(-slope),
        max_bound_ratio=max_ratio,
        window=(float(t[0]), float(t[-1])),
        slope_ok=bool(slope <= -predicted_rate * (1 - slope_rtol)),
        bound_ok=bool(max_ratio <= 1 + bound_rtol),
    )
