"""Integral Gronwall inequality on sampled trajectories.

Hypothesis: ``y(t) <= y(s) - K * int_s^t y`` for every sampled pair ``s < t``.
Conclusion: ``y(t) <= y(0) * exp(-K t)``.  The hypothesis is required at all
sample pairs, which is stricter than an almost-everywhere statement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

RULES = ("trapezoid", "right")
REL_TOL = 1e-9


class GronwallError(ValueError):
    pass


@dataclass(frozen=True)
class SampledTrajectory:
    """Samples ``y(t_i)``.

    ``rule`` selects how ``int y`` is formed between samples: ``trapezoid``
    for smooth data, ``right`` for a staircase that takes the value at the
    right end of each step.
    """

    t: np.ndarray
    y: np.ndarray
    rule: str = "trapezoid"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if t.ndim != 1 or t.size == 0 or t.shape != y.shape:
            raise GronwallError("need matching non-empty 1-d arrays of times and values")
        if np.any(np.diff(t) <= 0):
            raise GronwallError("times must be strictly increasing")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise GronwallError("values must be finite and nonnegative")
        if self.rule not in RULES:
            raise GronwallError(f"integration rule must be one of {RULES}")

    def __len__(self) -> int:
        return self.t.size

    def cumulative_integral(self) -> np.ndarray:
        h = np.diff(self.t)
        if self.rule == "trapezoid":
            pieces = 0.5 * h * (self.y[1:] + self.y[:-1])
        else:
            pieces = h * self.y[1:]
        return np.concatenate([[0.0], np.cumsum(pieces)])

    def second_derivative_bound(self) -> float:
        """Max |y''| estimated from second divided differences (0 for < 3 samples)."""
        if len(self) < 3:
            return 0.0
        t, y = self.t, self.y
        d1 = np.diff(y) / np.diff(t)
        d2 = 2.0 * np.diff(d1) / (t[2:] - t[:-2])
        return float(np.max(np.abs(d2)))


@dataclass(frozen=True)
class HypothesisResult:
    holds: bool
    worst_margin: float  # max over pairs of lhs - rhs - tol; <= 0 when the hypothesis holds
    first_violation: Optional[tuple[float, float]] = None
    first_violation_margin: float = 0.0


def check_hypothesis(
    traj: SampledTrajectory,
    K: float,
    y2_bound: Optional[float] = None,
    rel_tol: float = REL_TOL,
) -> HypothesisResult:
    """Test the integral inequality on every pair ``i < j``.

    The tolerance is ``rel_tol * y(0)``, plus ``K * y2_bound * h^2 * (t_j - t_i) / 12``
    for the trapezoid rule when a bound on ``|y''|`` is supplied.
    """
    if K <= 0:
        raise GronwallError("K must be positive")
    t, y = traj.t, traj.y
    C = traj.cumulative_integral()
    base_tol = rel_tol * y[0]
    h = float(np.max(np.diff(t))) if len(traj) > 1 else 0.0
    slope_tol = 0.0
    if y2_bound is not None and traj.rule == "trapezoid":
        slope_tol = K * y2_bound * h * h / 12.0

    worst = -np.inf
    first = None
    first_margin = 0.0
    for i in range(len(traj) - 1):
        lhs = y[i + 1 :]
        rhs = y[i] - K * (C[i + 1 :] - C[i])
        tol = base_tol + slope_tol * (t[i + 1 :] - t[i])
        margin = lhs - rhs - tol
        k = int(np.argmax(margin))
        worst = max(worst, float(margin[k]))
        if first is None:
            bad = np.flatnonzero(margin > 0)
            if bad.size:
                j = i + 1 + int(bad[0])
                first = (float(t[i]), float(t[j]))
                first_margin = float(lhs[bad[0]] - rhs[bad[0]])
    if worst == -np.inf:
        worst = 0.0
    return HypothesisResult(first is None, worst, first, first_margin)


def staircase_bound(y0: float, K: float, delta: float, t):
    """``(1 + K delta)^(-t/delta) * (1 + K delta) * y0``."""
    q = 1.0 + K * delta
    return q ** (-np.asarray(t, dtype=float) / delta) * q * y0


def staircase_sequence(y0: float, K: float, delta: float, n: int) -> SampledTrajectory:
    """The extremal staircase ``y_m = y0 / (1 + K delta)^m`` on ``t_m = m delta``."""
    m = np.arange(n + 1)
    return SampledTrajectory(m * delta, y0 * (1.0 + K * delta) ** (-m.astype(float)), rule="right")


@dataclass(frozen=True)
class GronwallReport:
    K: float
    hypothesis: HypothesisResult
    bound_ok: bool
    worst_margin: float  # max_j y(t_j) e^{K t_j} / y(0)
    delta: float
    theta: float

    @property
    def hypothesis_ok(self) -> bool:
        return self.hypothesis.holds

    @property
    def certified(self) -> bool:
        return self.hypothesis_ok and self.bound_ok

    def as_dict(self) -> dict:
        s, t = self.hypothesis.first_violation or (float("nan"), float("nan"))
        return {
            "K": self.K,
            "hypothesis_ok": self.hypothesis_ok,
            "bound_ok": self.bound_ok,
            "worst_margin": self.worst_margin,
            "first_violation_s": s,
            "first_violation_t": t,
            "hypothesis_worst_margin": self.hypothesis.worst_margin,
            "staircase_delta": self.delta,
            "staircase_theta": self.theta,
        }

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def write_csv(self, path) -> None:
        row = self.as_dict()
        cols = ["K", "hypothesis_ok", "bound_ok", "worst_margin", "first_violation_s", "first_violation_t"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            w.writerow([_fmt(row[c]) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.16e}"
    return str(v)


def certify_exponential(
    traj: SampledTrajectory,
    K: float,
    hypothesis: Optional[HypothesisResult] = None,
    rel_tol: float = REL_TOL,
    y2_bound: Optional[float] = None,
) -> GronwallReport:
    """Check ``y(t_j) <= y(0) e^{-K t_j} (1 + rel_tol)``.

    The hypothesis is checked first (unless passed in); a failed hypothesis
    means the conclusion is not certified and ``bound_ok`` is reported False.
    """
    hyp = hypothesis or check_hypothesis(traj, K, y2_bound=y2_bound)
    t, y = traj.t, traj.y
    delta = float(np.min(np.diff(t))) if len(traj) > 1 else 0.0
    theta = 1.0 / (1.0 + K * delta)
    if y[0] == 0:
        ratio = 0.0 if np.all(y == 0) else np.inf
    else:
        ratio = float(np.max(y * np.exp(K * (t - t[0])) / y[0]))
    bound_ok = hyp.holds and ratio <= 1.0 + rel_tol
    return GronwallReport(K, hyp, bound_ok, ratio, delta, theta)


def read_series(path, column: str = "E_dev", time_column: str = "t", rule: str = "trapezoid") -> SampledTrajectory:
    """Load one column of a time-series CSV (selected by header name)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames or time_column not in reader.fieldnames:
            raise GronwallError(f"column {column!r} or {time_column!r} not found in {path}")
        rows = [(float(r[time_column]), float(r[column])) for r in reader]
    if not rows:
        raise GronwallError(f"{path} has no data rows")
    t, y = map(np.array, zip(*rows))
    return SampledTrajectory(t, y, rule=rule)
