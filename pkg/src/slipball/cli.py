"""Command-line experiment runner.

Subcommands ``geometry``, ``spectrum``, ``simulate`` and ``verify``.  Every run
writes key = value reports, CSV tables, optional SVG figures and a
``manifest.json`` listing each file with its sha256.

Exit codes: 0 ok, 2 config/usage error, 3 geometry failure, 4 eigensolver
failure, 5 decay check failed, 6 instability abort, 7 Gronwall hypothesis
violated, 8 Gronwall bound violated.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .basis import Basis, BasisSizeError
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import (
    GalerkinSystem,
    InstabilityError,
    StabilityGuardError,
    UnsupportedTargetError,
    WindowTooShortError,
    convex_combination_check,
    decay_analysis,
    energy_inequality_residuals,
    integrate,
)
from .geometry import GeometryError, NonTangentError, OffSurfaceError, curvature_extrema, ker_s_classification
from .gronwall import GronwallError, certify_exponential, check_hypothesis, read_series
from .operators import (
    EigenSolverError,
    KernelDeflationError,
    NegativeFrictionError,
    UnsupportedGeometryError,
    build_operator_set,
)

log = logging.getLogger("slipball")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_EIGEN = 4
EXIT_DECAY = 5
EXIT_INSTABILITY = 6
EXIT_HYPOTHESIS = 7
EXIT_BOUND = 8

DU_INEQUALITY_TOL = 1e-9
MANIFEST = "manifest.json"


class RunFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- output helpers ------------------------------------------------------


@contextlib.contextmanager
def _atomic(path: Path):
    """Yield a temporary path in the target directory, renamed onto ``path`` on success."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_text(path: Path, text: str) -> None:
    with _atomic(path) as tmp:
        tmp.write_text(text)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _kv(pairs: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs.items())


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


class Run:
    """Bookkeeping for one subcommand invocation in an output directory."""

    def __init__(self, command: str, out_dir: Path, config: ExperimentConfig | None):
        self.command = command
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.files: list[str] = []
        self.constants: dict = {}
        self.results: dict = {}
        self.errors: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        _write_text(path, text)
        self._track(name)
        return path

    def write_with(self, name: str, writer) -> Path:
        path = self.out / name
        with _atomic(path) as tmp:
            writer(tmp)
        self._track(name)
        return path

    def _track(self, name: str) -> None:
        if name not in self.files:
            self.files.append(name)

    def finish(self, code: int) -> int:
        path = self.out / MANIFEST
        manifest = {"version": __version__, "commands": {}}
        if path.is_file():
            try:
                old = json.loads(path.read_text())
                manifest["commands"] = old.get("commands", {})
            except (OSError, ValueError):
                pass
        manifest["commands"][self.command] = {
            "config": self.config.echo() if self.config else None,
            "config_source": self.config.source if self.config else None,
            "constants": self.constants,
            "results": self.results,
            "errors": self.errors,
            "exit_code": code,
            "files": self.files,
        }
        inventory = {}
        for cmd in manifest["commands"].values():
            for name in cmd.get("files", []):
                p = self.out / name
                if p.is_file():
                    inventory[name] = _sha256(p)
        manifest["files"] = dict(sorted(inventory.items()))
        _write_text(path, json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        return code


# -- subcommands ---------------------------------------------------------


def _ball_operators(cfg: ExperimentConfig, advection: bool):
    geom = cfg.geometry()
    if geom.kind != "ball" or np.any(geom.center != 0):
        raise RunFailure(EXIT_GEOMETRY, "the solver path needs a ball centered at the origin")
    basis = Basis(cfg.radius, cfg.l_max, cfg.n_max)
    ops = build_operator_set(basis, cfg.friction(), geom, advection=advection,
                             quadrature_scale=cfg.quadrature_scale)
    return basis, ops


def _derived_constants(ops, nu: float) -> dict:
    c = ops.constants()
    c["first_nonzero_eigenvalue"] = ops.first_nonzero_eigenvalue()
    c["lambda_max"] = float(ops.eig.values.max())
    c["nu"] = nu
    if ops.alpha_min > 0:
        c["eta"] = min(ops.alpha_min / ops.lambda_bound, 0.5)
    return c


def cmd_geometry(run: Run, args) -> int:
    geom = run.config.geometry()
    cls = ker_s_classification(geom)
    ext = curvature_extrema(geom)
    report = {
        "kind": geom.kind,
        "ker_s_dimension": cls.dimension,
        "center": cls.center,
        "axis": cls.axis if cls.axis is not None else "none",
        "axis_point": cls.axis_point if cls.axis_point is not None else "none",
        "lambda_bound": ext["lambda_bound"],
        "k_min": ext["k_min"],
        "k_max": ext["k_max"],
        "resolution": geom.resolution,
    }
    for i, w in enumerate(cls.generators, 1):
        report[f"generator_{i}_a"] = w.a
        report[f"generator_{i}_b"] = w.b
    text = _kv(report)
    run.write("geometry_report.txt", text)
    run.constants.update(lambda_bound=ext["lambda_bound"], ker_s_dimension=cls.dimension)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_spectrum(run: Run, args) -> int:
    cfg = run.config
    basis, ops = _ball_operators(cfg, advection=False)
    consts = _derived_constants(ops, cfg.nu)
    if cfg.refine_check != "none":
        l_ref = cfg.l_max + 1 if cfg.refine_check == "next" else 2 * cfg.l_max
        ref = build_operator_set(Basis(cfg.radius, l_ref, cfg.n_max), cfg.friction(), ops.geometry, advection=False)
        drift = abs(ref.poincare.mu1 - ops.poincare.mu1) / ops.poincare.mu1
        consts.update(refined_l_max=l_ref, mu1_refined=ref.poincare.mu1, mu1_drift=drift)
        log.info("mu1 %.10g -> %.10g at l_max=%d (relative change %.3e)", ops.poincare.mu1, ref.poincare.mu1, l_ref, drift)
        if drift > 0.05:
            log.warning("mu1 moved by %.2f%% under refinement", 100 * drift)
    vals = ops.eig.values
    null = np.abs(vals) <= 1e-9
    lines = ["index,eigenvalue,null"] + [f"{i},{v:.16e},{int(n)}" for i, (v, n) in enumerate(zip(vals, null))]
    run.write("spectrum.csv", "\n".join(lines) + "\n")
    text = _kv(consts)
    run.write("constants.txt", text)
    run.constants.update(consts)
    if cfg.plot:
        from .plotting import spectrum_plot

        run.write_with("spectrum.svg", lambda p: spectrum_plot(vals, p))
    sys.stdout.write(text)
    return EXIT_OK


def _predicted_rate(cfg: ExperimentConfig, ops, target: str):
    """(rate, provenance) from the operators of this run; ``None`` when nothing is claimed."""
    choice = cfg.predicted_rate
    nu = cfg.nu
    if choice == "auto":
        if target == "kernel" or (target == "zero" and ops.alpha.is_zero):
            choice = "korn"
        elif ops.alpha_min > 0:
            choice = "friction"
        else:
            return None, "none"
    if choice == "korn":
        return 4 * nu * ops.poincare.mu1, "4*nu*mu1"
    if choice == "friction":
        return 2 * nu * ops.sigma1, "2*nu*sigma1"
    return 2 * nu * ops.first_nonzero_eigenvalue(), "2*nu*lambda1"


def cmd_simulate(run: Run, args) -> int:
    cfg = run.config
    sim = cfg.simulation()
    basis, ops = _ball_operators(cfg, advection=True)
    system = GalerkinSystem(ops, sim.nu, sim.n_modes)
    consts = _derived_constants(ops, sim.nu)
    rate, provenance = _predicted_rate(cfg, ops, sim.target)
    consts.update(predicted_rate=rate, predicted_rate_formula=provenance, n_modes=system.size)
    run.constants.update(consts)

    code = EXIT_OK
    try:
        series = integrate(sim, ops, system)
    except InstabilityError as exc:
        run.errors.append(str(exc))
        if exc.series is not None:
            run.write_with("timeseries.csv", exc.series.write_csv)
        sys.stdout.write(f"instability = {exc}\n")
        return EXIT_INSTABILITY
    run.write_with("timeseries.csv", series.write_csv)

    res = energy_inequality_residuals(series)
    g0 = series.g[0]
    norm0 = float(np.sqrt(g0 @ g0)) or 1.0
    pair_norms = np.sqrt(np.einsum("ij,ij->i", system.pair, system.pair))
    dp = np.abs(series.pairings - series.pairings[0]) / (norm0 * pair_norms)
    E = series.E
    summary = {
        "steps": int(round(sim.T / sim.dt)),
        "samples": len(series.t),
        "E0": E[0],
        "E_final": E[-1],
        "max_abs_r_Su": res.max_abs_r_su_all_pairs,
        "max_r_Du": res.max_r_du_all_pairs,
        "du_inequality_ok": res.max_r_du_all_pairs <= DU_INEQUALITY_TOL,
        "max_energy_increase": float(np.max(np.diff(E), initial=0.0)),
        "pairing_drift": float(dp.max()),
        "state_drift": float(np.max(np.linalg.norm(series.g - g0, axis=1)) / norm0),
    }
    if ops.alpha_min > 0:
        cc = convex_combination_check(series)
        summary.update(eta=cc.eta, convex_max_violation=cc.max_violation, convex_ok=cc.holds)

    if sim.target != "none":
        if rate is None:
            summary["decay_verdict"] = "not claimed"
        else:
            try:
                rep = decay_analysis(series, sim.target, rate, alpha_zero=ops.alpha.is_zero,
                                     slope_rtol=cfg.slope_rtol)
                summary.update(
                    decay_target=rep.target,
                    predicted_rate=rep.predicted_rate,
                    fitted_rate=rep.fitted_rate,
                    fit_window=rep.window,
                    max_bound_ratio=rep.max_bound_ratio,
                    slope_ok=rep.slope_ok,
                    bound_ok=rep.bound_ok,
                    decay_verdict=rep.verdict,
                )
                if rep.verdict != "PASS":
                    code = EXIT_DECAY
            except WindowTooShortError as exc:
                summary["decay_verdict"] = f"FAIL ({exc})"
                run.errors.append(str(exc))
                code = EXIT_DECAY
    if cfg.plot:
        from .plotting import decay_plot

        run.write_with("decay.svg", lambda p: decay_plot(series.t, series.E_dev, rate, p))
    text = _kv(summary)
    run.write("summary.txt", text)
    run.results.update(summary)
    sys.stdout.write(text)
    return code


def _manifest_rate(directory: Path):
    path = directory / MANIFEST
    if not path.is_file():
        return None
    data = json.loads(path.read_text())
    rate = data.get("commands", {}).get("simulate", {}).get("constants", {}).get("predicted_rate")
    return float(rate) if isinstance(rate, (int, float)) else None


def cmd_verify(run: Run, args) -> int:
    series_path = Path(args.series) if args.series else run.out / "timeseries.csv"
    if not series_path.is_file():
        raise RunFailure(EXIT_CONFIG, f"time series {series_path} not found")
    K = args.K if args.K is not None else _manifest_rate(series_path.parent)
    if K is None:
        raise RunFailure(EXIT_CONFIG, "no --K given and no predicted_rate in the series manifest")
    traj = read_series(series_path, column=args.column, rule=args.rule)
    y2 = None if args.no_allowance else traj.second_derivative_bound()
    hyp = check_hypothesis(traj, K, y2_bound=y2)
    report = certify_exponential(traj, K, hypothesis=hyp)
    info = report.as_dict()
    info.update(series=str(series_path), column=args.column, rule=args.rule,
                y2_allowance=y2 if y2 is not None else "off")
    text = _kv(info)
    run.write("gronwall_report.txt", text)
    run.write_with("gronwall.csv", report.write_csv)
    if run.config is not None and run.config.plot:
        from .plotting import gronwall_plot

        run.write_with("gronwall.svg", lambda p: gronwall_plot(traj.t, traj.y, K, p))
    run.constants["K"] = K
    run.results.update(info)
    sys.stdout.write(text)
    if not report.hypothesis_ok:
        return EXIT_HYPOTHESIS
    if not report.bound_ok:
        return EXIT_BOUND
    return EXIT_OK


COMMANDS = {
    "geometry": cmd_geometry,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI file or bundled config name")
    common.add_argument("--out", help="output directory (overrides [output] directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    common.add_argument("--plot", action="store_true", help="write SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="slipball", parents=[common], description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("geometry", parents=[common], help="classify rigid rotations tangent to the boundary")
    sub.add_parser("spectrum", parents=[common], help="Stokes spectrum and Poincare constants")
    sub.add_parser("simulate", parents=[common], help="integrate the Galerkin system")
    p = sub.add_parser("verify", parents=[common], help="integral Gronwall check of a time series")
    p.add_argument("series", nargs="?", help="time-series CSV (default: OUT/timeseries.csv)")
    p.add_argument("--K", type=float, default=None, help="decay rate (default: manifest predicted_rate)")
    p.add_argument("--column", default="E_dev", help="column to test (default: E_dev)")
    p.add_argument("--rule", choices=("trapezoid", "right"), default="trapezoid")
    p.add_argument("--no-allowance", action="store_true", help="drop the trapezoid curvature allowance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_arg = getattr(args, "config", None)
    run = None
    try:
        cfg = None
        if config_arg is not None or args.command != "verify":
            cfg = load_config(config_arg).with_overrides(
                out=getattr(args, "out", None), seed=getattr(args, "seed", None), plot=getattr(args, "plot", False)
            )
            out = cfg.out_dir
        else:
            out = Path(getattr(args, "out", None) or (Path(args.series).parent if args.series else "out"))
            if getattr(args, "plot", False):
                cfg = load_config(None).with_overrides(out=str(out), plot=True)
        run = Run(args.command, Path(out), cfg)
        code = COMMANDS[args.command](run, args)
    except (ConfigError, StabilityGuardError, NegativeFrictionError, UnsupportedTargetError,
            BasisSizeError, GronwallError) as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except (GeometryError, OffSurfaceError, NonTangentError, UnsupportedGeometryError) as exc:
        code, msg = EXIT_GEOMETRY, str(exc)
    except (EigenSolverError, KernelDeflationError) as exc:
        code, msg = EXIT_EIGEN, str(exc)
    except RunFailure as exc:
        code, msg = exc.code, str(exc)
    else:
        return run.finish(code)
    print(f"error: {msg}", file=sys.stderr)
    if run is not None:
        run.errors.append(msg)
        run.finish(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
