"""Strict INI experiment configuration.

Every section and key is listed in ``SCHEMA`` with its default; anything else
is rejected so that a typo can never fall back silently to a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .dynamics import InitialCondition, SimulationConfig
from .geometry import DEFAULT_RESOLUTION, GeometryDescriptor, GeometryError, Profile
from .operators import FrictionSpec

SCHEMA: dict[str, dict[str, str]] = {
    "geometry": {
        "kind": "ball",  # ball | spheroid | ellipsoid | revolution
        "R": "1.0",
        "semi_axes": "1.0, 1.0, 1.0",  # spheroid uses (a, c) or (a, a, c)
        "center": "0.0, 0.0, 0.0",
        "axis": "0.0, 0.0, 1.0",
        "profile": "",  # rho(z) for solids of revolution
        "z_range": "-1.0, 1.0",
        "resolution": f"{DEFAULT_RESOLUTION[0]}, {DEFAULT_RESOLUTION[1]}",
    },
    "discretization": {
        "l_max": "4",
        "n_max": "2",
        "n_modes": "",  # blank: keep every eigenmode
        "quadrature_scale": "1.0",  # >= 1 multiplies the exact quadrature orders
        "refine_check": "none",  # none | next | double
    },
    "physics": {
        "nu": "0.1",
        "alpha": "0",  # constant or expression in theta (boundary colatitude)
    },
    "run": {
        "initial": "random",  # random | field | eigenmode | coefficients
        "field": "Y3",
        "amplitude": "1.0",
        "mode": "-1",
        "coefficients": "",
        "energy": "1.0",
        "modes": "",
        "deflate_kernel": "false",
        "add_field": "",
        "dt": "1e-3",
        "T": "1.0",
        "integrator": "rk4",
        "seed": "0",
        "cadence": "1",
        "target": "none",  # none | zero | kernel
        "predicted_rate": "auto",  # auto | korn | friction | linear
        "slope_rtol": "0.02",
    },
    "output": {
        "directory": "out",
        "plot": "false",
    },
}

PREDICTED_RATES = ("auto", "korn", "friction", "linear")
REFINE_CHECKS = ("none", "next", "double")


class ConfigError(ValueError):
    pass


def _floats(text: str, n: Optional[int] = None) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> Optional[int]:
    return int(text) if text.strip() else None


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(repr=False)
    source: str = "<defaults>"

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    # -- geometry ------------------------------------------------------
    def geometry(self) -> GeometryDescriptor:
        g = self.values["geometry"]
        kind = g["kind"].strip()
        center = _floats(g["center"], 3)
        res = tuple(int(v) for v in _floats(g["resolution"], 2))
        axis = _floats(g["axis"], 3)
        if kind == "ball":
            return GeometryDescriptor.ball(float(g["R"]), center, res)
        if kind == "spheroid":
            ax = _floats(g["semi_axes"])
            if len(ax) == 3 and ax[0] != ax[1]:
                raise ValueError("spheroid semi-axes must have two equal entries (a, a, c)")
            a, c = (ax[0], ax[-1]) if len(ax) in (2, 3) else (None, None)
            if a is None:
                raise ValueError("spheroid needs semi_axes = a, c")
            return GeometryDescriptor.spheroid(a, c, axis, center, res)
        if kind == "ellipsoid":
            a, b, c = _floats(g["semi_axes"], 3)
            return GeometryDescriptor.ellipsoid(a, b, c, center, resolution=res)
        if kind == "revolution":
            if not g["profile"].strip():
                raise ValueError("revolution geometry needs a profile expression rho(z)")
            z0, z1 = _floats(g["z_range"], 2)
            return GeometryDescriptor.revolution(Profile.from_expression(g["profile"], z0, z1), axis, center, res)
        raise ValueError(f"unknown geometry kind {kind!r}")

    # -- discretization / physics -------------------------------------
    @property
    def l_max(self) -> int:
        return int(self.values["discretization"]["l_max"])

    @property
    def n_max(self) -> int:
        return int(self.values["discretization"]["n_max"])

    @property
    def n_modes(self) -> Optional[int]:
        return _opt_int(self.values["discretization"]["n_modes"])

    @property
    def quadrature_scale(self) -> float:
        return float(self.values["discretization"]["quadrature_scale"])

    @property
    def refine_check(self) -> str:
        return self.values["discretization"]["refine_check"].strip()

    @property
    def nu(self) -> float:
        return float(self.values["physics"]["nu"])

    def friction(self) -> FrictionSpec:
        return FrictionSpec.parse(self.values["physics"]["alpha"])

    @property
    def radius(self) -> float:
        return float(self.values["geometry"]["R"])

    # -- run -----------------------------------------------------------
    @property
    def predicted_rate(self) -> str:
        return self.values["run"]["predicted_rate"].strip()

    @property
    def slope_rtol(self) -> float:
        return float(self.values["run"]["slope_rtol"])

    @property
    def seed(self) -> int:
        return int(self.values["run"]["seed"])

    def initial_condition(self) -> InitialCondition:
        r = self.values["run"]
        return InitialCondition(
            kind=r["initial"].strip(),
            name=r["field"].strip(),
            amplitude=float(r["amplitude"]),
            mode=int(r["mode"]),
            coefficients=_floats(r["coefficients"]),
            energy=float(r["energy"]),
            modes=_opt_int(r["modes"]),
            deflate_kernel=_bool(r["deflate_kernel"]),
            add_field=r["add_field"].strip(),
        )

    def simulation(self) -> SimulationConfig:
        r = self.values["run"]
        return SimulationConfig(
            nu=self.nu,
            alpha=self.friction(),
            R=self.radius,
            l_max=self.l_max,
            n_max=self.n_max,
            n_modes=self.n_modes,
            initial=self.initial_condition(),
            dt=float(r["dt"]),
            T=float(r["T"]),
            integrator=r["integrator"].strip(),
            cadence=int(r["cadence"]),
            seed=self.seed,
            target=r["target"].strip(),
        )

    # -- output --------------------------------------------------------
    @property
    def out_dir(self) -> Path:
        return Path(self.values["output"]["directory"])

    @property
    def plot(self) -> bool:
        return _bool(self.values["output"]["plot"])

    def with_overrides(self, out: Optional[str] = None, seed: Optional[int] = None, plot: bool = False):
        vals = {s: dict(kv) for s, kv in self.values.items()}
        if out is not None:
            vals["output"]["directory"] = str(out)
        if seed is not None:
            vals["run"]["seed"] = str(seed)
        if plot:
            vals["output"]["plot"] = "true"
        return ExperimentConfig(vals, self.source)

    def echo(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}

    def validate(self) -> None:
        """Parse every field once so type errors surface before any work starts."""
        self.geometry()
        if self.l_max < 1 or self.n_max < 0:
            raise ValueError("need l_max >= 1 and n_max >= 0")
        if self.quadrature_scale < 1.0:
            raise ValueError("quadrature_scale must be >= 1")
        if self.refine_check not in REFINE_CHECKS:
            raise ValueError(f"refine_check must be one of {REFINE_CHECKS}")
        if self.predicted_rate not in PREDICTED_RATES:
            raise ValueError(f"predicted_rate must be one of {PREDICTED_RATES}")
        self.simulation().validate()
        self.friction()
        _bool(self.values["output"]["plot"])


def _parse_text(text: str, source: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (R, T)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {s: dict(kv) for s, kv in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, val in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            values[section][key] = val
    cfg = ExperimentConfig(values, source)
    try:
        cfg.validate()
    except (ConfigError, GeometryError):
        raise  # an invalid shape is a geometry failure, not a parse failure
    except Exception as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def bundled_configs() -> list[str]:
    root = resources.files("slipball") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(path_or_name) -> ExperimentConfig:
    """Read a config file, or a bundled config by bare name."""
    if path_or_name is None:
        return _parse_text("", "<defaults>")
    path = Path(path_or_name)
    if path.is_file():
        return _parse_text(path.read_text(), str(path))
    name = path.name[:-4] if path.name.endswith(".ini") else path.name
    res = resources.files("slipball") / "configs" / f"{name}.ini"
    if res.is_file():
        return _parse_text(res.read_text(), f"bundled:{name}")
    raise ConfigError(f"config {path_or_name!r} not found (bundled: {', '.join(bundled_configs())})")
