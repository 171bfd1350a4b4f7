"""Run configuration: INI-style ``key = value`` sections with typed values.

Sections and keys (defaults in brackets)::

    [grid]        dim [2], n [16], L [1.0]
    [physics]     mu [1.0], lambda [0.0], kappa [1.0], gamma [1.4]
    [scheme]      dt [h^2], eps [h^2], alpha [0.0], tol_newton [1e-11],
                  max_newton [30], t_end [10 dt]
    [geometry]    shape [ball], center [0.5, ...], radius [0.25], radii, half_widths,
                  rho_s [1.0], theta_b [1.0], theta_b_gradient [0, ...]
    [initial]     preset [gaussian-bump], rho [1.0], theta [theta_b], amplitude [0.3],
                  width [0.1], velocity [0.5], rho_min, modes [2]
    [diagnostics] enabled [true], check [true]
    [output]      dir [output], csv [diagnostics.csv], snapshot_every [0]
    [run]         seed [0]
    [study]       n_list [8, 16, 32], n_ref [128], t_end [1/64], dt_coeff [1.0],
                  dt_power [2.0], eps_coeff [1.0], eps_power [2.0], reference

Unset ``dt``/``eps``/``t_end`` resolve to the bracketed expressions, and
serialization writes the resolved values.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import ShapeError, extend_initial_data, make_shape
from .mesh import MeshError, build_grid, split_domain
from .presets import PRESETS, initial_data
from .scheme import SchemeParams, step_count


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _float(s: str) -> float:
    s = s.strip()
    if "/" in s:
        return float(Fraction(s))
    return float(s)


def _int(s: str) -> int:
    v = _float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _floats(s: str) -> tuple:
    return tuple(_float(x) for x in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(_int(x) for x in s.replace(",", " ").split())


def _str(s: str) -> str:
    return s.strip()


# (section, key, attribute, parser); order fixes serialization order
SCHEMA = (
    ("grid", "dim", "dim", _int),
    ("grid", "n", "n", _int),
    ("grid", "L", "L", _float),
    ("physics", "mu", "mu", _float),
    ("physics", "lambda", "lam", _float),
    ("physics", "kappa", "kappa", _float),
    ("physics", "gamma", "gamma", _float),
    ("scheme", "dt", "dt", _float),
    ("scheme", "eps", "eps", _float),
    ("scheme", "alpha", "alpha", _float),
    ("scheme", "tol_newton", "tol_newton", _float),
    ("scheme", "max_newton", "max_newton", _int),
    ("scheme", "t_end", "t_end", _float),
    ("geometry", "shape", "shape", _str),
    ("geometry", "center", "center", _floats),
    ("geometry", "radius", "radius", _float),
    ("geometry", "radii", "radii", _floats),
    ("geometry", "half_widths", "half_widths", _floats),
    ("geometry", "rho_s", "rho_s", _float),
    ("geometry", "theta_b", "theta_b", _float),
    ("geometry", "theta_b_gradient", "theta_b_gradient", _floats),
    ("initial", "preset", "preset", _str),
    ("initial", "rho", "rho0", _float),
    ("initial", "theta", "theta0", _float),
    ("initial", "amplitude", "amplitude", _float),
    ("initial", "width", "width", _float),
    ("initial", "velocity", "velocity", _float),
    ("initial", "rho_min", "rho_min", _float),
    ("initial", "modes", "modes", _int),
    ("diagnostics", "enabled", "diagnostics", _bool),
    ("diagnostics", "check", "check", _bool),
    ("output", "dir", "output_dir", _str),
    ("output", "csv", "csv_name", _str),
    ("output", "snapshot_every", "snapshot_every", _int),
    ("run", "seed", "seed", _int),
    ("study", "n_list", "n_list", _ints),
    ("study", "n_ref", "n_ref", _int),
    ("study", "t_end", "study_t_end", _float),
    ("study", "dt_coeff", "dt_coeff", _float),
    ("study", "dt_power", "dt_power", _float),
    ("study", "eps_coeff", "eps_coeff", _float),
    ("study", "eps_power", "eps_power", _float),
    ("study", "reference", "reference", _str),
)
_BY_KEY = {(s, k): (a, p) for s, k, a, p in SCHEMA}


@dataclass
class RunConfig:
    dim: int = 2
    n: int = 16
    L: float = 1.0
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    gamma: float = 1.4
    dt: float | None = None
    eps: float | None = None
    alpha: float = 0.0
    tol_newton: float = 1e-11
    max_newton: int = 30
    t_end: float | None = None
    shape: str = "ball"
    center: tuple | None = None
    radius: float | None = 0.25
    radii: tuple | None = None
    half_widths: tuple | None = None
    rho_s: float = 1.0
    theta_b: float = 1.0
    theta_b_gradient: tuple | None = None
    preset: str = "gaussian-bump"
    rho0: float = 1.0
    theta0: float | None = None
    amplitude: float = 0.3
    width: float = 0.1
    velocity: float = 0.5
    rho_min: float | None = None
    modes: int = 2
    diagnostics: bool = True
    check: bool = True
    output_dir: str = "output"
    csv_name: str = "diagnostics.csv"
    snapshot_every: int = 0
    seed: int = 0
    n_list: tuple = (8, 16, 32)
    n_ref: int = 128
    study_t_end: float = 1.0 / 64
    dt_coeff: float = 1.0
    dt_power: float = 2.0
    eps_coeff: float = 1.0
    eps_power: float = 2.0
    reference: str | None = None

    def resolve(self) -> "RunConfig":
        """Fill the grid-dependent defaults."""
        h = self.L / self.n if self.n else 1.0
        if self.dt is None:
            self.dt = h * h
        if self.eps is None:
            self.eps = h * h
        if self.t_end is None:
            self.t_end = 10 * self.dt
        if self.center is None:
            self.center = (0.5 * self.L,) * self.dim
        if self.theta_b_gradient is None:
            self.theta_b_gradient = (0.0,) * self.dim
        if self.theta0 is None:
            self.theta0 = self.theta_b
        return self

    # -- derived objects --

    @property
    def h(self) -> float:
        return self.L / self.n

    def scheme_params(self) -> SchemeParams:
        return SchemeParams(dt=self.dt, h=self.h, eps=self.eps, alpha=self.alpha, mu=self.mu, lam=self.lam,
                            kappa=self.kappa, gamma=self.gamma, tol_newton=self.tol_newton,
                            max_newton=self.max_newton)

    def shape_spec(self) -> dict:
        spec = {"kind": self.shape}
        if self.shape in ("ball", "ellipsoid", "box"):
            spec["center"] = list(self.center)
            if self.shape == "ball":
                spec["radius"] = self.radius
            elif self.shape == "ellipsoid":
                spec["radii"] = list(self.radii or ())
            else:
                spec["half_widths"] = list(self.half_widths or ())
        return spec

    def theta_b_fn(self):
        g = np.asarray(self.theta_b_gradient, dtype=float)
        c = np.full(self.dim, 0.5 * self.L)
        if not np.any(g):
            return self.theta_b
        base = self.theta_b

        def tb(x):
            shp = (-1,) + (1,) * (x.ndim - 1)
            return base + np.sum(g.reshape(shp) * (x - c.reshape(shp)), axis=0)

        return tb

    def preset_args(self) -> dict:
        args = dict(rho=self.rho0, theta=self.theta0, amplitude=self.amplitude, width=self.width,
                    velocity=self.velocity, rho_min=self.rho_min, seed=self.seed, modes=self.modes, L=self.L)
        return args

    def build(self):
        """Grid, mask, params, extended data."""
        grid = build_grid(self.dim, self.n, self.L)
        shape = make_shape(self.shape_spec())
        mask = split_domain(grid, shape)
        fluid = initial_data(self.preset, self.dim, self.center, **self.preset_args())
        ext = extend_initial_data(fluid, self.rho_s, self.theta_b_fn(), shape, self.dim)
        return grid, mask, self.scheme_params(), ext

    def sweep_spec(self):
        from .experiments import SweepSpec

        return SweepSpec(
            n_list=tuple(self.n_list), n_ref=self.n_ref, dim=self.dim, L=self.L, shape=self.shape_spec(),
            preset=self.preset, preset_args={k: v for k, v in self.preset_args().items() if k not in ("theta", "L")},
            rho_s=self.rho_s, theta_b=self.theta_b, mu=self.mu, lam=self.lam, kappa=self.kappa,
            gamma=self.gamma, alpha=self.alpha, dt_coeff=self.dt_coeff, dt_power=self.dt_power,
            eps_coeff=self.eps_coeff, eps_power=self.eps_power, t_end=self.study_t_end,
            tol_newton=self.tol_newton, max_newton=self.max_newton,
        )

    # -- validation --

    def errors(self) -> list[str]:
        errs = []
        if self.dim not in (2, 3):
            errs.append(f"grid.dim must be 2 or 3, got {self.dim}")
        if self.n < 4:
            errs.append(f"grid.n must be >= 4, got {self.n}")
        if not self.L > 0:
            errs.append("grid.L must be positive")
        if errs:
            return errs
        errs.extend(self.scheme_params().errors())
        if self.t_end < 0:
            errs.append("t_end must be non-negative")
        elif self.dt > 0:
            try:
                step_count(self.t_end, self.dt)
            except ValueError as exc:
                errs.append(str(exc))
        if self.preset not in PRESETS:
            errs.append(f"unknown initial preset {self.preset!r}; expected one of {PRESETS}")
        if len(self.center) != self.dim:
            errs.append("geometry.center must have dim entries")
        if len(self.theta_b_gradient) != self.dim:
            errs.append("geometry.theta_b_gradient must have dim entries")
        if not self.rho_s > 0:
            errs.append("geometry.rho_s must be positive")
        if not self.theta_b > 0:
            errs.append("geometry.theta_b must be positive")
        if not self.rho0 > 0 or not self.theta0 > 0:
            errs.append("initial rho and theta must be positive")
        if self.rho_min is not None and not 0 < self.rho_min <= self.rho0:
            errs.append("initial.rho_min must lie in (0, rho]")
        if self.preset == "gaussian-bump" and not self.amplitude > -1:
            errs.append("gaussian-bump amplitude must exceed -1")
        if self.preset == "random" and not 0 <= self.amplitude < 1:
            errs.append("random preset needs 0 <= amplitude < 1")
        if self.snapshot_every < 0:
            errs.append("output.snapshot_every must be non-negative")
        if errs:
            return errs
        try:
            self.build()
        except (ShapeError, MeshError, ValueError, KeyError) as exc:
            errs.append(f"geometry/initial data: {exc}")
        return errs

    def validate(self) -> "RunConfig":
        errs = self.errors()
        if errs:
            raise ConfigError(errs)
        return self


def parse_config(source: str | Path, text: str | None = None) -> RunConfig:
    """Parse a config file (or ``text`` when given) into a validated RunConfig.

    All problems are collected and raised together as ConfigError.
    """
    if text is None:
        path = Path(source)
        if not path.exists():
            raise ConfigError([f"config file {path} does not exist"])
        text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        raise ConfigError([f"syntax error (line {ln}): cannot parse {line.strip()!r}"
                           for ln, line in exc.errors]) from exc
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f" (line {line})" if line else ""
        raise ConfigError([f"syntax error{where}: {exc.message.splitlines()[0]}"]) from exc
    cfg = RunConfig()
    errs = []
    for section in cp.sections():
        for key, raw in cp.items(section):
            entry = _BY_KEY.get((section, key))
            if entry is None:
                errs.append(f"unknown key [{section}] {key}")
                continue
            attr, parse = entry
            try:
                setattr(cfg, attr, parse(raw))
            except (ValueError, ZeroDivisionError) as exc:
                errs.append(f"[{section}] {key} = {raw!r}: {exc}")
    if errs:
        raise ConfigError(errs)
    cfg.resolve()
    return cfg.validate()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Text form that parses back to an equal RunConfig."""
    out = []
    current = None
    for section, key, attr, _ in SCHEMA:
        v = getattr(cfg, attr)
        if v is None:
            continue
        if section != current:
            if current is not None:
                out.append("")
            out.append(f"[{section}]")
            current = section
        out.append(f"{key} = {_fmt(v)}")
    return "\n".join(out) + "\n"


def config_dict(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
