"""INI-style run configuration.

Sections and keys (defaults in :data:`DEFAULTS`)::

    [grid]      nx ny Lx Ly boundary_mode
    [kernel]    kind delta amplitude truncation
    [potential] kind coefficients clamp
    [model]     nu T dt            ([time] T dt is accepted as well)
    [cost]      beta_phi beta_u beta_T beta_U
    [solver]    div_tol cg_tol max_iters
    [control]   lo hi initial
    [targets]   phi_d u_d phi_Omega
    [initial]   phi0 seed
    [optimize]  max_iters alpha0 tol_kkt
    [gradcheck] directions eps
    [output]    every pgm

Field-valued entries are preset names or paths to CHBF1 snapshots,
resolved relative to the config file.  Unknown sections or keys are
rejected.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import presets
from .domain import (CostWeights, GridSpec, Kernel, ModelConfig, Potential, TrackingData,
                     VelocityField, default_clamp)
from .errors import BoundsInverted, ConfigError, FormatError, GridMismatch
from .forward import Model
from .io import read_snapshot, read_velocity_snapshot
from .optimize import Box, OptimizeOptions

_FLOAT, _INT, _STR, _BOOL, _FLOATS = "float", "int", "str", "bool", "floats"

SCHEMA = {
    "grid": {"nx": _INT, "ny": _INT, "Lx": _FLOAT, "Ly": _FLOAT, "boundary_mode": _STR},
    "kernel": {"kind": _STR, "delta": _FLOAT, "amplitude": _FLOAT, "truncation": _FLOAT},
    "potential": {"kind": _STR, "coefficients": _FLOATS, "clamp": _FLOAT},
    "model": {"nu": _FLOAT, "T": _FLOAT, "dt": _FLOAT},
    "time": {"T": _FLOAT, "dt": _FLOAT},
    "cost": {"beta_phi": _FLOAT, "beta_u": _FLOAT, "beta_T": _FLOAT, "beta_U": _FLOAT},
    "solver": {"div_tol": _FLOAT, "cg_tol": _FLOAT, "max_iters": _INT},
    "control": {"lo": _STR, "hi": _STR, "initial": _STR},
    "targets": {"phi_d": _STR, "u_d": _STR, "phi_Omega": _STR},
    "initial": {"phi0": _STR, "seed": _INT},
    "optimize": {"max_iters": _INT, "alpha0": _FLOAT, "tol_kkt": _FLOAT},
    "gradcheck": {"directions": _INT, "eps": _FLOATS},
    "output": {"every": _INT, "pgm": _BOOL},
}

DEFAULTS = {
    "grid": {"nx": 32, "ny": 32, "Lx": 32.0, "Ly": 32.0, "boundary_mode": "neumann_noslip"},
    "kernel": {"kind": "gaussian", "delta": 2.0, "amplitude": 24.0, "truncation": None},
    "potential": {"kind": "quartic", "coefficients": (), "clamp": None},
    "model": {"nu": 1.0, "T": 0.05, "dt": 1e-3},
    "cost": {"beta_phi": 1.0, "beta_u": 1.0, "beta_T": 1.0, "beta_U": 0.1},
    "solver": {"div_tol": 1e-10, "cg_tol": 1e-12, "max_iters": 500},
    "control": {"lo": "-1", "hi": "1", "initial": "zero"},
    "targets": {"phi_d": "shifted_stripe", "u_d": "zero", "phi_Omega": "shifted_stripe"},
    "initial": {"phi0": "stripe", "seed": 0},
    "optimize": {"max_iters": 50, "alpha0": 1.0, "tol_kkt": 1e-6},
    "gradcheck": {"directions": 5, "eps": (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)},
    "output": {"every": 10, "pgm": True},
}


@dataclass
class RunSpec:
    """A validated model plus everything a CLI command needs to run."""

    model: Model
    phi0: np.ndarray
    control: VelocityField
    data: TrackingData
    bounds: Box
    optimize: OptimizeOptions
    gradcheck_directions: int
    gradcheck_eps: tuple
    every: int
    pgm: bool
    seed: int
    resolved: dict
    inputs: list = field(default_factory=list)

    @property
    def config(self) -> ModelConfig:
        return self.model.config


def _convert(section, key, kind, raw):
    where = f"{section}.{key}"
    text = raw.strip()
    try:
        if kind == _INT:
            value = int(text)
        elif kind == _FLOAT:
            value = float(text)
            if not math.isfinite(value):
                raise ConfigError(where, "must be finite")
        elif kind == _FLOATS:
            value = tuple(float(v) for v in text.replace(",", " ").split())
            if not all(math.isfinite(v) for v in value):
                raise ConfigError(where, "must be finite")
        elif kind == _BOOL:
            low = text.lower()
            if low not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ConfigError(where, f"expects a boolean, got {text!r}")
            value = configparser.ConfigParser.BOOLEAN_STATES[low]
        else:
            value = text
    except ValueError:
        raise ConfigError(where, f"expects {kind}, got {text!r}") from None
    return value


def read_sections(path) -> dict:
    """Parse and type-check the file; return ``{section: {key: value}}`` of given entries."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("", f"malformed config {path}: {exc}") from None
    given = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "is not a known section")
        given[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "is not a known key")
            given[section][key] = _convert(section, key, SCHEMA[section][key], raw)
    return given


def _merged(given):
    out = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec, vals in given.items():
        if sec == "time":
            continue
        out[sec].update(vals)
    # [time] is an alias for the time keys of [model]
    origin = {"T": "model", "dt": "model"}
    for key, value in given.get("time", {}).items():
        if key in given.get("model", {}):
            raise ConfigError(f"time.{key}", f"conflicts with model.{key}")
        out["model"][key] = value
        origin[key] = "time"
    return out, origin


def _field_path(text, base: Path):
    p = Path(text)
    if not p.is_absolute():
        p = base / p
    return p if p.is_file() else None


def _scalar_source(where, text, grid, base, phi0, inputs, seed=0):
    path = _field_path(text, base)
    if path is not None:
        inputs.append(path)
        try:
            return read_snapshot(path, grid.shape)[0]
        except FormatError as exc:
            raise ConfigError(where, str(exc)) from None
    try:
        if phi0 is None:
            if text.startswith("constant:"):
                return presets.constant(grid, float(text.split(":", 1)[1]))
            return presets.initial(text, grid, seed=seed)
        return presets.scalar_target(text, grid, phi0)
    except (KeyError, ValueError):
        raise ConfigError(where, f"{text!r} is neither a preset nor a readable file") from None


def _velocity_source(where, text, grid, base, inputs, kinds):
    path = _field_path(text, base)
    if path is not None:
        inputs.append(path)
        try:
            return read_velocity_snapshot(path, grid.shape)[0]
        except FormatError as exc:
            raise ConfigError(where, str(exc)) from None
    name, _, amp = text.partition(":")
    try:
        amplitude = float(amp) if amp else None
    except ValueError:
        raise ConfigError(where, f"bad amplitude in {text!r}") from None
    if name not in kinds:
        raise ConfigError(where, f"{text!r} is neither a preset {kinds} nor a readable file")
    if name == "zero":
        return VelocityField.zeros(grid)
    if name == "vortex":
        return presets.vortex(grid, 0.05 if amplitude is None else amplitude)
    return presets.shear(grid, 1.0 if amplitude is None else amplitude)


def _bound(where, text, grid, base, inputs):
    try:
        value = float(text)
    except ValueError:
        value = None
    if value is not None:
        if math.isnan(value):
            raise ConfigError(where, "must not be NaN")
        return value
    return _velocity_source(where, text, grid, base, inputs, ("zero",))


def _steps(field_: VelocityField, n):
    return VelocityField(np.repeat(field_.x[None], n, axis=0), np.repeat(field_.y[None], n, axis=0))


def parse_config(path, seed: int | None = None) -> RunSpec:
    """Read, resolve and validate a run configuration.

    Raises :class:`ConfigError` naming the offending ``section.key`` and
    :class:`chb.errors.AssumptionViolation` when a hypothesis check fails.
    """
    path = Path(path)
    base = path.resolve().parent
    given = read_sections(path)
    cfg, origin = _merged(given)
    m = cfg["model"]
    for key in ("T", "dt", "nu"):
        if not m[key] > 0:
            raise ConfigError(f"{origin.get(key, 'model')}.{key}", "must be positive")
    if not cfg["output"]["every"] > 0:
        raise ConfigError("output.every", "must be positive")
    if cfg["gradcheck"]["directions"] < 1 or not cfg["gradcheck"]["eps"]:
        raise ConfigError("gradcheck", "needs at least one direction and one eps")
    if not cfg["optimize"]["alpha0"] > 0:
        raise ConfigError("optimize.alpha0", "must be positive")
    if seed is not None:
        cfg["initial"]["seed"] = int(seed)

    g = cfg["grid"]
    grid = GridSpec(g["nx"], g["ny"], g["Lx"], g["Ly"], g["boundary_mode"])
    inputs = []
    phi0 = _scalar_source("initial.phi0", cfg["initial"]["phi0"], grid, base, None, inputs,
                          seed=cfg["initial"]["seed"])
    phi0 = np.asarray(phi0, dtype=float)
    if not np.all(np.isfinite(phi0)):
        raise ConfigError("initial.phi0", "must be finite")

    k = cfg["kernel"]
    kernel = Kernel(k["kind"], k["delta"], k["amplitude"], k["truncation"])
    p = cfg["potential"]
    clamp = default_clamp(phi0) if p["clamp"] is None else p["clamp"]
    potential = Potential(p["kind"], tuple(p["coefficients"]), clamp)
    weights = CostWeights(**cfg["cost"])
    s = cfg["solver"]
    mc = ModelConfig(grid, kernel, potential, m["nu"], m["T"], m["dt"], weights,
                     s["div_tol"], s["cg_tol"], s["max_iters"])
    model = Model(mc)  # runs validate_assumptions

    N = mc.n_steps
    t = cfg["targets"]
    phi_d = _scalar_source("targets.phi_d", t["phi_d"], grid, base, phi0, inputs)
    phi_O = _scalar_source("targets.phi_Omega", t["phi_Omega"], grid, base, phi0, inputs)
    u_d = _velocity_source("targets.u_d", t["u_d"], grid, base, inputs, ("zero", "vortex"))
    try:
        data = TrackingData.constant(grid, N, phi_d, u_d, phi_O)
    except GridMismatch as exc:
        raise ConfigError("targets", str(exc)) from None

    c = cfg["control"]
    lo = _bound("control.lo", c["lo"], grid, base, inputs)
    hi = _bound("control.hi", c["hi"], grid, base, inputs)
    try:
        bounds = Box(lo, hi)
    except BoundsInverted as exc:
        raise ConfigError("control.lo/hi", str(exc)) from None
    control = _steps(_velocity_source("control.initial", c["initial"], grid, base, inputs,
                                      ("zero", "vortex", "shear")), N)

    o = cfg["optimize"]
    opts = OptimizeOptions(max_iters=o["max_iters"], alpha0=o["alpha0"], tol_kkt=o["tol_kkt"])
    resolved = {sec: {key: (list(v) if isinstance(v, tuple) else v) for key, v in vals.items()}
                for sec, vals in cfg.items()}
    resolved["potential"]["clamp"] = clamp
    resolved["derived"] = {"n_steps": N, "c0_estimate": mc.c0_estimate,
                           "stabilization_K": model.K}
    return RunSpec(model, phi0, control, data, bounds, opts, cfg["gradcheck"]["directions"],
                   tuple(cfg["gradcheck"]["eps"]), cfg["output"]["every"],
                   cfg["output"]["pgm"], cfg["initial"]["seed"], resolved,
                   [str(p_) for p_ in inputs])
