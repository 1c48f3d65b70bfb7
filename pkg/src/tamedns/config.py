"""Run configuration: JSON schema, defaults and builders for the solver inputs.

A config has five blocks (problem, noise, control, solver, experiment) plus
``out`` and ``seed``. Relative paths are resolved against the config file's
directory before anything runs.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .io import FormatError, control_from_obj, read_control, read_field
from .noise import Control, MarkSpace, NoiseCoefficient
from .seeding import as_generator, replica_seed
from .solver import SolverConfig, Truncation
from .spectral import SpectralField, TamingSpec, TorusGrid, leray_project, sobolev_norm_sq


class ConfigError(ValueError):
    """Config failed validation; nothing has been written."""


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 4, "multipleOf": 2},
                "N": _NONNEG,
                "u0": {
                    "oneOf": [
                        {"type": "object", "additionalProperties": False, "required": ["preset"],
                         "properties": {"preset": {"const": "zero"}}},
                        {"type": "object", "additionalProperties": False, "required": ["preset", "a"],
                         "properties": {"preset": {"const": "shear"}, "a": _NUM}},
                        {"type": "object", "additionalProperties": False, "required": ["preset"],
                         "properties": {"preset": {"const": "random"}, "s": _NONNEG, "scale": _NONNEG,
                                        "seed": {"type": "integer", "minimum": 0}}},
                        {"type": "object", "additionalProperties": False, "required": ["preset", "path"],
                         "properties": {"preset": {"const": "file"}, "path": {"type": "string"}}},
                    ]
                },
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["weights"],
            "properties": {
                "weights": {"type": "array", "minItems": 1, "items": _POS},
                "scales": {"type": "array", "items": _NUM},
                "cutoff": {"type": "integer", "minimum": 1},
                "fields": {
                    "type": "array",
                    "items": {
                        "oneOf": [
                            {"type": "null"},
                            {"type": "object", "additionalProperties": False, "required": ["amplitude"],
                             "properties": {"amplitude": _NONNEG, "radius": {"type": "integer", "minimum": 1},
                                            "seed": {"type": "integer", "minimum": 0}}},
                        ]
                    },
                },
            },
        },
        "control": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["file"],
                 "properties": {"file": {"type": "string"}}},
                {"type": "object", "additionalProperties": False, "required": ["constant"],
                 "properties": {"constant": _NONNEG, "intervals": {"type": "integer", "minimum": 1}}},
                {"type": "object", "required": ["time_grid", "marks", "values"]},
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": _POS,
                "T": _POS,
                "eps": _NONNEG,
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "modes": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "replicas": {"type": "integer", "minimum": 1},
                "eps_ladder": {"type": "array", "minItems": 1, "items": _POS},
                "trials": {"type": "integer", "minimum": 1},
                "suite": {"type": "string"},
                "picard_tol": _POS,
            },
        },
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "problem": {"n": 16, "N": 1.0, "u0": {"preset": "zero"}},
    "noise": {"weights": [1.0], "cutoff": 2},
    "control": {"constant": 1.0, "intervals": 1},
    "solver": {"dt": 1e-3, "T": 0.5, "eps": 0.1, "snapshot_stride": 100, "modes": None},
    "experiment": {"replicas": 8, "eps_ladder": [0.2, 0.1, 0.05], "trials": 100, "suite": "all",
                   "picard_tol": 1e-8},
    "out": "run",
    "seed": 0,
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("control", "u0"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _format_path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Parse, validate and complete a config; relative paths become absolute."""
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(FormatError(exc.msg, path, exc.lineno, exc.colno))) from None
        base = path.resolve().parent
    return resolve_config(raw, base, overrides)


def resolve_config(raw, base=None, overrides: dict | None = None) -> dict:
    base = Path.cwd() if base is None else Path(base)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config error at {_format_path(err)}: {err.message}") from None
    cfg = _merge(DEFAULTS, raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    noise = cfg["noise"]
    K = len(noise["weights"])
    noise.setdefault("scales", [0.0] * K)
    noise.setdefault("fields", [None] * K)
    if len(noise["scales"]) != K or len(noise["fields"]) != K:
        raise ConfigError(f"noise: scales and fields need one entry per mark ({K})")
    u0 = cfg["problem"]["u0"]
    if u0["preset"] == "file":
        u0["path"] = str((base / u0["path"]).resolve())
    if "file" in cfg["control"]:
        cfg["control"]["file"] = str((base / cfg["control"]["file"]).resolve())
    cfg["out"] = str((base / cfg["out"]).resolve()) if not Path(cfg["out"]).is_absolute() else cfg["out"]
    s = cfg["solver"]
    steps = s["T"] / s["dt"]
    if s["dt"] > s["T"] or abs(steps - round(steps)) > 1e-9 * steps:
        raise ConfigError(f"solver: T={s['T']} must be a whole number of steps dt={s['dt']}")
    ladder = cfg["experiment"]["eps_ladder"]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("experiment: eps_ladder must decrease strictly")
    return cfg


# -------------------------------------------------------------------- builders

def random_field(grid: TorusGrid, s: float, scale: float, seed, radius: int | None = None,
                 norm: int = 1) -> SpectralField:
    """Smooth divergence-free field with spectrum (1 + |2 pi k|^2)^-s.

    Rescaled so that its H^``norm`` norm equals ``scale``; ``radius`` keeps
    only |k| <= radius.
    """
    rng = as_generator(seed)
    noise = SpectralField.from_physical(grid, rng.standard_normal((3,) + grid.shape))
    filt = grid.dealias_mask / (1.0 + grid.eigenvalues) ** s
    if radius is not None:
        filt = filt * (grid.ksq <= radius**2)
    u = leray_project(SpectralField(noise.coeffs * filt, grid))
    size = sobolev_norm_sq(u, norm)
    if size == 0.0 or scale == 0.0:
        return SpectralField.zeros(grid)
    return u * (scale / math.sqrt(size))


def shear_field(grid: TorusGrid, a: float) -> SpectralField:
    """a * (sin 2 pi x_2, 0, 0)."""
    _, x2, _ = grid.physical_coords()
    z = np.zeros_like(x2)
    return SpectralField.from_physical(grid, np.stack([a * np.sin(2 * np.pi * x2), z, z]))


def build_u0(cfg: dict, grid: TorusGrid) -> SpectralField:
    spec = cfg["problem"]["u0"]
    kind = spec["preset"]
    if kind == "zero":
        return SpectralField.zeros(grid)
    if kind == "shear":
        return shear_field(grid, spec["a"])
    if kind == "random":
        return random_field(grid, spec.get("s", 2.0), spec.get("scale", 1.0),
                            replica_seed(spec.get("seed", cfg["seed"]), 0, stream=100))
    u, _ = read_field(spec["path"])
    if u.grid != grid:
        raise ConfigError(f"u0 file has grid {u.grid.n}, config has {grid.n}")
    return u


def build_noise(cfg: dict, grid: TorusGrid) -> tuple[MarkSpace, NoiseCoefficient]:
    nb = cfg["noise"]
    marks = MarkSpace(tuple(nb["weights"]))
    fields = []
    for k, spec in enumerate(nb["fields"]):
        if spec is None:
            fields.append(None)
            continue
        seed = replica_seed(spec.get("seed", cfg["seed"]), k, stream=101)
        fields.append(random_field(grid, 1.0, spec["amplitude"], seed, radius=spec.get("radius", 2), norm=0))
    return marks, NoiseCoefficient(tuple(nb["scales"]), tuple(fields), nb["cutoff"], grid)


def build_control(cfg: dict, K: int) -> Control:
    cb = cfg["control"]
    T = cfg["solver"]["T"]
    if "file" in cb:
        g = read_control(cb["file"])
    elif "constant" in cb:
        g = Control.constant(T, K, cb["constant"], cb.get("intervals", 1))
    else:
        g = control_from_obj(cb)
    if g.K != K:
        raise ConfigError(f"control has {g.K} marks, noise has {K}")
    if not np.isclose(g.T, T):
        raise ConfigError(f"control horizon {g.T} differs from solver T={T}")
    return g


def build_solver_config(cfg: dict, grid: TorusGrid) -> SolverConfig:
    s = cfg["solver"]
    trunc = Truncation(grid, s["modes"]) if s.get("modes") else None
    return SolverConfig(dt=s["dt"], T=s["T"], truncation=trunc, taming=TamingSpec(cfg["problem"]["N"]),
                        eps=s["eps"], snapshot_stride=s["snapshot_stride"], seed=cfg["seed"])


@dataclass
class Problem:
    grid: TorusGrid
    u0: SpectralField
    marks: MarkSpace
    sigma: NoiseCoefficient
    control: Control
    solver: SolverConfig


def build_problem(cfg: dict) -> Problem:
    grid = TorusGrid(cfg["problem"]["n"])
    marks, sigma = build_noise(cfg, grid)
    return Problem(grid, build_u0(cfg, grid), marks, sigma, build_control(cfg, marks.K),
                   build_solver_config(cfg, grid))


# Reference problem used by ``tamedns verify`` when no config is given: a
# smooth initial field, two marks with a multiplicative and an additive
# coefficient, and a two-interval control of cost ~0.14 (inside S^2).
REFERENCE_CONFIG = {
    "problem": {"n": 16, "N": 1.0, "u0": {"preset": "random", "s": 1.5, "scale": 1.0, "seed": 1}},
    "noise": {
        "weights": [1.0, 0.5],
        "scales": [0.5, 0.0],
        "cutoff": 2,
        "fields": [{"amplitude": 0.5, "radius": 1, "seed": 3}, {"amplitude": 0.5, "radius": 1, "seed": 3}],
    },
    "control": {"time_grid": [0.0, 0.25, 0.5], "marks": 2, "values": [[1.5, 0.5], [2.0, 1.0]]},
    "solver": {"dt": 1e-3, "T": 0.5, "eps": 0.1, "snapshot_stride": 100},
    "experiment": {"replicas": 8, "eps_ladder": [0.2, 0.1, 0.05], "trials": 100},
    "seed": 0,
}
