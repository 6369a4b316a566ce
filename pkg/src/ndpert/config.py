"""Scenario configuration: JSON schema, dataclasses and model assembly."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .age import AgeModelSpec, BoundaryKernel, truncation_age
from .core import log_norm
from .errors import InvalidInput, NdpertError

SCHEMA_VERSION = "ndpert-scenario/1"

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_table = {
    "type": "object",
    "required": ["kind", "ages", "matrices"],
    "properties": {
        "kind": {"const": "matrix-table"},
        "ages": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "matrices": {"type": "array", "items": _matrix, "minItems": 1},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "model", "grid"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["c", "coeff", "kernel", "u0"],
            "additionalProperties": False,
            "properties": {
                "c": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]},
                "p": {"type": "number", "minimum": 1},
                "dim": {"type": "integer", "minimum": 1},
                "coeff": {
                    "oneOf": [
                        {"type": "object", "required": ["kind", "matrix"], "additionalProperties": False,
                         "properties": {"kind": {"const": "constant"}, "matrix": _matrix}},
                        {"type": "object", "required": ["kind", "mu"], "additionalProperties": False,
                         "properties": {"kind": {"const": "scalar-mu"}, "mu": {"type": "number"}}},
                        _table,
                        {"type": "object", "required": ["kind", "generator", "scale"], "additionalProperties": False,
                         "properties": {"kind": {"const": "scaled-generator"}, "generator": _matrix,
                                        "scale": {"type": "array", "items": {"type": "number"}, "minItems": 1}}},
                    ]
                },
                "kernel": {
                    "oneOf": [
                        {"type": "object", "required": ["kind", "beta"], "additionalProperties": False,
                         "properties": {"kind": {"const": "constant-beta"}, "beta": {"type": "number"}}},
                        {"type": "object", "required": ["kind", "beta", "a_min", "a_max"],
                         "additionalProperties": False,
                         "properties": {"kind": {"const": "window-beta"}, "beta": {"type": "number"},
                                        "a_min": {"type": "number"}, "a_max": {"type": "number"}}},
                        _table,
                    ]
                },
                "u0": {
                    "oneOf": [
                        {"type": "object", "required": ["kind"], "additionalProperties": False,
                         "properties": {"kind": {"const": "zero"}}},
                        {"type": "object", "required": ["kind", "value"], "additionalProperties": False,
                         "properties": {"kind": {"const": "constant"},
                                        "value": {"oneOf": [{"type": "number"},
                                                            {"type": "array", "items": {"type": "number"}}]}}},
                        {"type": "object", "required": ["kind", "value", "a_min", "a_max"],
                         "additionalProperties": False,
                         "properties": {"kind": {"const": "window"}, "value": {"type": "number"},
                                        "a_min": {"type": "number"}, "a_max": {"type": "number"}}},
                        {"type": "object", "required": ["kind", "ages", "values"], "additionalProperties": False,
                         "properties": {"kind": {"const": "table"},
                                        "ages": {"type": "array", "items": {"type": "number"}},
                                        "values": _matrix}},
                    ]
                },
            },
        },
        "grid": {
            "type": "object",
            "required": ["da", "dt", "t_end"],
            "additionalProperties": False,
            "properties": {
                "da": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "probes": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "method": {"enum": ["renewal", "upwind"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "csv": {"type": "string"},
                "field_csv": {"type": "string"},
                "dump_field": {"type": "boolean"},
            },
        },
        "classical": {
            "type": "object",
            "required": ["generator"],
            "additionalProperties": False,
            "properties": {"generator": _matrix, "perturbation": _matrix},
        },
    },
}


class ConfigError(NdpertError):
    """Unparseable or schema-violating scenario."""


@dataclass(frozen=True)
class GridConfig:
    da: float
    dt: float
    t_end: float


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    probes: int = 8
    seed: int = 0
    method: str = "renewal"


@dataclass(frozen=True)
class OutputConfig:
    csv: str = "simulate.csv"
    field_csv: str = "field.csv"
    dump_field: bool = False


@dataclass(frozen=True)
class ModelConfig:
    c: object
    coeff: dict
    kernel: dict
    u0: dict
    p: float = 1.0
    dim: int = 1


@dataclass(frozen=True)
class ClassicalConfig:
    generator: list
    perturbation: Optional[list] = None


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelConfig
    grid: GridConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    classical: Optional[ClassicalConfig] = None
    name: str = ""
    schema: str = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"schema violation at {path}: {exc.message}") from None
        d = copy.deepcopy(data)
        grid = GridConfig(**{k: float(v) for k, v in d["grid"].items()})
        if abs(grid.dt - grid.da) > 1e-12 * grid.da:
            raise ConfigError(f"grid.dt={grid.dt} must equal grid.da={grid.da}")
        m = d["model"]
        model = ModelConfig(c=m["c"] if m["c"] == "inf" else float(m["c"]), coeff=m["coeff"], kernel=m["kernel"],
                            u0=m["u0"], p=float(m.get("p", 1.0)), dim=int(m.get("dim", 1)))
        cl = d.get("classical")
        return cls(
            model=model,
            grid=grid,
            solver=SolverConfig(**d.get("solver", {})),
            outputs=OutputConfig(**d.get("outputs", {})),
            classical=ClassicalConfig(**cl) if cl is not None else None,
            name=d.get("name", ""),
            schema=d["schema"],
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["classical"] is None:
            del out["classical"]
        elif out["classical"]["perturbation"] is None:
            del out["classical"]["perturbation"]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return ScenarioConfig(self.model, self.grid, SolverConfig(self.solver.tol, self.solver.probes, seed,
                                                                  self.solver.method),
                              self.outputs, self.classical, self.name, self.schema)


def builtin_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("ndpert.data").iterdir() if p.name.endswith(".json"))


def load_config(source: str) -> ScenarioConfig:
    """Parse a JSON file path, or the name of a bundled scenario."""
    path = Path(source)
    try:
        if path.is_file():
            text = path.read_text(encoding="utf-8")
        elif source in builtin_names():
            text = resources.files("ndpert.data").joinpath(source + ".json").read_text(encoding="utf-8")
        else:
            raise ConfigError(f"no config file or bundled scenario named {source!r}")
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    return ScenarioConfig.from_dict(data)


# --------------------------------------------------------------------------
# assembly


def _square(m, dim, what):
    a = np.asarray(m, dtype=float)
    if a.shape != (dim, dim):
        raise ConfigError(f"{what} must be {dim}x{dim}, got shape {a.shape}")
    return a


def _table_interp(ages, mats, dim, what):
    ages = np.asarray(ages, dtype=float)
    mats = np.asarray(mats, dtype=float)
    if mats.shape != (ages.size, dim, dim) or np.any(np.diff(ages) <= 0):
        raise ConfigError(f"{what} table needs increasing ages and one {dim}x{dim} matrix per age")
    flat = mats.reshape(ages.size, -1)

    def fn(a):
        return np.array([np.interp(a, ages, flat[:, i]) for i in range(flat.shape[1])]).reshape(dim, dim)

    return fn


def coefficient_function(cfg: ModelConfig):
    c, dim = cfg.coeff, cfg.dim
    kind = c["kind"]
    if kind == "constant":
        return _square(c["matrix"], dim, "coeff.matrix")
    if kind == "scalar-mu":
        return -float(c["mu"]) * np.eye(dim)
    if kind == "matrix-table":
        return _table_interp(c["ages"], c["matrices"], dim, "coeff")
    A0 = _square(c["generator"], dim, "coeff.generator")
    poly = np.asarray(c["scale"], dtype=float)[::-1]
    return lambda a: np.polyval(poly, a) * A0


def _coeff_log_norm_bound(coeff, c_probe: float, da: float) -> float:
    if not callable(coeff):
        return log_norm(coeff)
    ages = np.arange(0.0, c_probe + da / 2, da)
    return max(log_norm(np.asarray(coeff(a), dtype=float)) for a in ages)


def _kernel_values(cfg: ModelConfig, ages: np.ndarray) -> np.ndarray:
    k, dim = cfg.kernel, cfg.dim
    eye = np.eye(dim)
    if k["kind"] == "constant-beta":
        return np.broadcast_to(float(k["beta"]) * eye, (ages.size, dim, dim)).copy()
    if k["kind"] == "window-beta":
        inside = (ages >= k["a_min"] - 1e-12) & (ages <= k["a_max"] + 1e-12)
        return inside[:, None, None] * float(k["beta"]) * eye
    fn = _table_interp(k["ages"], k["matrices"], dim, "kernel")
    return np.stack([fn(a) for a in ages])


def _u0_values(cfg: ModelConfig, ages: np.ndarray) -> np.ndarray:
    u, dim = cfg.u0, cfg.dim
    if u["kind"] == "zero":
        return np.zeros((ages.size, dim))
    if u["kind"] == "constant":
        v = np.broadcast_to(np.asarray(u["value"], dtype=float), (dim,))
        return np.broadcast_to(v, (ages.size, dim)).copy()
    if u["kind"] == "window":
        inside = (ages >= u["a_min"] - 1e-12) & (ages <= u["a_max"] + 1e-12)
        return np.repeat((inside * float(u["value"]))[:, None], dim, axis=1)
    tab_a = np.asarray(u["ages"], dtype=float)
    vals = np.asarray(u["values"], dtype=float)
    if vals.shape != (tab_a.size, dim):
        raise ConfigError(f"u0 table needs one length-{dim} row per age")
    return np.stack([np.interp(ages, tab_a, vals[:, i]) for i in range(dim)], axis=1)


def build_spec(cfg: ScenarioConfig) -> AgeModelSpec:
    """Assemble the age model; an infinite max age is truncated where the kernel tail is negligible."""
    m, g = cfg.model, cfg.grid
    coeff = coefficient_function(m)
    truncated = m.c == "inf"
    if truncated:
        probe = np.arange(0.0, 100.0 + g.da / 2, g.da)
        gamma_sup = float(np.max(np.linalg.norm(_kernel_values(m, probe), ord=2, axis=(1, 2))))
        w = _coeff_log_norm_bound(coeff, 100.0, g.da)
        try:
            c_num = truncation_age(w, max(gamma_sup, 1e-300))
        except InvalidInput as exc:
            raise ConfigError(str(exc)) from None
        c = g.da * max(1, math.ceil(c_num / g.da))
    else:
        c = float(m.c)
    n = round(c / g.da)
    if abs(n * g.da - c) > 1e-9 * c:
        raise ConfigError(f"model.c={c} is not a multiple of grid.da={g.da}")
    ages = np.arange(n + 1) * g.da
    try:
        return AgeModelSpec(c=c, p=m.p, dim=m.dim, coeff=coeff,
                            kernel=BoundaryKernel.from_samples(_kernel_values(m, ages)),
                            u0=_u0_values(m, ages), da=g.da, dt=g.dt, t_end=g.t_end, c_is_truncated=truncated)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from None
