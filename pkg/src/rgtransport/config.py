"""Run configuration: strict JSON loading with field-path validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .lattice import LatticeGeometry, MassParams, build_geometry
from .potentials import (
    PotentialModel,
    SineGordonParams,
    ZeroPotential,
    quadratic_model,
    sine_gordon_model,
)

log = logging.getLogger(__name__)

MODEL_KINDS = ("sine-gordon", "quadratic", "zero")
SCHEDULES = ("truncated-heat", "linear")
RUNTIME_FIELDS = ("output", "threads")


@dataclass
class GeometryConfig:
    d: int = 2
    L: float = 1.0
    eps: float = 0.25


@dataclass
class MassConfig:
    m: float = 1.0


@dataclass
class ModelConfig:
    kind: str = "sine-gordon"
    z: float = 0.05
    beta: float = 4.0
    b: float = 1.0


@dataclass
class NumericsConfig:
    n_inner: int = 256
    t_points: int = 64
    t_min: float = 1e-3
    t_max: float | None = None
    tau: float | None = None
    ode_steps: int = 48
    tol: float = 1e-8
    step_tol: float = 1e-6
    n_samples: int = 1000
    n_probes: int = 100
    adversarial: bool = False
    sde_steps: int = 100
    bridge_tau: float = 15.0
    schedule: str = "truncated-heat"
    mcmc_step: float = 0.3
    mcmc_burnin: int = 500
    mcmc_thin: int = 5
    mcmc_chains: int = 100


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mass: MassConfig = field(default_factory=MassConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    seed: int = 0
    output: str = "out"
    threads: int = 1
    annotations: list = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("annotations")
        return d

    def digest(self) -> str:
        """Hash of the fields that affect results (not output path or threads)."""
        d = self.to_dict()
        for key in RUNTIME_FIELDS:
            d.pop(key)
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def build_geometry(self) -> LatticeGeometry:
        return build_geometry(self.geometry.d, self.geometry.L, self.geometry.eps)

    def build_mass(self) -> MassParams:
        return MassParams(self.mass.m)

    def build_model(self, geom: LatticeGeometry | None = None) -> PotentialModel:
        geom = geom or self.build_geometry()
        kind = self.model.kind
        if kind == "zero":
            return ZeroPotential(geom)
        if kind == "quadratic":
            from .gaussian import SpectralMultiplier
            mass = self.build_mass()
            return quadratic_model(geom, mass, SpectralMultiplier(geom, mass, np.full(geom.shape, self.model.b)))
        return sine_gordon_model(geom, SineGordonParams(self.model.z, self.model.beta))


def _check_type(value, hint, path):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(hint)
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected a boolean, got {value!r}", field=path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"expected an integer, got {value!r}", field=path)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", field=path)
        if not math.isfinite(value):
            raise ConfigurationError(f"expected a finite number, got {value!r}", field=path)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", field=path)
        return value
    return value


def _build(cls, data, path: str, defaults_used: list):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected an object, got {type(data).__name__}", field=path or "<root>")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "annotations"}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigurationError(f"unknown key {unknown[0]!r}", field=where)
    kwargs = {}
    for name in sorted(names):
        sub = f"{path}.{name}" if path else name
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, data.get(name, {}), sub, defaults_used)
        elif name in data:
            kwargs[name] = _check_type(data[name], hint, sub)
        else:
            defaults_used.append(sub)
    return cls(**kwargs)


def validate(cfg: RunConfig) -> RunConfig:
    """Check module-level preconditions; fills ``cfg.annotations``."""
    g = cfg.geometry
    geom = build_geometry(g.d, g.L, g.eps)
    if not cfg.mass.m > 0:
        raise ConfigurationError("mass must be positive", field="mass.m")
    mdl = cfg.model
    if mdl.kind not in MODEL_KINDS:
        raise ConfigurationError(f"must be one of {MODEL_KINDS}", field="model.kind")
    if mdl.kind == "sine-gordon" and not mdl.beta > 0:
        raise ConfigurationError("beta must be positive", field="model.beta")
    if mdl.kind == "quadratic" and mdl.b < 0:
        raise ConfigurationError("b must be nonnegative", field="model.b")
    n = cfg.numerics
    checks = [
        ("n_inner", n.n_inner >= 2), ("t_points", n.t_points >= 2), ("t_min", n.t_min > 0),
        ("ode_steps", n.ode_steps >= 1), ("tol", n.tol > 0), ("step_tol", n.step_tol > 0),
        ("n_samples", n.n_samples >= 1), ("n_probes", n.n_probes >= 1), ("sde_steps", n.sde_steps >= 10),
        ("bridge_tau", n.bridge_tau > 0), ("mcmc_step", n.mcmc_step > 0), ("mcmc_burnin", n.mcmc_burnin >= 1),
        ("mcmc_thin", n.mcmc_thin >= 1), ("mcmc_chains", n.mcmc_chains >= 1),
    ]
    for name, ok in checks:
        if not ok:
            raise ConfigurationError(f"invalid value {getattr(n, name)!r}", field=f"numerics.{name}")
    if n.t_max is not None and not n.t_max > n.t_min:
        raise ConfigurationError("t_max must exceed t_min", field="numerics.t_max")
    if n.tau is not None and not n.tau > 0:
        raise ConfigurationError("tau must be positive", field="numerics.tau")
    if n.schedule not in SCHEDULES:
        raise ConfigurationError(f"must be one of {SCHEDULES}", field="numerics.schedule")
    if cfg.seed < 0:
        raise ConfigurationError("seed must be nonnegative", field="seed")
    if cfg.threads < 1:
        raise ConfigurationError("threads must be at least 1", field="threads")
    notes = []
    if mdl.kind == "sine-gordon":
        if SineGordonParams(mdl.z, mdl.beta).outside_verified_regime:
            notes.append("outside β < 6π")
        if geom.d != 2:
            notes.append("sine-Gordon coupling uses the two-dimensional scaling")
    if g.L * cfg.mass.m < 1:
        notes.append("outside Lm ≥ 1")
    cfg.annotations = notes
    for note in notes:
        log.warning("regime annotation: %s", note)
    return cfg


def config_from_dict(data: dict) -> RunConfig:
    defaults: list[str] = []
    cfg = _build(RunConfig, data, "", defaults)
    for name in defaults:
        log.info("config default used for %s", name)
    return validate(cfg)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} not found", field="config")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                                 field="config") from exc
    return config_from_dict(data)
