"""Scenario and scene configuration files.

Configs are YAML documents validated against the models below.  Validation
errors are reported with the file name, the line of the offending entry and
the dotted field path, e.g. ``scene.yaml:12: particles.3.radius: ...``.

A minimal scenario file::

    version: 1
    scenario: two_particle_sintering
    material:
      table_row: -5          # calibrated row in degC, or `params:` / `file:`
    schedule:
      load: 0.1              # N
      duration: 0.25         # s
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bonds import FractureConfig
from .contact import FrictionConfig
from .errors import ConfigError
from .materials import KELVIN, TABLE1, material_at, table1_params
from .rheology import BurgersParams, params_at_temperature

SCHEMA_VERSION = 1
SCENARIOS = ("two_particle_sintering", "sintering_vs_load", "bouncing_particle",
             "uniaxial_creep", "custom")

Vec3 = tuple[float, float, float]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsModel(_Model):
    k_i: float = Field(gt=0)
    k_d: float = Field(gt=0)
    c_i: float = Field(gt=0)
    c_d: float = Field(gt=0)
    f0_b: float = Field(default=0.0, ge=0)
    T_ref: float = Field(default=KELVIN - 1.0, gt=0)

    def to_params(self) -> BurgersParams:
        return BurgersParams(**self.model_dump())


class FractureModel(_Model):
    G_f: float = Field(default=1e12, gt=0)
    tau_0: float = Field(default=0.6e6, gt=0)
    k_hp: float = 0.002e6
    x_hp: float = 0.5
    mu_s: float = Field(default=0.5, ge=0)
    tau_n: Optional[float] = Field(default=None, gt=0)
    cohesion_mode: Literal["hall_petch", "constant"] = "hall_petch"
    cohesion: float = Field(default=0.0, ge=0)
    broken_fraction: float = Field(default=0.01, gt=0, lt=1)
    # calibrated constants are per unit indentation; this turns them into Pa
    modulus_scale: float = Field(default=1e6, gt=0)


class FrictionModel(_Model):
    mu_s: float = Field(default=0.5, ge=0)
    mu_k: float = Field(default=0.45, ge=0)
    mu_r: float = Field(default=0.05, ge=0)
    C_r: float = Field(default=0.0, ge=0)
    poisson: float = Field(default=0.3, gt=-1, le=0.5)
    stick_speed: float = Field(default=1e-6, ge=0)

    @model_validator(mode="after")
    def _order(self):
        if self.mu_k > self.mu_s:
            raise ValueError("mu_k must not exceed mu_s")
        return self


class MaterialModel(_Model):
    table_row: Optional[float] = None
    params: Optional[ParamsModel] = None
    file: Optional[str] = None
    temperature_model: Literal["table", "wlf", "arrhenius"] = "table"
    fracture: FractureModel = Field(default_factory=FractureModel)
    friction: FrictionModel = Field(default_factory=FrictionModel)

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("table_row", "params", "file") if getattr(self, k) is not None]
        if not given:
            raise ValueError("missing material reference: give one of table_row, params, file")
        if len(given) > 1:
            raise ValueError(f"material references are exclusive, got {', '.join(given)}")
        if self.table_row is not None and float(self.table_row) not in TABLE1:
            raise ValueError(f"table_row {self.table_row} degC is not calibrated; "
                             f"available: {sorted(TABLE1)}")
        return self


class ParticleModel(_Model):
    radius: float = Field(gt=0)
    position: Vec3
    velocity: Vec3 = (0.0, 0.0, 0.0)
    angular_velocity: Vec3 = (0.0, 0.0, 0.0)
    density: float = Field(default=917.0, gt=0)
    fixed: bool = False
    external_force: Vec3 = (0.0, 0.0, 0.0)
    temperature: Optional[float] = Field(default=None, gt=0)


class WallModel(_Model):
    point: Vec3
    normal: Vec3

    @field_validator("normal")
    @classmethod
    def _nonzero(cls, v):
        if not any(v):
            raise ValueError("wall normal must be non-zero")
        return v


class BondModel(_Model):
    pair: tuple[int, int]
    indentation: float = Field(gt=0)


class RandomPacking(_Model):
    """Non-overlapping spheres dropped at random into a box (uses the seed)."""

    count: int = Field(gt=0)
    radius: tuple[float, float]
    lower: Vec3
    upper: Vec3

    @model_validator(mode="after")
    def _check(self):
        lo, hi = self.radius
        if not 0 < lo <= hi:
            raise ValueError("radius range must satisfy 0 < min <= max")
        if any(u - l <= 2 * hi for l, u in zip(self.lower, self.upper)):
            raise ValueError("box is smaller than one particle")
        return self


class ScheduleModel(_Model):
    load: float = Field(default=0.1, ge=0)
    loads: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.5])
    duration: float = Field(default=0.25, gt=0)
    durations: list[float] = Field(default_factory=list)
    pull_rate: float = Field(default=1e-3, gt=0)
    pull_dt: Optional[float] = Field(default=None, gt=0)
    drop_height: float = Field(default=0.01, gt=0)
    temperatures: list[float] = Field(default_factory=list)
    unload_at: Optional[float] = Field(default=None, gt=0)
    unload_ramp: float = Field(default=0.02, gt=0)
    hold_fraction: float = Field(default=1e-3, ge=0, lt=1)

    @field_validator("durations", "temperatures")
    @classmethod
    def _positive(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("entries must be positive")
        return v

    @field_validator("loads")
    @classmethod
    def _non_negative(cls, v):
        if any(not x >= 0 for x in v):
            raise ValueError("loads must be non-negative")
        return v


class GeometryModel(_Model):
    radius: Optional[float] = Field(default=None, gt=0)


class OutputModel(_Model):
    every: int = Field(default=100, ge=1)
    snapshot_every: int = Field(default=0, ge=0)


class ScenarioConfig(_Model):
    version: Literal[1] = SCHEMA_VERSION
    scenario: Literal["two_particle_sintering", "sintering_vs_load", "bouncing_particle",
                      "uniaxial_creep", "custom"]
    material: MaterialModel
    temperature: Optional[float] = Field(default=None, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    gravity: Vec3 = (0.0, 0.0, -9.81)
    sintering: bool = True
    threads: int = Field(default=1, ge=1)
    seed: int = 0
    geometry: GeometryModel = Field(default_factory=GeometryModel)
    schedule: ScheduleModel = Field(default_factory=ScheduleModel)
    output: OutputModel = Field(default_factory=OutputModel)
    particles: list[ParticleModel] = Field(default_factory=list)
    walls: list[WallModel] = Field(default_factory=list)
    bonds: list[BondModel] = Field(default_factory=list)
    random_particles: Optional[RandomPacking] = None
    restart: Optional[str] = None

    @model_validator(mode="after")
    def _scene(self):
        if self.scenario == "custom":
            if not (self.particles or self.random_particles or self.restart):
                raise ValueError("a custom scenario needs particles, random_particles or restart")
        n = len(self.particles)
        for b in self.bonds:
            i, j = b.pair
            if not (0 <= i < n and 0 <= j < n and i != j):
                raise ValueError(f"bond pair {b.pair} does not name two particles")
        return self

    # set by load_config; not part of the schema
    _base_dir: Path = Path(".")


# ----------------------------------------------------------------------------
# loading with line diagnostics


def _node_line(node, loc) -> int | None:
    """Line (1-based) of the YAML node addressed by a pydantic error location."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = next((v for k, v in node.value if k.value == str(key)), None)
            if match is None:
                break
            node = match
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int):
            if key >= len(node.value):
                break
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def _format_errors(exc: ValidationError, root, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = tuple(err["loc"])
        field = ".".join(str(k) for k in loc) or "<document>"
        line = _node_line(root, loc)
        where = f"{source}:{line}" if line else source
        message = err["msg"].removeprefix("Value error, ")
        lines.append(f"{where}: {field}: {message}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root, source)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    config = parse_config(text, str(path))
    config._base_dir = path.parent
    return config


# ----------------------------------------------------------------------------
# resolving materials


def read_params_file(path) -> BurgersParams:
    """Parameter file written by ``icedem calibrate`` (YAML with a ``params`` map)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"parameter file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("params"), dict):
        raise ConfigError(f"{path}: expected a 'params' mapping")
    try:
        return ParamsModel.model_validate(data["params"]).to_params()
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, None, f"{path}: params")) from None


def write_params_file(params: BurgersParams, path, extra: dict | None = None) -> None:
    body = {"params": {k: float(getattr(params, k)) for k in
                       ("k_i", "k_d", "c_i", "c_d", "f0_b", "T_ref")}}
    if extra:
        body.update(extra)
    Path(path).write_text(yaml.safe_dump(body, sort_keys=False))


def base_params(config: ScenarioConfig) -> BurgersParams:
    m = config.material
    if m.table_row is not None:
        return table1_params(m.table_row)
    if m.params is not None:
        return m.params.to_params()
    file = Path(m.file)
    if not file.is_absolute():
        file = config._base_dir / file
    return read_params_file(file)


def params_for(config: ScenarioConfig, T: float | None = None) -> BurgersParams:
    """Material constants at ``T`` (defaults to the config temperature)."""
    base = base_params(config)
    T = T if T is not None else config.temperature
    if T is None or math.isclose(T, base.T_ref, rel_tol=0, abs_tol=1e-9):
        return base
    model = config.material.temperature_model
    if model == "table":
        try:
            return material_at(T, "table")
        except KeyError as exc:
            raise ConfigError(f"temperature {T} K: {exc.args[0]} (set "
                              f"material.temperature_model to wlf or arrhenius)") from None
    return params_at_temperature(base, T, model=model)


def fracture_config(config: ScenarioConfig) -> FractureConfig:
    return FractureConfig(**config.material.fracture.model_dump())


def friction_config(config: ScenarioConfig) -> FrictionConfig:
    return FrictionConfig(**config.material.friction.model_dump())


def dump_config(config: ScenarioConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2)
