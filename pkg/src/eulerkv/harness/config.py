"""
Run configuration: a TOML file with one table per concern.

Only ``scenario.name``, ``time.t_end`` and ``time.dt`` are required; every
other key has the default shown by :func:`default_config_text`.  Unknown keys
and ill-typed values are rejected with the offending key named.
"""
from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np
import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..basis import Domain
from ..constitutive import MaterialParams, StoredEnergyModel
from ..dynamics import VELOCITY_FAMILIES, Scenario, solver_for
from ..errors import ConfigError
from . import expressions

EDGES = ("left", "right", "bottom", "top")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True, allow_inf_nan=False)


class ScenarioSection(_Section):
    name: str = Field(min_length=1)


class DomainSection(_Section):
    Lx: float = Field(1.0, gt=0)
    Ly: float = Field(1.0, gt=0)


class GridSection(_Section):
    nx: int = Field(32, ge=1, le=512)
    ny: Optional[int] = Field(None, ge=1, le=512)
    mx: Optional[int] = Field(None, ge=1, le=1024)
    my: Optional[int] = Field(None, ge=1, le=1024)
    layout: Literal["parity", "neumann"] = "parity"


class MaterialSection(_Section):
    rho: float = 1.0
    D_lambda: float = 0.1
    D_mu: float = 0.1
    nu: float = 1e-3
    p: float = 3.0
    epsilon: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> MaterialParams:
        return MaterialParams(**self.model_dump())


class EnergySection(_Section):
    kind: Literal["regularized-svk", "svk"] = "regularized-svk"
    K: float = 1.0
    G: float = 1.0
    eta: float = 0.1
    bulk_penalty: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> StoredEnergyModel:
        return StoredEnergyModel(**self.model_dump())


def _check_expression(value: str) -> str:
    expressions.parse(value)
    return value


class InitialSection(_Section):
    velocity: Literal["zero", "stream", "expression"] = "zero"
    amplitude: float = 1.0
    velocity_x: str = "0"
    velocity_y: str = "0"
    prescribed: bool = False
    deformation: Literal["identity", "expression"] = "identity"
    F_xx: str = "1"
    F_xy: str = "0"
    F_yx: str = "0"
    F_yy: str = "1"

    _check_expr = field_validator("velocity_x", "velocity_y", "F_xx", "F_xy", "F_yx", "F_yy")(
        _check_expression)


class ForcingSection(_Section):
    body_x: str = "0"
    body_y: str = "0"
    traction_left: Optional[str] = None
    traction_right: Optional[str] = None
    traction_bottom: Optional[str] = None
    traction_top: Optional[str] = None

    @field_validator("body_x", "body_y", "traction_left", "traction_right", "traction_bottom", "traction_top")
    @classmethod
    def _expr(cls, value):
        return value if value is None else _check_expression(value)


class TimeSection(_Section):
    t_end: float = Field(ge=0)
    dt: float = Field(gt=0)


class OutputSection(_Section):
    directory: str = "out"
    sample_stride: int = Field(1, ge=1)
    snapshot_stride: int = Field(0, ge=0)
    track_return_map: bool = False


class ExperimentSection(_Section):
    kind: Literal["none", "sweep-k", "sweep-eps"] = "none"
    values: list[float] = Field(default_factory=list)
    mode: Literal["viscous", "elastic"] = "viscous"
    metric: Literal["div_v_l2", "F_distance"] = "div_v_l2"


class RunConfig(_Section):
    """Validated, immutable run configuration."""

    scenario: ScenarioSection
    domain: DomainSection = DomainSection()
    grid: GridSection = GridSection()
    material: MaterialSection = MaterialSection()
    energy: EnergySection = EnergySection()
    initial: InitialSection = InitialSection()
    forcing: ForcingSection = ForcingSection()
    time: TimeSection
    output: OutputSection = OutputSection()
    experiment: ExperimentSection = ExperimentSection()

    @model_validator(mode="after")
    def _check_grid(self):
        g = self.grid
        for n, m, axis in ((g.nx, g.mx, "mx"), (g.ny or g.nx, g.my, "my")):
            if m is not None and m < math.ceil(1.5 * n):
                raise ConfigError(f"grid.{axis}={m} is below the 3/2 dealiasing rule for {n} modes")
        if self.initial.prescribed and self.initial.velocity != "expression":
            raise ConfigError("initial.prescribed requires initial.velocity = \"expression\"")
        return self

    def replace(self, **sections) -> "RunConfig":
        """Copy with whole sections or ``section__key`` entries replaced."""
        data = self.model_dump()
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                data[sec][name] = value
            else:
                data[key] = value
        return parse_mapping(data)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        kind = e["type"]
        if kind == "missing":
            lines.append(f"missing required key {loc!r}")
        elif kind == "extra_forbidden":
            lines.append(f"unknown key {loc!r}")
        else:
            msg = e["msg"]
            ctx = e.get("ctx") or {}
            if isinstance(ctx.get("error"), ConfigError):
                msg = str(ctx["error"])
            lines.append(f"{loc}: {msg}")
    return "; ".join(lines)


def _strip_none(data):
    if isinstance(data, dict):
        return {k: _strip_none(v) for k, v in data.items() if v is not None}
    return data


def parse_mapping(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None


def parse_config(text: str) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as err:
            raise ConfigError(f"configuration is not UTF-8: {err}") from None
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"malformed TOML: {err}") from None
    return parse_mapping(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read configuration {path}: {err}") from None
    return parse_config(raw)


def serialize_config(cfg: RunConfig) -> str:
    """TOML text with every key spelled out (``None`` entries omitted)."""
    return tomli_w.dumps(_strip_none(cfg.model_dump()))


def default_config_text(name: str = "example", t_end: float = 1.0, dt: float = 1e-3) -> str:
    return serialize_config(parse_mapping({"scenario": {"name": name}, "time": {"t_end": t_end, "dt": dt}}))


# -- scenario construction ----------------------------------------------------

def stream_velocity(amplitude: float, Lx: float = 1.0, Ly: float = 1.0):
    """Single-cell flow of ``psi = A sin(pi x / Lx) sin(pi y / Ly)``, ``v = (d psi/dy, -d psi/dx)``."""
    a, b = math.pi / Lx, math.pi / Ly

    def v0(x, y):
        return amplitude * np.stack([b * np.sin(a * x) * np.cos(b * y), -a * np.cos(a * x) * np.sin(b * y)])
    return v0


def build_scenario(cfg: RunConfig) -> Scenario:
    """Turn a configuration into a :class:`Scenario` (all callables compiled)."""
    ini, frc = cfg.initial, cfg.forcing
    if ini.velocity == "zero":
        v0 = None
    elif ini.velocity == "stream":
        v0 = stream_velocity(ini.amplitude, cfg.domain.Lx, cfg.domain.Ly)
    else:
        fx, fy = expressions.compile_field(ini.velocity_x), expressions.compile_field(ini.velocity_y)

        def v0(x, y, fx=fx, fy=fy):
            return np.stack([fx(0.0, x, y), fy(0.0, x, y)])

    F0 = None
    if ini.deformation == "expression":
        comps = [[expressions.compile_field(getattr(ini, f"F_{a}{b}")) for b in "xy"] for a in "xy"]

        def F0(x, y, comps=comps):
            return np.array([[c(0.0, x, y) for c in row] for row in comps])

    body = None
    if frc.body_x.strip() != "0" or frc.body_y.strip() != "0":
        bx, by = expressions.compile_field(frc.body_x), expressions.compile_field(frc.body_y)

        def body(t, x, y, bx=bx, by=by):
            return np.stack([bx(t, x, y), by(t, x, y)])

    traction = {}
    for edge in EDGES:
        text = getattr(frc, f"traction_{edge}")
        if text is not None:
            traction[edge] = expressions.compile_field(text)

    try:
        scn = Scenario(domain=Domain(cfg.domain.Lx, cfg.domain.Ly), nx=cfg.grid.nx, ny=cfg.grid.ny,
                       mx=cfg.grid.mx, my=cfg.grid.my, material=cfg.material.build(),
                       energy=cfg.energy.build(), v0=v0, F0=F0, body_force=body,
                       traction=traction or None, t_end=cfg.time.t_end, dt=cfg.time.dt,
                       layout=cfg.grid.layout, track_return_map=cfg.output.track_return_map,
                       name=cfg.scenario.name)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    scn.energy.warn_growth()

    if ini.prescribed:
        fx, fy = expressions.compile_field(ini.velocity_x), expressions.compile_field(ini.velocity_y)
        basis = solver_for(scn).basis
        X, Y = basis.mesh()

        def prescribed(t, fx=fx, fy=fy):
            g = (fx(t, X, Y), fy(t, X, Y))
            return np.stack([basis.to_coeff(g[i], VELOCITY_FAMILIES[i]) for i in range(2)])

        scn = scn.with_(prescribed_velocity=prescribed)
    return scn
