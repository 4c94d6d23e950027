"""Experiment configuration: YAML file validated against a pydantic schema."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .model import LightTailLaw, PowerLawModel, SpectralMeasure, TruncationSchedule
from .regions import RadialCapRegion, SphereCap

EXPERIMENTS = ("ratio_window", "kth_order", "boundary", "ldp_slope", "moderate",
               "limits_table", "regime_report")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _angle(v):
    if isinstance(v, str) and v.strip().lower() in {"pi", "full"}:
        return math.pi
    return v


class RegionSpec(_Strict):
    r_lo: float = Field(gt=0)
    r_hi: Union[float, Literal["inf"]] = "inf"
    axis: list[float]
    half_angle: float = math.pi

    _half = field_validator("half_angle", mode="before")(_angle)

    def build(self) -> RadialCapRegion:
        r_hi = math.inf if self.r_hi == "inf" else float(self.r_hi)
        return RadialCapRegion(self.r_lo, r_hi, tuple(self.axis), self.half_angle)


class CapSpec(_Strict):
    axis: list[float]
    half_angle: float = math.pi

    _half = field_validator("half_angle", mode="before")(_angle)

    def build(self) -> SphereCap:
        return SphereCap(tuple(self.axis), self.half_angle)


class ModelSpec(_Strict):
    alpha: float = Field(gt=0)
    dim: int = Field(ge=1)
    atoms: list[list[float]] = Field(default_factory=list)
    isotropic_weight: float = Field(default=0.0, ge=0)

    def build(self, strict: bool = True) -> PowerLawModel:
        atoms = []
        for row in self.atoms:
            if len(row) != self.dim + 1:
                raise ConfigError([f"model.atoms: entry {row} needs {self.dim} coordinates and a weight"])
            atoms.append((tuple(row[:-1]), row[-1]))
        spectral = SpectralMeasure(tuple(atoms), self.isotropic_weight, self.dim)
        return PowerLawModel(self.alpha, spectral, strict=strict)


class LightTailSpec(_Strict):
    kind: Literal["zero", "exponential", "uniform"] = "zero"
    param: float = 0.0


class ScheduleSpec(_Strict):
    trunc_coeff: float = Field(default=1.0, gt=0)
    trunc_exponent: float = Field(gt=0)
    light_tail: LightTailSpec = Field(default_factory=LightTailSpec)
    gamma_md: float = Field(default=0.5, gt=0)

    def build(self) -> TruncationSchedule:
        return TruncationSchedule(self.trunc_coeff, self.trunc_exponent,
                                  LightTailLaw(self.light_tail.kind, self.light_tail.param),
                                  self.gamma_md)


NGrid = list[int]


class RatioWindowParams(_Strict):
    lambda_exponent: float
    region: RegionSpec
    n_grid: NGrid = Field(min_length=1)


class KthOrderParams(_Strict):
    k: int = Field(ge=1)
    region: RegionSpec
    n_grid: NGrid = Field(min_length=1)
    method: Literal["plain", "ktagged"] = "plain"
    tag_level: float | None = None


class BoundaryParams(_Strict):
    k: int = Field(ge=1)
    cap: CapSpec
    n_grid: NGrid = Field(min_length=1)
    stable_mode: Literal["auto", "analytic_symmetric", "monte_carlo"] = "auto"
    stable_n: int = Field(default=1000, ge=1)
    stable_samples: int = Field(default=20_000, ge=2)


class LdpSlopeParams(_Strict):
    x: list[float]
    n_grid: NGrid = Field(min_length=1)
    sampler: Literal["plain", "tilted"] = "plain"
    tilt: Literal["saddle", "asymptotic"] = "saddle"


class ModerateParams(_Strict):
    kappa: float | Literal["mid"] = "mid"
    x: list[float]
    n_grid: NGrid = Field(min_length=1)
    sampler: Literal["plain", "tilted"] = "plain"


class LimitsTableParams(_Strict):
    k: int = Field(default=1, ge=1)
    regions: list[RegionSpec] = Field(min_length=1)
    method: Literal["quadrature", "monte_carlo"] = "quadrature"
    samples: int = Field(default=1_000_000, ge=1)
    xt_t: float | None = Field(default=None, gt=0)


class RegimeReportParams(_Strict):
    n_grid: NGrid = Field(default_factory=lambda: [10, 100, 1000, 10000])


PARAMS = {
    "ratio_window": RatioWindowParams,
    "kth_order": KthOrderParams,
    "boundary": BoundaryParams,
    "ldp_slope": LdpSlopeParams,
    "moderate": ModerateParams,
    "limits_table": LimitsTableParams,
    "regime_report": RegimeReportParams,
}


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    seed: int = 0
    reps: int = Field(default=10_000, ge=1)
    chunk_reps: int = Field(default=10_000, ge=1)
    output_dir: str = "results"
    model: ModelSpec
    schedule: ScheduleSpec
    params: dict = Field(default_factory=dict)

    def typed_params(self):
        return PARAMS[self.experiment].model_validate(self.params)


def _problems(err: ValidationError, prefix: str = "") -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        out.append(f"{prefix}{loc}: {e['msg']}")
    return out


def parse_config(data: dict) -> tuple[ExperimentConfig, BaseModel]:
    """Validate a raw mapping; raise :class:`ConfigError` listing every problem."""
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be a mapping"])
    problems: list[str] = []
    cfg = None
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as err:
        problems += _problems(err)
    params = None
    experiment = data.get("experiment")
    if experiment in PARAMS:
        try:
            params = PARAMS[experiment].model_validate(data.get("params") or {})
        except ValidationError as err:
            problems += _problems(err, "params.")
    if problems:
        raise ConfigError(problems)
    return cfg, params


def load_config(path: str | Path) -> tuple[ExperimentConfig, BaseModel]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError([f"config: cannot read {path}: {err.strerror}"]) from err
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError([f"config: not valid YAML ({err})"]) from err
    return parse_config(data)
