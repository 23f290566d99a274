"""Run configuration: a YAML file validated against a strict schema.

Unknown keys are rejected at every level, so a typo fails before any
compute starts.  ``RunConfig.model_json_schema()`` publishes the schema.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .forecasters import NetConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    """Raised for unreadable or schema-invalid configuration files."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticData(_Strict):
    days: float = Field(80.0, gt=0)
    seed: int = 11
    resolution: float = Field(12.0, gt=0)
    noise: float = Field(0.0, ge=0)


class CsvData(_Strict):
    load: str | None = None
    wind: str | None = None
    value_column: str | None = None


class DataConfig(_Strict):
    synthetic: SyntheticData | None = None
    csv: CsvData | None = None
    history_hours: float = Field(24.0, gt=0)
    stride_hours: float = Field(6.0, gt=0)
    splits: tuple[float, float, float] = (0.7, 0.1, 0.2)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.synthetic is None) == (self.csv is None):
            raise ValueError("exactly one of 'synthetic' or 'csv' must be given")
        return self


class NetSettings(_Strict):
    d_h: int = Field(32, gt=0)
    encoder_hidden: tuple[int, ...] = (64,)
    decoder_hidden: tuple[int, ...] = (128, 64)
    direct_hidden: tuple[int, ...] = (64, 64)
    coord_scale: float = 1.0
    coef_scale: float = 0.1
    coord_sharpness: float = Field(1.0, ge=0)
    gamma: float = Field(0.0, ge=0)
    lr: float = Field(1e-2, gt=0)
    batch_size: int = Field(32, gt=0)
    max_epochs: int = Field(150, ge=0)
    patience: int = Field(40, gt=0)

    def for_seed(self, seed: int) -> NetConfig:
        return NetConfig(**self.model_dump(), seed=seed)


class ReconciliationConfig(_Strict):
    methods: tuple[Literal["none", "bu", "opt"], ...] = ("none", "bu", "opt")
    weighting: Literal["identity", "structural"] = "identity"


class DispatchConfig(_Strict):
    system: str | None = None
    backend: Literal["simplex", "highs"] = "simplex"
    days: int = Field(3, ge=1)
    penetrations: tuple[float, ...] = (0.2, 0.5, 0.8)
    wind_penetration: float = Field(0.5, gt=0)
    intraday_window_hours: float = Field(4.0, gt=0)


class DiagnosticConfig(_Strict):
    enabled: bool = True
    n_terms: int = Field(288, gt=0)
    target: Literal["load", "wind"] = "load"


class ToyConfig(_Strict):
    horizon: float = Field(10.0, gt=0)
    duration: float = Field(18.84955592153876, gt=0)  # three periods of sin t
    resolution: float = Field(20.0, gt=0)
    n_terms: tuple[int, ...] = (33, 161)
    hidden: tuple[int, ...] = (128, 128)
    steps: int = Field(20000, ge=0)
    lr: float = Field(3e-3, gt=0)
    coord_scale: float = 20.0
    diagnostic: DiagnosticConfig = DiagnosticConfig()


class RunConfig(_Strict):
    name: str = "experiment"
    data: DataConfig
    targets: tuple[Literal["load", "wind"], ...] = ("load", "wind")
    ladder: tuple[float, ...] = (1.0, 4.0, 12.0)
    horizon: float = Field(24.0, gt=0)
    models: tuple[Literal["hnl", "nl", "direct", "persistence"], ...] = ("hnl", "direct")
    net: NetSettings = NetSettings()
    nl_terms: int = Field(33, gt=0)
    reconciliation: ReconciliationConfig = ReconciliationConfig()
    seeds: tuple[int, ...] = (0,)
    dispatch: DispatchConfig = DispatchConfig()
    toy: ToyConfig = ToyConfig()

    @field_validator("ladder")
    @classmethod
    def _ascending(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] <= 0:
            raise ValueError("ladder must be positive and strictly ascending")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("seeds must be a non-empty list without duplicates")
        return v


def _format_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {_format_error(exc)}") from None


def config_hash(config: RunConfig) -> str:
    text = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()
