"""Campaign configuration (JSON) with per-scenario defaults."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from stf.bench.registry import CONFIG_CLASSES, check_estimators, estimator_names
from stf.errors import ConfigError
from stf.inference import StfConfig


class StfSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    window_count: Optional[int] = Field(None, ge=1)
    order: Optional[int] = Field(None, ge=1)
    delay_steps: Optional[int] = Field(None, ge=0)
    horizon_steps: Optional[int] = Field(None, ge=1)


class OutputSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    csv: Optional[str] = None
    json_path: Optional[str] = Field(None, alias="json")


class CampaignConfig(BaseModel):
    """Monte-Carlo campaign settings.

    ``params`` overrides fields of the scenario's parameter set (e.g.
    ``{"R": 1e5}`` for scenario 3 or ``{"noise_var": 0.0025,
    "filter_noise_var": 0.01}`` for scenario 2).
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    scenario: Literal[1, 2, 3]
    runs: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    estimators: Optional[list[str]] = None
    stf: StfSettings = Field(default_factory=StfSettings)
    params: dict[str, float] = Field(default_factory=dict)
    output: OutputSettings = Field(default_factory=OutputSettings)
    jobs: int = Field(1, ge=1)
    timing: bool = True

    @field_validator("estimators")
    @classmethod
    def _known_estimators(cls, v, info: ValidationInfo):
        if v is not None and "scenario" in info.data:
            check_estimators(info.data["scenario"], v)
        return v

    @field_validator("params")
    @classmethod
    def _scalar_params(cls, v, info: ValidationInfo):
        if "scenario" not in info.data:
            return v
        scenario = info.data["scenario"]
        numeric = {
            f.name
            for f in dataclasses.fields(CONFIG_CLASSES[scenario])
            if f.type in ("int", "float", "float | None", int, float)
        }
        for key in v:
            if key not in numeric:
                raise ValueError(f"{key!r} is not a scalar parameter of scenario {scenario}; choose from {sorted(numeric)}")
        return v

    def estimator_list(self) -> list[str]:
        return list(self.estimators) if self.estimators is not None else estimator_names(self.scenario)

    def scenario_config(self):
        """The scenario's parameter set with ``params`` and ``stf`` applied."""
        cls = CONFIG_CLASSES[self.scenario]
        base = cls()
        int_fields = {f.name for f in dataclasses.fields(cls) if f.type in ("int", int)}
        kwargs = {}
        for k, v in self.params.items():
            if k in int_fields:
                if v != int(v):
                    raise ValueError(f"params.{k}: expected an integer, got {v}")
                v = int(v)
            kwargs[k] = v
        s = self.stf.model_dump(exclude_none=True)
        try:
            if s:
                kwargs["stf"] = dataclasses.replace(base.stf, **s)
        except ValueError as exc:
            raise ValueError(f"stf: {exc}") from None
        try:
            return dataclasses.replace(base, **kwargs)
        except ValueError as exc:
            raise ValueError(f"params: {exc}") from None


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> CampaignConfig:
    try:
        cfg = CampaignConfig.model_validate(data)
        cfg.scenario_config()
    except ValidationError as exc:
        raise ConfigError(f"invalid campaign config: {_describe(exc)}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid campaign config: {exc}") from None
    return cfg


def load_config(path) -> CampaignConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must hold a JSON object")
    return parse_config(data)


__all__ = ["CampaignConfig", "StfSettings", "OutputSettings", "load_config", "parse_config", "StfConfig"]
