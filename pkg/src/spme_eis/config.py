from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal, Mapping

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, FilePath, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from spme_eis.errors import ConfigError
from spme_eis.impedance import FrequencyGrid
from spme_eis.model.dae import Mesh, ModelMode

logger = logging.getLogger(__name__)

BOUND_PREFIX = "bound."


class Settings(BaseSettings):
    """Process-level settings from ``SPME_*`` environment variables or ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="SPME_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = "INFO"
    workers: int = 1
    executor: Literal["thread", "process"] = "thread"
    output_dir: Path = Path("runs")


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class RunConfig(BaseModel):
    """Settings of one CLI run, from a ``key = value`` file plus flag overrides."""

    model_config = ConfigDict(extra="forbid")

    mode: ModelMode = ModelMode.SPME
    n_r: int = 100
    n_x_neg: int = 100
    n_sep: int = 20
    n_x_pos: int = 100
    parameter_file: FilePath | None = None
    ocp_pos_file: FilePath | None = None
    ocp_neg_file: FilePath | None = None

    f_min: float = 2e-4
    f_max: float = 1e3
    ppd: float | None = 10.0
    n_freq: int | None = None
    socs: list[float] = [50.0]

    fit_mode: Literal["impedance", "voltage"] = "impedance"
    runs: int = 10
    max_iter: int = 1000
    swarm_size: int = 50
    seed: int = 0
    free: list[str] | None = None
    bounds: dict[str, tuple[float, float]] = {}

    amplitude: float = 0.1
    n_periods: int = 10
    n_discard: int = 5
    tol: float = 1e-9

    output_dir: Path | None = None

    @field_validator("socs", "free", mode="before")
    @classmethod
    def _comma_list(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("bounds", mode="before")
    @classmethod
    def _bound_pairs(cls, value: Any) -> Any:
        if isinstance(value, Mapping):
            return {k: _split_list(v) for k, v in value.items()}
        return value

    @field_validator("socs")
    @classmethod
    def _soc_range(cls, value: list[float]) -> list[float]:
        for soc in value:
            if not 0.0 <= soc <= 100.0:
                raise ValueError(f"soc {soc} outside [0, 100]")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> RunConfig:
        if self.n_discard >= self.n_periods:
            raise ValueError("n_discard must be smaller than n_periods")
        for name, (lo, hi) in self.bounds.items():
            if not lo <= hi:
                raise ValueError(f"bound.{name}: lower bound above upper bound")
        return self

    def mesh(self) -> Mesh:
        return Mesh(n_r=self.n_r, n_x_neg=self.n_x_neg, n_sep=self.n_sep, n_x_pos=self.n_x_pos)

    def grid(self) -> FrequencyGrid:
        if self.n_freq is not None:
            return FrequencyGrid.logspace(self.f_min, self.f_max, self.n_freq)
        return FrequencyGrid.per_decade(self.f_min, self.f_max, self.ppd or 10.0)

    def canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


def load_run_config(path: Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge a config file with overrides (overrides win; ``None`` means unset)."""
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw.update({k: v for k, v in dotenv_values(path, interpolate=False).items() if v is not None})

    bounds: dict[str, Any] = {}
    for key in [k for k in raw if k.startswith(BOUND_PREFIX)]:
        bounds[key[len(BOUND_PREFIX):]] = raw.pop(key)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "bounds":
            bounds.update(value)
        else:
            raw[key] = value
    if bounds:
        raw["bounds"] = bounds

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc
    logger.debug("Run config %s", config.digest()[:12])
    return config
