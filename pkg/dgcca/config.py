"""Validated run, selection and study configuration, optionally loaded from YAML."""

import os
from pathlib import Path
from typing import Any, Literal, TypeVar

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from dgcca.errors import ConfigError

SelectionStage = Literal["L", "I0", "r_star", "delta", "sign"]

ModelT = TypeVar("ModelT", bound=BaseModel)


class SelectionConfig(BaseModel):
    """Significance levels and resampling settings for parameter selection."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    alpha_map: dict[SelectionStage, float] = Field(default_factory=dict)
    bootstrap: int = Field(2000, ge=1, description="BCa resamples for sign selection")
    rank_bootstrap: int = Field(500, ge=10, description="Resamples confirming the r_star boundary eigenvalue")
    rank_threshold_c: float = Field(2.0, gt=0.0)
    rank_quantile: float = Field(0.05, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)

    @field_validator("alpha_map")
    @classmethod
    def _levels_in_range(cls, value: dict[str, float]) -> dict[str, float]:
        for stage, level in value.items():
            if not 0.0 < level < 1.0:
                raise ValueError(f"level for {stage} must lie in (0, 1), got {level}")
        return value

    def level(self, stage: SelectionStage) -> float:
        """Significance level of one selection stage."""
        return self.alpha_map.get(stage, self.alpha)


class StudyConfig(BaseModel):
    """Settings of a replication study."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    reps: int = Field(100, ge=1)
    use_true_params: bool = True
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    threads: int = Field(1, ge=1)
    k_max: int | None = Field(None, ge=0)
    fdr_level: float = Field(0.05, gt=0.0, lt=1.0)
    top_fraction: float = Field(0.1, gt=0.0, le=1.0)


class RunConfig(BaseModel):
    """Everything one CLI invocation needs."""

    model_config = ConfigDict(extra="forbid")

    subcommand: Literal["decompose", "simulate", "evaluate"]
    views: list[Path] = Field(default_factory=list)
    out: Path | None = None
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    alpha_map: dict[SelectionStage, float] = Field(default_factory=dict)
    ranks: list[int] | None = None
    params_file: Path | None = None
    seed: int | None = Field(None, ge=0)
    bootstrap: int = Field(2000, ge=1)
    levels: int = Field(1, ge=1)
    pve_floor: float = Field(0.0, ge=0.0)
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    format: Literal["csv", "tsv", "binary"] = "csv"
    k_max: int | None = Field(None, ge=0)

    def selection(self, seed: int) -> SelectionConfig:
        return SelectionConfig(
            alpha=self.alpha,
            alpha_map=self.alpha_map,
            bootstrap=self.bootstrap,
            seed=seed,
            threads=self.threads,
        )

    def ensure_output_dir(self) -> Path:
        """Create the output directory and check it is writable.

        Raises:
            ConfigError: no directory given, or it cannot be written.
        """
        if self.out is None:
            raise ConfigError("an output directory is required")
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {self.out}: {e}") from e
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out} is not writable")
        return self.out


def build(model: type[ModelT], data: dict[str, Any]) -> ModelT:
    """Validate data into a config model, reporting problems as ConfigError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid {model.__name__}: {problems}") from e


def load_yaml(path: str | Path) -> dict[str, Any]:
    """Read a YAML mapping (empty file gives an empty mapping)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(data).__name__}")
    return data
