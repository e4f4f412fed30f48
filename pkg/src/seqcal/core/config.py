"""Configuration management using pydantic-settings."""

import os
from functools import lru_cache
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

from seqcal.core.errors import ConfigError
from seqcal.core.models import AcquisitionSpec, FitConfig
from seqcal.performance.models import AcqTimeModel, CurveConfig, RunTimeModel

load_dotenv(override=False)

DEFAULT_CONFIG_PATH = Path("config/default.yaml")


def _default_output_root() -> Path:
    return Path(os.getenv("SEQCAL_OUTPUT_ROOT", "./runs"))


class AppConfig(BaseModel):
    """Application-wide settings."""

    model_config = ConfigDict(extra="forbid")

    log_level: str = Field(default="INFO", pattern="(?i)^(debug|info|warning|error|critical)$")
    log_format: str = Field(default="console", pattern="^(console|json)$")
    output_root: Path = Field(default_factory=_default_output_root)
    jobs: int = Field(default=1, ge=1, description="concurrent replicates / grid cells")


class DesignConfig(BaseModel):
    """Sequential design run settings."""

    model_config = ConfigDict(extra="forbid")

    problem: str = "sphere"
    lower: list[float] | None = None
    upper: list[float] | None = None
    observation: float | None = None
    noise_var: float | None = Field(default=None, gt=0)
    n0: int = Field(default=10, ge=2)
    n: int = Field(default=200, ge=1)
    b: int = Field(default=1, ge=1)
    w: int = Field(default=1, ge=1)
    replicates: int = Field(default=1, ge=1)
    seed: int = 0
    acquisition: AcquisitionSpec = Field(default_factory=AcquisitionSpec)
    fit: FitConfig = Field(default_factory=FitConfig)
    compute_mad: bool | None = Field(default=None, description="default: on for testbed problems")
    mad_grid: int = Field(default=50, ge=2)
    record_timing: bool = True

    @field_validator("w")
    @classmethod
    def _check_pool(cls, w: int, info: ValidationInfo) -> int:
        b = info.data.get("b")
        n = info.data.get("n")
        if b is not None and b > w:
            raise ValueError(f"batch size b={b} must not exceed worker count w={w}")
        if n is not None and w > n:
            raise ValueError(f"worker count w={w} must not exceed budget n={n}")
        return w


class GridConfig(BaseModel):
    """Batch-size / worker-count / run-time-mean sweep."""

    model_config = ConfigDict(extra="forbid")

    batch_sizes: list[int] = Field(default_factory=lambda: [1], min_length=1)
    workers: list[int] = Field(default_factory=lambda: [1], min_length=1)
    runtime_means: list[float] = Field(default_factory=list)
    runtime_std_ratio: float | None = Field(default=None, ge=0)


class PerfConfig(BaseModel):
    """Monte Carlo performance model settings."""

    model_config = ConfigDict(extra="forbid")

    label: str = "hybrid"
    alpha: float = Field(default=0.1, gt=0, lt=1)
    replicates: int = Field(default=30, ge=1)
    seed: int = 0
    curve: CurveConfig = Field(default_factory=CurveConfig)
    acq_time: AcqTimeModel = Field(default_factory=AcqTimeModel)
    run_time: RunTimeModel = Field(default_factory=RunTimeModel)
    grid: GridConfig = Field(default_factory=GridConfig)


class ReportConfig(BaseModel):
    """Report generation settings."""

    model_config = ConfigDict(extra="forbid")

    inputs: list[Path] = Field(default_factory=list)
    baseline_workers: int | None = Field(default=None, ge=1)


class Settings(BaseSettings):
    """Main configuration class."""

    model_config = SettingsConfigDict(
        env_prefix="SEQCAL_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    app: AppConfig = Field(default_factory=AppConfig)
    design: DesignConfig = Field(default_factory=DesignConfig)
    perf: PerfConfig = Field(default_factory=PerfConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)


KeyPath = tuple[str | int, ...]


def _collect_marks(node: yaml.Node, path: KeyPath, marks: dict[KeyPath, int]) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = (*path, str(key_node.value))
            marks[child] = key_node.start_mark.line + 1
            _collect_marks(value_node, child, marks)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            child = (*path, i)
            marks[child] = item.start_mark.line + 1
            _collect_marks(item, child, marks)


def load_yaml_config(config_path: Path) -> tuple[dict[str, Any], dict[KeyPath, int]]:
    """Load a YAML config file plus a map from key path to 1-based line number."""
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    text = config_path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) or {}
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {e}", line=mark.line + 1 if mark else None) from e
    if not isinstance(data, dict):
        raise ConfigError("top level of the config file must be a mapping", line=1)
    marks: dict[KeyPath, int] = {}
    if root is not None:
        _collect_marks(root, (), marks)
    return data, marks


def _deep_merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _override_paths(overrides: dict[str, Any], prefix: KeyPath = ()) -> set[KeyPath]:
    paths: set[KeyPath] = set()
    for key, value in overrides.items():
        path = (*prefix, key)
        if isinstance(value, dict):
            paths |= _override_paths(value, path)
        else:
            paths.add(path)
    return paths


def _line_for(loc: KeyPath, marks: dict[KeyPath, int]) -> int | None:
    for end in range(len(loc), 0, -1):
        line = marks.get(loc[:end])
        if line is not None:
            return line if line > 0 else None
    return None


def load_settings(
    config_path: Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> Settings:
    """Resolve settings with precedence CLI overrides > config file > environment > defaults."""
    data: dict[str, Any] = {}
    marks: dict[KeyPath, int] = {}
    if config_path is not None:
        data, marks = load_yaml_config(config_path)
    if overrides:
        data = _deep_merge(data, overrides)
        # values set on the command line have no file position
        for path in _override_paths(overrides):
            marks = {k: v for k, v in marks.items() if k[: len(path)] != path}
            marks[path] = -1
    try:
        return Settings(**data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first["loc"])
        where = ".".join(str(part) for part in loc) or "<root>"
        source = f"{config_path}: " if config_path is not None and _line_for(loc, marks) else ""
        raise ConfigError(f"{source}{where}: {first['msg']}", line=_line_for(loc, marks)) from e


@lru_cache
def get_config(config_path: Path | None = None) -> Settings:
    """Get configuration instance (cached)."""
    if config_path is None and DEFAULT_CONFIG_PATH.exists():
        config_path = DEFAULT_CONFIG_PATH
    return load_settings(config_path)


def config_schema() -> dict[str, Any]:
    """JSON schema of the config file."""
    return Settings.model_json_schema()
