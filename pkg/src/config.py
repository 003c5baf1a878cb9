from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import yaml

from .errors import ValidationError
from .model import DEFAULT_SCHEDULE, SCHEMES
from .synthetic import SyntheticWorldConfig

RESOLVED_CONFIG_NAME = "config.resolved.yaml"


@dataclass
class RunConfig:
    # data
    manifest: str = "data/synthetic/manifest.csv"
    data_dir: str = "data/synthetic"
    output_dir: str = "runs/default"
    checkpoint: str = "runs/default/model.ckpt"
    # model
    channel_schedule: list[int] = field(default_factory=lambda: list(DEFAULT_SCHEDULE))
    scheme: str = "I"
    ground_height: int = 64
    ground_width: int = 128
    satellite_height: int = 112
    satellite_width: int = 112
    gem_p: float = 3.0
    # training
    batch_size: int = 12
    lr: float = 1e-5
    alpha: float = 10.0
    steps: int = 2000
    epochs: int = 0
    seed: int = 1
    augment: bool = True
    checkpoint_every: int = 500
    workers: int = 8
    # synthetic world
    n_locations: int = 600
    n_test: int = 200
    landmarks_per_location: int = 6
    meters_per_pixel: float = 0.12
    min_landmark_range: float = 5.0
    max_landmark_range: float = 6.5
    noise_level: float = 0.05
    grid_spacing: float = 25.0
    # evaluation
    recall_ks: list[int] = field(default_factory=lambda: [1, 5, 10])
    localization_radius: float = 5.0
    localization_top: int = 1
    sweep_levels: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    top_k: int = 10

    def validate(self) -> "RunConfig":
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if len(self.channel_schedule) != 7 or min(self.channel_schedule) < 1:
            raise ValidationError(f"channel_schedule needs 7 positive entries: {self.channel_schedule}")
        for key in ("ground_height", "ground_width", "satellite_height", "satellite_width",
                    "batch_size", "workers", "top_k", "localization_top"):
            if getattr(self, key) < 1:
                raise ValidationError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.steps < 0 or self.epochs < 0:
            raise ValidationError("steps and epochs must be >= 0")
        if self.steps == 0 and self.epochs == 0:
            raise ValidationError("set steps or epochs (or both) to bound training")
        if self.lr <= 0 or self.alpha < 0 or self.gem_p < 1:
            raise ValidationError("need lr > 0, alpha >= 0 and gem_p >= 1")
        if any(k < 1 for k in self.recall_ks):
            raise ValidationError(f"recall_ks must be >= 1: {self.recall_ks}")
        if sorted(self.sweep_levels) != list(self.sweep_levels):
            raise ValidationError(f"sweep_levels must be ascending: {self.sweep_levels}")
        return self

    def world(self) -> SyntheticWorldConfig:
        return SyntheticWorldConfig(
            n_locations=self.n_locations,
            n_test=self.n_test,
            landmarks_per_location=self.landmarks_per_location,
            panorama_width=self.ground_width,
            panorama_height=self.ground_height,
            overhead_width=self.satellite_width,
            overhead_height=self.satellite_height,
            meters_per_pixel=self.meters_per_pixel,
            min_landmark_range=self.min_landmark_range,
            max_landmark_range=self.max_landmark_range,
            noise_level=self.noise_level,
            grid_spacing=self.grid_spacing,
            seed=self.seed,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def field_kind(name: str) -> type:
    """Python type a RunConfig key parses to (list fields report list)."""
    default = getattr(RunConfig(), name)
    return type(default)


def _coerce(name: str, value: Any) -> Any:
    kind = field_kind(name)
    default = getattr(RunConfig(), name)
    try:
        if kind is bool:
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind is list:
            if isinstance(value, str):
                value = yaml.safe_load(value if value.strip().startswith("[") else f"[{value}]")
            if not isinstance(value, list):
                raise ValueError(value)
            item = type(default[0]) if default else float
            return [item(v) for v in value]
        if isinstance(value, (dict, list)):
            raise ValueError(value)
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ValidationError(f"config key {name!r}: cannot use {value!r} as {kind.__name__}") from None


def apply_overrides(cfg: RunConfig, values: dict[str, Any]) -> RunConfig:
    """Return a copy of cfg with values applied; unknown keys are rejected."""
    merged = asdict(cfg)
    for key, value in values.items():
        if key not in _FIELDS:
            raise ValidationError(f"unknown config key: {key!r}")
        merged[key] = _coerce(key, value)
    return RunConfig(**merged)


def load_run_config(path: Optional[str]) -> RunConfig:
    """Read a flat YAML mapping of RunConfig keys; a missing path gives the defaults."""
    if not path:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"{path}: not valid YAML ({e})") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a flat key: value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ValidationError(f"{path}: nested mapping under {key!r} is not allowed")
    return apply_overrides(RunConfig(), data)


def write_resolved_config(cfg: RunConfig, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, RESOLVED_CONFIG_NAME)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(asdict(cfg), f, sort_keys=False, allow_unicode=True)
    return path
