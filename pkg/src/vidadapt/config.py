"""Experiment configuration: strict JSON loading, validation, serialization.

Unknown keys are hard errors (silent typos corrupt comparisons), every default
is filled in explicitly, and the fully resolved config is written back into the
run directory so any run can be reproduced from its artifacts alone.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .data import SynthSpec
from .distill import LossConfig
from .errors import ConfigError
from .model import FreezeSchedule, ViTConfig
from .sampler import SamplerConfig
from .trainer import TrainConfig


@dataclass
class EvalConfig:
    k: int = 1
    metric: str = "euclidean"
    split_ratio: float = 0.75

    def validate(self):
        if self.k < 1:
            raise ConfigError("eval.k must be >= 1")
        if self.metric not in ("euclidean", "cosine"):
            raise ConfigError(f"eval.metric must be 'euclidean' or 'cosine', got {self.metric!r}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("eval.split_ratio must be in (0, 1)")


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str | None = None
    threads: int | None = None
    delta_specs: list = field(default_factory=lambda: [1, 5, [5, 10]])
    data: SynthSpec = field(default_factory=SynthSpec)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ViTConfig = field(default_factory=ViTConfig)
    freeze: FreezeSchedule = field(default_factory=FreezeSchedule)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _build(dc_type, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object, got {type(data).__name__}")
    proto = dc_type()
    names = {f.name for f in dataclasses.fields(dc_type)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown config key: {where}")
        default = getattr(proto, key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, where)
        elif isinstance(default, tuple) and isinstance(value, (list, tuple)):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return dc_type(**kwargs)


def normalize_delta_spec(entry) -> dict:
    """Accepts int (fixed offset) or [lo, hi]; returns {delta_min, delta_max, label}."""
    if isinstance(entry, dict):
        lo, hi = entry["delta_min"], entry["delta_max"]
    elif isinstance(entry, (list, tuple)):
        lo, hi = entry
    else:
        lo = hi = int(entry)
    if not 1 <= lo <= hi:
        raise ConfigError(f"invalid delta spec {entry!r}: need 1 <= lo <= hi")
    label = str(lo) if lo == hi else f"random[{lo},{hi}]"
    return {"delta_min": int(lo), "delta_max": int(hi), "label": label}


def validate_experiment(cfg: ExperimentConfig) -> ExperimentConfig:
    cfg.data.validate()
    cfg.sampler.validate()
    cfg.augment.validate()
    cfg.model.validate()
    cfg.freeze.validate(cfg.model.depth)
    cfg.loss.validate()
    cfg.train.validate()
    cfg.eval.validate()
    if cfg.data.image_size != cfg.model.image_size:
        raise ConfigError(
            f"data.image_size ({cfg.data.image_size}) must equal model.image_size "
            f"({cfg.model.image_size})")
    if cfg.augment.global_size != cfg.model.image_size:
        raise ConfigError(
            f"augment.global_size ({cfg.augment.global_size}) must equal model.image_size "
            f"({cfg.model.image_size})")
    if cfg.augment.local_size % cfg.model.patch_size != 0:
        raise ConfigError(
            f"augment.local_size ({cfg.augment.local_size}) must be divisible by "
            f"model.patch_size ({cfg.model.patch_size})")
    if cfg.sampler.delta_max >= cfg.data.frames_per_video:
        raise ConfigError(
            f"sampler.delta_max ({cfg.sampler.delta_max}) must be below "
            f"data.frames_per_video ({cfg.data.frames_per_video})")
    for entry in cfg.delta_specs:
        spec = normalize_delta_spec(entry)
        if spec["delta_max"] >= cfg.data.frames_per_video:
            raise ConfigError(
                f"delta spec {spec['label']} needs delta_max < data.frames_per_video "
                f"({cfg.data.frames_per_video})")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    return validate_experiment(_build(ExperimentConfig, data, ""))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def convert(obj):
        if dataclasses.is_dataclass(obj):
            return {k: convert(v) for k, v in vars(obj).items()}
        if isinstance(obj, tuple):
            return list(obj)
        if isinstance(obj, list):
            return [convert(v) for v in obj]
        return obj
    return convert(cfg)


def save_resolved(cfg: ExperimentConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.json"
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
    return path
