"""Experiment configuration: strict JSON sections, canonical hashing, overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from dataset.sources import DataSpec, NoiseConfig
from detector.sdd import DEFAULT_DELTA
from model.vit import ViTConfig
from optim.policy import TrainPolicy
from pruning.mask import PruneSchedule
from utils.config_loader import BASE_DIR
from utils.errors import ConfigError
from utils.io import atomic_write_json, canonical_json

PRESETS_DIR = BASE_DIR / "presets"


@dataclass(frozen=True)
class DetectConfig:
    delta: float = DEFAULT_DELTA
    smoothing_window: int = 1

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigError(f"detect.delta must be >= 0, got {self.delta}")
        if self.smoothing_window < 1:
            raise ConfigError(f"detect.smoothing_window must be >= 1, got {self.smoothing_window}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {
    "data": DataSpec,
    "noise": NoiseConfig,
    "model": ViTConfig,
    "train": TrainPolicy,
    "prune": PruneSchedule,
    "detect": DetectConfig,
}
TOP_LEVEL = ("seed", "output_dir", "name")


def _build(cls, values: dict, section: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key {section}.{unknown[0]}")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"invalid {section} section: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ViTConfig = field(default_factory=lambda: ViTConfig(num_classes=4))
    train: TrainPolicy = field(default_factory=TrainPolicy)
    prune: PruneSchedule = field(default_factory=PruneSchedule)
    detect: DetectConfig = field(default_factory=DetectConfig)
    seed: int = 0
    output_dir: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.model.num_classes != self.data.classes:
            raise ConfigError(f"model.num_classes={self.model.num_classes} but the data has {self.data.classes} classes")
        c, s, _ = self.data.image_shape
        if (self.model.channels, self.model.image_size) != (c, s):
            raise ConfigError(
                f"model expects {self.model.channels}x{self.model.image_size}x{self.model.image_size} "
                f"images, data provides {self.data.image_shape}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = sorted(set(raw) - set(SECTIONS) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]}")
        data = _build(DataSpec, raw.get("data", {}), "data")
        model = dict(raw.get("model", {})) if isinstance(raw.get("model", {}), dict) else raw["model"]
        if isinstance(model, dict):
            # model extents default to what the data provides
            model.setdefault("num_classes", data.classes)
            model.setdefault("channels", data.image_shape[0])
            model.setdefault("image_size", data.image_shape[1])
        sections = dict(raw, data=data.to_dict(), model=model)
        kwargs = {name: _build(sec_cls, sections.get(name, {}), name) for name, sec_cls in SECTIONS.items()}
        kwargs.update({k: raw[k] for k in TOP_LEVEL if k in raw})
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).to_dict() for name in SECTIONS}
        out.update({k: getattr(self, k) for k in TOP_LEVEL})
        return json.loads(json.dumps(out))

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical config, ignoring where it is written."""
        body = self.to_dict()
        body.pop("output_dir")
        return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()

    @property
    def run_id(self) -> str:
        return self.name or f"run-{self.config_hash[:10]}"

    def with_l2(self, l2: float, name: str | None = None) -> "ExperimentConfig":
        return replace(self, train=self.train.with_l2(l2), name=name or self.name)

    def with_output_dir(self, output_dir) -> "ExperimentConfig":
        return replace(self, output_dir=str(output_dir))

    def save(self, path: Path) -> Path:
        return atomic_write_json(path, self.to_dict())


def load_experiment(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return ExperimentConfig.from_dict(raw)


def load_preset(name: str) -> ExperimentConfig:
    path = PRESETS_DIR / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in PRESETS_DIR.glob("*.json"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(available)}")
    return load_experiment(path)


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply `section.key=value` (or top-level `key=value`) assignments.

    Values are parsed as YAML scalars/lists, so `0.5`, `true`, `[80, 120]`
    and bare strings all work.
    """
    if not overrides:
        return config
    raw = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        parsed = yaml.safe_load(value)
        if isinstance(parsed, str):
            # yaml leaves forms like 1e-4 as strings
            try:
                parsed = float(parsed)
            except ValueError:
                pass
        if len(parts) == 1:
            raw[parts[0]] = parsed
        elif len(parts) == 2 and parts[0] in SECTIONS:
            raw[parts[0]][parts[1]] = parsed
        else:
            raise ConfigError(f"unknown key {key}")
    return ExperimentConfig.from_dict(raw)
