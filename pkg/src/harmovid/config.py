"""Pipeline configuration (strict schema) and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .diffusion.schedule import NoiseSchedule, linear_schedule
from .models import TrainRecipe


class ConfigError(ValueError):
    """Unknown keys or invalid values in a pipeline configuration."""


def _strict_kwargs(cls, d: dict, path: str) -> dict:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")
    return dict(d)


@dataclass(frozen=True)
class DatasetConfig:
    scenes_train: int = 24
    scenes_eval: int = 16
    frames: int = 16
    height: int = 32
    width: int = 32
    frame_rate: float = 8.0
    feather: int = 2
    lut_lattice: int = 5
    jitter_amplitude: float = 0.15
    harmonize_blend: float = 0.8
    context_radius: int = 3


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 64
    beta_start: float | None = None
    beta_end: float | None = None

    def build(self) -> NoiseSchedule:
        return linear_schedule(self.steps, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class ModelConfig:
    width: int = 64
    blocks: int = 4
    heads: int = 4
    temb_dim: int = 64
    patch: int = 4
    window: int = 16


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1200
    batch_size: int = 2
    learning_rate: float = 2e-3
    path_mix: float = 0.5

    def recipe(self, single_path: str | None = None) -> TrainRecipe:
        return TrainRecipe(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            path_mix=self.path_mix,
            single_path=single_path,
        )


@dataclass(frozen=True)
class MetricsConfig:
    band_inner: int = 1
    band_outer: int = 1
    frame_sim_seed: int = 7
    classical_window: int = 3


_SECTIONS = {
    "dataset": DatasetConfig,
    "schedule": ScheduleConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "metrics": MetricsConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_root: str = "runs"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        kwargs = _strict_kwargs(cls, d, "config")
        for name, section_cls in _SECTIONS.items():
            if name in kwargs:
                section = kwargs[name]
                if not isinstance(section, dict):
                    raise ConfigError(f"config.{name}: expected an object")
                kwargs[name] = section_cls(
                    **_strict_kwargs(section_cls, section, f"config.{name}")
                )
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


@dataclass
class RunManifest:
    """Provenance record for one pipeline stage run."""

    run_id: str
    stage: str
    config_hash: str
    seed: int
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    metric_reports: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, out_root) -> Path:
        """Write the per-run manifest and append to the run ledger."""
        out_root = Path(out_root)
        manifest_dir = out_root / "manifests"
        manifest_dir.mkdir(parents=True, exist_ok=True)
        path = manifest_dir / f"{self.run_id}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        with open(out_root / "runs.jsonl", "a") as fh:
            fh.write(json.dumps(self.to_dict(), sort_keys=True) + "\n")
        return path
