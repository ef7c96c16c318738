"""Run configuration: a single JSON document that, together with a dataset
pack, fully determines every experiment. Unknown keys are rejected so typos
fail loudly instead of silently using defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import GeneratorConfig
from .errors import InvalidConfig
from .hierarchy import ArchitectureConfig
from .train import TrainConfig


@dataclass(frozen=True)
class MetricsSection:
    gamma: int = 1


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/desk"
    dataset: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsSection = field(default_factory=MetricsSection)


def _build_section(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{where} must be a JSON object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise InvalidConfig(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key in ("backbone_stages", "fx_dense", "higher_head"):
            if not isinstance(value, list):
                raise InvalidConfig(f"{where}.{key} must be a list")
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f"bad {where} section: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise InvalidConfig("run config must be a JSON object")
    sections = {"seed", "output_dir", "dataset", "model", "train", "metrics"}
    unknown = set(doc) - sections
    if unknown:
        raise InvalidConfig(f"unknown top-level keys: {sorted(unknown)}")
    cfg = RunConfig(
        seed=int(doc.get("seed", 0)),
        output_dir=str(doc.get("output_dir", "runs/desk")),
        dataset=_build_section(GeneratorConfig, doc.get("dataset", {}), "dataset"),
        model=_build_section(ArchitectureConfig, doc.get("model", {}), "model"),
        train=_build_section(TrainConfig, doc.get("train", {}), "train"),
        metrics=_build_section(MetricsSection, doc.get("metrics", {}), "metrics"),
    )
    validate(cfg)
    return cfg


def _check_backbone_fits(stages, size: int, what: str) -> None:
    for i, (_filters, kernel, stride) in enumerate(stages):
        if kernel > size:
            raise InvalidConfig(
                f"backbone stage {i} kernel {kernel} exceeds its {size}-pixel input "
                f"when fed {what}")
        size = (size - kernel) // stride + 1


def validate(cfg: RunConfig) -> None:
    if cfg.model.window > cfg.dataset.image_size:
        raise InvalidConfig(
            f"window {cfg.model.window} exceeds image size {cfg.dataset.image_size}")
    if cfg.train.batch_size < 1 or cfg.train.epochs < 1:
        raise InvalidConfig("train.batch_size and train.epochs must be >= 1")
    if cfg.metrics.gamma < 0:
        raise InvalidConfig("metrics.gamma must be >= 0")
    if cfg.dataset.n_classes < 2:
        raise InvalidConfig("dataset.n_classes must be >= 2")
    _check_backbone_fits(cfg.model.backbone_stages, cfg.dataset.image_size,
                         "whole images")
    _check_backbone_fits(cfg.model.backbone_stages, cfg.model.window, "windows")


def config_to_dict(cfg: RunConfig) -> dict:
    def plain(value):
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {f.name: plain(getattr(value, f.name))
                    for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        return value

    return {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "dataset": plain(cfg.dataset),
        "model": plain(cfg.model),
        "train": plain(cfg.train),
        "metrics": plain(cfg.metrics),
    }


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def desk_config() -> RunConfig:
    """Desk-scale defaults: quick to train, every contract intact."""
    return RunConfig()


def paper_scale_config() -> RunConfig:
    """The published operating point: 224x224 RGB images, 64/32 windows
    (36 per image), the deep head widths, and batch size 128."""
    return RunConfig(
        output_dir="runs/paper",
        dataset=GeneratorConfig(n_classes=23, per_score=20, image_size=224,
                                channels=3, augment_per_raw=10),
        model=ArchitectureConfig(
            window=64,
            stride=32,
            backbone_stages=((16, 5, 2), (32, 3, 2), (64, 3, 2), (128, 3, 2)),
            fx_dense=(1024, 512),
            higher_head=(1024, 512, 256),
            encoder_hidden=128,
            decoder_hidden=128,
            attention_hidden=128,
        ),
        train=TrainConfig(batch_size=128, epochs=100),
    )
