"""Composition of the two levels: routing, the flat ablation, evaluation,
and the accuracy-combination arithmetic."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .layers import BackboneConfig
from .likert import SCORE_LOW
from .metrics import (
    MetricsReport,
    PredictionRecord,
    exact_accuracy,
    improvement_ratio,
    per_class_summary,
    relaxed_accuracy,
    score_confusion,
    topk_accuracy,
)
from .models import (
    HigherModel,
    LowerModel,
    WindowExtractor,
    higher_forward,
    init_higher,
    init_lower,
    init_window_extractor,
    lower_forward,
)
from .tiling import TilingSpec


@dataclass(frozen=True)
class ArchitectureConfig:
    """Structural dimensions shared by both model families."""

    window: int = 16
    stride: int = 8
    backbone_stages: tuple = ((8, 3, 2), (16, 3, 2), (32, 3, 2))
    fx_dense: tuple = (64, 32)
    higher_head: tuple = (64, 32, 16)
    encoder_hidden: int = 32
    decoder_hidden: int = 32
    attention_hidden: int = 32
    dropout: float = 0.2
    extra_class: bool = False

    @property
    def feature_dim(self) -> int:
        return self.fx_dense[-1] if self.fx_dense else self.backbone_stages[-1][0]

    def backbone(self, channels: int) -> BackboneConfig:
        return BackboneConfig(stages=tuple(tuple(s) for s in self.backbone_stages),
                              output_dim=self.backbone_stages[-1][0],
                              in_channels=channels)


@dataclass
class HierarchicalModel:
    """Higher-level router plus one lower-level scorer per product class.

    All lower models read features from the single shared window extractor.
    """

    higher: HigherModel
    shared_fx: WindowExtractor
    lowers: list
    spec: TilingSpec
    arch: ArchitectureConfig
    n_classes: int


@dataclass
class FlatModel:
    """Single-level ablation: one scorer over all classes, no routing."""

    fx: WindowExtractor
    lower: LowerModel
    spec: TilingSpec
    arch: ArchitectureConfig


@dataclass
class Prediction:
    class_index: int
    class_probs: np.ndarray
    score: int
    score_probs: np.ndarray


def init_hierarchical(arch: ArchitectureConfig, n_classes: int, image_size: int,
                      channels: int, seed: int) -> HierarchicalModel:
    spec = TilingSpec(image_size, arch.window, arch.stride)
    head_classes = n_classes + (1 if arch.extra_class else 0)
    higher = init_higher(head_classes, arch.backbone(channels), arch.higher_head,
                         seed=seed, dropout_rate=arch.dropout)
    fx = init_window_extractor(arch.backbone(channels), arch.fx_dense, seed=seed)
    lowers = [
        init_lower(arch.feature_dim, arch.encoder_hidden, arch.decoder_hidden,
                   arch.attention_hidden, seed=seed, salt=i)
        for i in range(n_classes)
    ]
    return HierarchicalModel(higher=higher, shared_fx=fx, lowers=lowers,
                             spec=spec, arch=arch, n_classes=n_classes)


def init_flat(arch: ArchitectureConfig, image_size: int, channels: int,
              seed: int) -> FlatModel:
    spec = TilingSpec(image_size, arch.window, arch.stride)
    fx = init_window_extractor(arch.backbone(channels), arch.fx_dense, seed=seed)
    lower = init_lower(arch.feature_dim, arch.encoder_hidden, arch.decoder_hidden,
                       arch.attention_hidden, seed=seed, salt=0)
    return FlatModel(fx=fx, lower=lower, spec=spec, arch=arch)


def predict(model: HierarchicalModel, image) -> Prediction:
    """Route by the higher model's argmax, then score with that class's expert.

    Ties break toward the lowest class index; an extra out-of-catalog class
    slot (when configured) never routes, since it has no expert.
    """
    class_probs = higher_forward(model.higher, image, "eval").data
    routed = int(np.argmax(class_probs[:model.n_classes]))
    score_probs = lower_forward(model.shared_fx, model.lowers[routed], image,
                                model.spec).data
    return Prediction(
        class_index=routed,
        class_probs=class_probs,
        score=SCORE_LOW + int(np.argmax(score_probs)),
        score_probs=score_probs,
    )


def predict_flat(flat: FlatModel, image) -> tuple:
    """Score straight from the image; returns (score, score_probs)."""
    score_probs = lower_forward(flat.fx, flat.lower, image, flat.spec).data
    return SCORE_LOW + int(np.argmax(score_probs)), score_probs


def combine_accuracy(acc_higher: float, mean_acc_lower: float) -> float:
    """Product of the stage accuracies (the two-stage reporting arithmetic)."""
    for name, value in (("acc_higher", acc_higher), ("mean_acc_lower", mean_acc_lower)):
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"{name} must be in [0, 1], got {value}")
    return acc_higher * mean_acc_lower


def _worker_count(n_items: int) -> int:
    env = os.environ.get("HR_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_items))


def evaluate_hierarchical(model: HierarchicalModel, samples) -> list:
    """Eval-mode prediction records for every sample (thread fan-out allowed)."""
    samples = list(samples)

    def run(sample) -> PredictionRecord:
        pred = predict(model, sample.image)
        return PredictionRecord(
            sample_id=sample.sample_id,
            true_score=sample.score,
            predicted_score=pred.score,
            score_probs=pred.score_probs,
            true_class=sample.product_class,
            predicted_class=pred.class_index,
            class_probs=pred.class_probs,
        )

    workers = _worker_count(len(samples))
    if workers == 1 or len(samples) < 2:
        return [run(s) for s in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, samples))


def evaluate_flat(flat: FlatModel, samples) -> list:
    """Prediction records for the single-level ablation (no class fields)."""
    samples = list(samples)

    def run(sample) -> PredictionRecord:
        score, probs = predict_flat(flat, sample.image)
        return PredictionRecord(
            sample_id=sample.sample_id,
            true_score=sample.score,
            predicted_score=score,
            score_probs=probs,
            true_class=sample.product_class,
        )

    workers = _worker_count(len(samples))
    if workers == 1 or len(samples) < 2:
        return [run(s) for s in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, samples))


def hierarchical_report(records, gamma: int = 1,
                        flat_records=None) -> MetricsReport:
    """Assemble the full metrics report from evaluation records.

    The overall accuracy is reported two ways: empirically (predicted vs true
    score, routing mistakes included) and as the product of the class top-1
    accuracy with the mean per-class score accuracy. A misrouted image can
    still score correctly, so the two can differ.
    """
    records = list(records)
    summary = per_class_summary(records, gamma)
    top1 = topk_accuracy(records, 1, "class")
    n_labels = len(records[0].class_probs) if records else 1
    top5 = topk_accuracy(records, min(5, n_labels), "class")
    report = MetricsReport(
        top1=top1,
        top5=top5,
        mean_accuracy=summary.mean_accuracy,
        mean_relaxed_accuracy=summary.mean_relaxed_accuracy,
        overall_empirical=exact_accuracy(records, "score"),
        overall_combined=combine_accuracy(top1, summary.mean_accuracy),
        gamma=gamma,
        per_class=summary,
        score_confusion=score_confusion(records),
    )
    if flat_records is not None:
        flat_acc = exact_accuracy(list(flat_records), "score")
        report.flat_accuracy = flat_acc
        if flat_acc > 0.0:
            report.improvement_vs_flat = improvement_ratio(
                report.overall_empirical, flat_acc)
    return report
