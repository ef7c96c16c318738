"""Mini-batch Adam training over a selected model slice.

One fit call trains one target: the higher-level classifier, one lower-level
scorer (jointly with the shared window extractor unless frozen), or the flat
ablation. Per-sample gradients are computed on individual tapes and averaged
over the batch; shuffling and dropout draw from streams derived from the
config seed, so identical (data, config) runs produce bit-identical
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, LabelOutOfRange, UnknownKind
from .hierarchy import FlatModel, HierarchicalModel
from .likert import SCORE_HIGH, SCORE_LOW, score_to_index
from .models import (
    higher_forward,
    lower_forward,
    model_loss,
    score_from_features,
    window_features,
)
from .optim import AdamHyper, AdamState, adam_step
from .params import named_tensors, replace_tensors, watch_record
from .rng import stream
from .tensor import Tape, backward


@dataclass
class TrainConfig:
    mode: str = "higher"  # higher | lower:<i> | flat
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    freeze_fx: bool = False
    stop_at_accuracy: float | None = None  # early exit once the epoch hits it


@dataclass
class TraceRow:
    epoch: int
    split: str
    loss: float
    accuracy: float


@dataclass
class FitResult:
    trace: list = field(default_factory=list)
    steps: int = 0  # optimizer updates performed

    @property
    def final_accuracy(self) -> float:
        return self.trace[-1].accuracy if self.trace else 0.0


def _parse_mode(mode: str) -> tuple:
    if mode == "higher" or mode == "flat":
        return mode, None
    if mode.startswith("lower:"):
        try:
            return "lower", int(mode.split(":", 1)[1])
        except ValueError:
            pass
    raise UnknownKind(f"train mode must be higher, lower:<i>, or flat; got {mode!r}")


def _check_labels(samples, n_classes: int | None):
    for s in samples:
        if not SCORE_LOW <= s.score <= SCORE_HIGH:
            raise LabelOutOfRange(f"sample {s.sample_id} score {s.score}")
        if n_classes is not None and not 0 <= s.product_class < n_classes:
            raise LabelOutOfRange(f"sample {s.sample_id} class {s.product_class}")


def _run_sgd(record, samples, config: TrainConfig, loss_fn, commit) -> FitResult:
    """The shared inner loop: shuffle, batch, average grads, Adam step."""
    if not samples:
        raise EmptyDataset("no training samples for this target")
    state = AdamState(AdamHyper(config.learning_rate, config.beta1,
                                config.beta2, config.epsilon))
    params = named_tensors(record)
    result = FitResult()
    for epoch in range(config.epochs):
        order = stream(config.seed, "shuffle", epoch).permutation(len(samples))
        losses = []
        hits = 0
        for start in range(0, len(samples), config.batch_size):
            batch = order[start:start + config.batch_size]
            grad_sum = dict.fromkeys(params)
            for sidx in batch:
                sample = samples[int(sidx)]
                tape = Tape()
                bound, index = watch_record(tape, record)
                rng = stream(config.seed, "dropout", epoch, int(sidx))
                loss, correct = loss_fn(bound, sample, rng)
                grads = backward(tape, loss)
                losses.append(loss.item())
                hits += int(correct)
                for name, nid in index.items():
                    g = grads[nid]
                    grad_sum[name] = g if grad_sum[name] is None else grad_sum[name] + g
            scale = 1.0 / len(batch)
            mean_grads = {name: g * scale for name, g in grad_sum.items()}
            params, state = adam_step(params, mean_grads, state)
            record = replace_tensors(record, params)
            result.steps += 1
        accuracy = hits / len(samples)
        result.trace.append(TraceRow(epoch, "train", float(np.mean(losses)), accuracy))
        if config.stop_at_accuracy is not None and accuracy >= config.stop_at_accuracy:
            break
    commit(record)
    return result


def fit(system, train_set, config: TrainConfig) -> FitResult:
    """Train the slice selected by config.mode; updates `system` in place.

    `system` is a HierarchicalModel for the higher/lower modes and a
    FlatModel for flat. lower:<i> trains on the class-i subset and, unless
    freeze_fx is set, fine-tunes the shared window extractor along the way.
    Returns the per-epoch loss/accuracy trace.
    """
    train_set = list(train_set)
    if not train_set:
        raise EmptyDataset("empty training set")
    kind, index = _parse_mode(config.mode)

    if kind == "higher":
        if not isinstance(system, HierarchicalModel):
            raise UnknownKind("higher mode expects a HierarchicalModel")
        _check_labels(train_set, system.n_classes)

        def loss_fn(bound, sample, rng):
            probs = higher_forward(bound, sample.image, "train", rng)
            loss = model_loss("higher", sample.product_class, probs)
            return loss, int(np.argmax(probs.data)) == sample.product_class

        def commit(new):
            system.higher = new

        return _run_sgd(system.higher, train_set, config, loss_fn, commit)

    if kind == "lower":
        if not isinstance(system, HierarchicalModel):
            raise UnknownKind("lower mode expects a HierarchicalModel")
        if not 0 <= index < system.n_classes:
            raise LabelOutOfRange(f"no lower model for class {index}")
        _check_labels(train_set, system.n_classes)
        subset = [s for s in train_set if s.product_class == index]

        if config.freeze_fx:
            def commit(new):
                system.lowers[index] = new

            return _run_frozen_fx(system.shared_fx, system.lowers[index],
                                  system.spec, subset, config, commit)

        spec = system.spec

        def loss_fn(bound, sample, rng):
            fx, lower = bound
            probs = lower_forward(fx, lower, sample.image, spec)
            loss = model_loss("lower", score_to_index(sample.score), probs)
            return loss, SCORE_LOW + int(np.argmax(probs.data)) == sample.score

        def commit(new):
            system.shared_fx, system.lowers[index] = new

        return _run_sgd((system.shared_fx, system.lowers[index]), subset, config,
                        loss_fn, commit)

    # flat
    if not isinstance(system, FlatModel):
        raise UnknownKind("flat mode expects a FlatModel")
    _check_labels(train_set, None)

    if config.freeze_fx:
        def commit(new):
            system.lower = new

        return _run_frozen_fx(system.fx, system.lower, system.spec, train_set,
                              config, commit)

    spec = system.spec

    def loss_fn(bound, sample, rng):
        fx, lower = bound
        probs = lower_forward(fx, lower, sample.image, spec)
        loss = model_loss("lower", score_to_index(sample.score), probs)
        return loss, SCORE_LOW + int(np.argmax(probs.data)) == sample.score

    def commit(new):
        system.fx, system.lower = new

    return _run_sgd((system.fx, system.lower), train_set, config, loss_fn, commit)


def _run_frozen_fx(fx, lower, spec, subset, config: TrainConfig, commit) -> FitResult:
    """Scorer training with a frozen extractor: window features are constant
    per sample, so they are computed once and reused every epoch."""
    if not subset:
        raise EmptyDataset("no training samples for this target")
    cached = {s.sample_id: window_features(fx, s.image, spec) for s in subset}

    def loss_fn(bound, sample, rng):
        probs = score_from_features(bound, cached[sample.sample_id])
        loss = model_loss("lower", score_to_index(sample.score), probs)
        return loss, SCORE_LOW + int(np.argmax(probs.data)) == sample.score

    return _run_sgd(lower, subset, config, loss_fn, commit)


def train_hierarchy(model: HierarchicalModel, train_set, config: TrainConfig,
                    lower_epochs: int | None = None) -> dict:
    """Fit the higher model, then every lower model in class order.

    Returns {target: FitResult}. The shared window extractor accumulates
    fine-tuning from each lower fit (unless frozen in the config).
    """
    from dataclasses import replace

    results = {"higher": fit(model, train_set, replace(config, mode="higher"))}
    for i in range(model.n_classes):
        cfg = replace(config, mode=f"lower:{i}")
        if lower_epochs is not None:
            cfg = replace(cfg, epochs=lower_epochs)
        results[f"lower:{i}"] = fit(model, train_set, cfg)
    return results


def train_flat(flat: FlatModel, train_set, config: TrainConfig) -> FitResult:
    from dataclasses import replace

    return fit(flat, train_set, replace(config, mode="flat"))
