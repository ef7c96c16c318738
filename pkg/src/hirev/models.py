"""The two model families.

The higher-level model classifies the product category from the whole image
(CNN backbone + four-layer dense head). Each lower-level model predicts the
review score from the image's window-feature sequence: a shared window
extractor feeds a bidirectional GRU encoder, an additive-alignment attention
produces a context vector per decoder step, and a unidirectional GRU decoder
runs the same number of steps as there are windows before a softmax score
head reads its final state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionMismatch, EmptySequence, IndexOutOfRange
from .layers import (
    BackboneConfig,
    BackboneParams,
    DenseLayer,
    GRUCell,
    backbone_forward,
    dense_forward,
    glorot_uniform,
    gru_step,
    init_backbone,
    init_dense,
    init_gru_cell,
)
from .likert import SCORE_COUNT
from .rng import stream
from .tensor import Tensor, cross_entropy, dropout, one_hot, softmax
from .tiling import TilingSpec, tile


@dataclass
class HigherModel:
    """Product-category classifier: backbone + mish dense head + softmax."""

    backbone_config: BackboneConfig
    backbone: BackboneParams
    head: list  # DenseLayer; mish except the final softmax layer
    n_classes: int
    dropout_rate: float = 0.2


@dataclass
class WindowExtractor:
    """Per-window feature network shared by every lower-level model."""

    backbone_config: BackboneConfig
    backbone: BackboneParams
    dense: list = field(default_factory=list)  # two mish layers


@dataclass
class LowerModel:
    """Attention encoder-decoder emitting a distribution over the score scale."""

    encoder_fwd: GRUCell
    encoder_bwd: GRUCell
    attn_W_r: Tensor  # [Ha, Hd] decoder-state projection
    attn_W_a: Tensor  # [Ha, 2He] encoder-state projection
    attn_b: Tensor  # [Ha]
    attn_v: Tensor  # [Ha] scoring vector
    decoder: GRUCell
    score_head: DenseLayer


def init_higher(n_classes: int, backbone_config: BackboneConfig, head_dims,
                seed: int, dropout_rate: float = 0.2) -> HigherModel:
    rng = stream(seed, "higher")
    backbone = init_backbone(backbone_config, rng)
    head = []
    in_dim = backbone_config.output_dim
    for dim in head_dims:
        head.append(init_dense(rng, in_dim, dim, activation="mish"))
        in_dim = dim
    head.append(init_dense(rng, in_dim, n_classes, activation="softmax"))
    return HigherModel(backbone_config=backbone_config, backbone=backbone,
                       head=head, n_classes=n_classes, dropout_rate=dropout_rate)


def init_window_extractor(backbone_config: BackboneConfig, dense_dims,
                          seed: int) -> WindowExtractor:
    rng = stream(seed, "fx")
    backbone = init_backbone(backbone_config, rng)
    dense = []
    in_dim = backbone_config.output_dim
    for dim in dense_dims:
        dense.append(init_dense(rng, in_dim, dim, activation="mish"))
        in_dim = dim
    return WindowExtractor(backbone_config=backbone_config, backbone=backbone,
                           dense=dense)


def init_lower(feature_dim: int, encoder_hidden: int, decoder_hidden: int,
               attention_hidden: int, seed: int, salt: int = 0) -> LowerModel:
    rng = stream(seed, "lower", salt)
    enc_fwd = init_gru_cell(rng, feature_dim, encoder_hidden)
    enc_bwd = init_gru_cell(rng, feature_dim, encoder_hidden)
    state_dim = 2 * encoder_hidden
    attn_W_r = glorot_uniform(rng, (attention_hidden, decoder_hidden),
                              decoder_hidden, attention_hidden)
    attn_W_a = glorot_uniform(rng, (attention_hidden, state_dim),
                              state_dim, attention_hidden)
    attn_b = Tensor(np.zeros(attention_hidden))
    attn_v = glorot_uniform(rng, (attention_hidden,), attention_hidden, 1)
    decoder = init_gru_cell(rng, state_dim, decoder_hidden)
    score_head = init_dense(rng, decoder_hidden, SCORE_COUNT, activation="softmax")
    return LowerModel(encoder_fwd=enc_fwd, encoder_bwd=enc_bwd,
                      attn_W_r=attn_W_r, attn_W_a=attn_W_a, attn_b=attn_b,
                      attn_v=attn_v, decoder=decoder, score_head=score_head)


def higher_forward(model: HigherModel, image: Tensor, mode: str = "eval",
                   rng: np.random.Generator | None = None) -> Tensor:
    """Class probabilities for one image; dropout active only in train mode.

    Dropout precedes every head layer except the first, i.e. the last three
    of the four dense layers.
    """
    x = backbone_forward(model.backbone_config, model.backbone, image)
    for i, layer in enumerate(model.head):
        if i > 0:
            x = dropout(x, model.dropout_rate, mode, rng)
        x = dense_forward(layer, x)
    return x


def window_features(fx: WindowExtractor, image: Tensor, spec: TilingSpec) -> list:
    """One feature vector per window, in tile() order."""
    feats = []
    for window in tile(image, spec):
        x = backbone_forward(fx.backbone_config, fx.backbone, window)
        for layer in fx.dense:
            x = dense_forward(layer, x)
        feats.append(x)
    return feats


def encode(model: LowerModel, xs) -> list:
    """Bidirectional encoding: per step, [forward state; backward state]."""
    if len(xs) == 0:
        raise EmptySequence("encoder needs at least one feature vector")
    hidden = model.encoder_fwd.Uz.data.shape[1]
    h = Tensor(np.zeros(hidden))
    forward = []
    for x in xs:
        h = gru_step(model.encoder_fwd, x, h)
        forward.append(h)
    h = Tensor(np.zeros(hidden))
    backward_rev = []
    for x in reversed(xs):
        h = gru_step(model.encoder_bwd, x, h)
        backward_rev.append(h)
    backward = list(reversed(backward_rev))
    return [T.concat(f, b) for f, b in zip(forward, backward)]


def _attend_precomputed(model: LowerModel, r_prev: Tensor, states: Tensor,
                        keys: Tensor) -> tuple:
    query = T.affine(model.attn_W_r, r_prev, model.attn_b)  # [Ha]
    scores = T.matmul(T.tanh(keys + T.reshape(query, (1, -1))), model.attn_v)  # [T]
    alpha = softmax(scores)
    context = T.matmul(alpha, states)  # [2He]
    return alpha, context


def attend(model: LowerModel, r_prev: Tensor, a_seq) -> tuple:
    """Additive alignment over encoder states.

    Scores e_t' = v . tanh(W_r r_prev + W_a a_t' + b) are softmax-normalized
    per decoder step, and the context is the alpha-weighted sum of states.
    Returns (alpha, context).
    """
    if r_prev.data.ndim != 1 or r_prev.data.shape[0] != model.attn_W_r.data.shape[1]:
        raise DimensionMismatch(
            f"attend expects decoder state of length {model.attn_W_r.data.shape[1]}, "
            f"got shape {r_prev.data.shape}")
    states = T.stack(a_seq)  # [T, 2He]
    keys = T.matmul(states, T.transpose(model.attn_W_a))  # [T, Ha]
    return _attend_precomputed(model, r_prev, states, keys)


def decode(model: LowerModel, a_seq, collect_alphas: list | None = None) -> Tensor:
    """Run the decoder for as many steps as there are encoder states.

    Each step attends over the full encoder sequence and feeds the context
    vector into the GRU; the score distribution reads the final state. The
    stacked states and their key projections do not depend on the step, so
    they are computed once.
    """
    if len(a_seq) == 0:
        raise EmptySequence("decoder needs at least one encoder state")
    states = T.stack(a_seq)
    keys = T.matmul(states, T.transpose(model.attn_W_a))
    hidden = model.decoder.Uz.data.shape[1]
    r = Tensor(np.zeros(hidden))
    for _ in range(len(a_seq)):
        alpha, context = _attend_precomputed(model, r, states, keys)
        if collect_alphas is not None:
            collect_alphas.append(alpha)
        r = gru_step(model.decoder, context, r)
    return dense_forward(model.score_head, r)


def score_from_features(model: LowerModel, xs,
                        collect_alphas: list | None = None) -> Tensor:
    """Encoder + attentive decoder over precomputed window features."""
    a_seq = encode(model, xs)
    return decode(model, a_seq, collect_alphas)


def lower_forward(fx: WindowExtractor, model: LowerModel, image: Tensor,
                  spec: TilingSpec, collect_alphas: list | None = None) -> Tensor:
    """Window features -> bidirectional encoding -> attentive decoding."""
    xs = window_features(fx, image, spec)
    return score_from_features(model, xs, collect_alphas)


def model_loss(kind: str, target_index: int, probs: Tensor) -> Tensor:
    """Cross-entropy of a one-hot target against predicted probabilities."""
    n = probs.data.shape[0]
    if not 0 <= target_index < n:
        raise IndexOutOfRange(f"{kind} target {target_index} outside [0, {n})")
    return cross_entropy(one_hot(target_index, n), probs)
