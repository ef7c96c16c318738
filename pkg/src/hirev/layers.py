"""Parameterized building blocks: dense layers, GRU cells, and the small CNN
backbone used as the feature extractor inside both model families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionMismatch, InvalidConfig, UnknownKind
from .rng import stream
from .tensor import Tensor, conv2d, global_avg_pool


@dataclass
class DenseLayer:
    W: Tensor  # [out, in]
    b: Tensor  # [out]
    activation: str = "none"  # none | mish | softmax


@dataclass
class GRUCell:
    Wz: Tensor
    Uz: Tensor
    bz: Tensor
    Wr: Tensor
    Ur: Tensor
    br: Tensor
    Wh: Tensor
    Uh: Tensor
    bh: Tensor


@dataclass(frozen=True)
class BackboneConfig:
    """Conv stages (filters, kernel, stride) ending in a global average pool.

    The pooled vector has one entry per final-stage filter, so the last
    stage's filter count must equal output_dim.
    """

    stages: tuple = ((8, 3, 2), (16, 3, 2), (32, 3, 2))
    output_dim: int = 32
    in_channels: int = 1


@dataclass
class BackboneParams:
    kernels: list = field(default_factory=list)  # one [F,C,kh,kw] tensor per stage
    biases: list = field(default_factory=list)  # one [F] tensor per stage


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape))


def init_dense(rng: np.random.Generator, in_dim: int, out_dim: int,
               activation: str = "none") -> DenseLayer:
    if in_dim < 1 or out_dim < 1:
        raise InvalidConfig(f"dense dims must be positive, got {in_dim}->{out_dim}")
    if activation not in ("none", "mish", "softmax"):
        raise InvalidConfig(f"unknown dense activation {activation!r}")
    W = glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim)
    return DenseLayer(W=W, b=Tensor(np.zeros(out_dim)), activation=activation)


def init_gru_cell(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> GRUCell:
    if input_dim < 1 or hidden_dim < 1:
        raise InvalidConfig(f"gru dims must be positive, got in={input_dim}, hidden={hidden_dim}")

    def w():
        return glorot_uniform(rng, (hidden_dim, input_dim), input_dim, hidden_dim)

    def u():
        return glorot_uniform(rng, (hidden_dim, hidden_dim), hidden_dim, hidden_dim)

    def b():
        return Tensor(np.zeros(hidden_dim))

    return GRUCell(Wz=w(), Uz=u(), bz=b(), Wr=w(), Ur=u(), br=b(),
                   Wh=w(), Uh=u(), bh=b())


def init_backbone(config: BackboneConfig, rng: np.random.Generator) -> BackboneParams:
    if not config.stages:
        raise InvalidConfig("backbone needs at least one conv stage")
    if config.stages[-1][0] != config.output_dim:
        raise InvalidConfig(
            f"global average pooling yields {config.stages[-1][0]} features, "
            f"but output_dim is {config.output_dim}")
    params = BackboneParams()
    in_ch = config.in_channels
    for filters, kernel, stride_ in config.stages:
        if filters < 1 or kernel < 1 or stride_ < 1:
            raise InvalidConfig(f"bad conv stage {(filters, kernel, stride_)}")
        fan_in = in_ch * kernel * kernel
        fan_out = filters * kernel * kernel
        params.kernels.append(
            glorot_uniform(rng, (filters, in_ch, kernel, kernel), fan_in, fan_out))
        params.biases.append(Tensor(np.zeros(filters)))
        in_ch = filters
    return params


def init_params(config, seed: int):
    """Seeded initializer dispatch for any layer config; bit-stable per seed."""
    rng = stream(seed, "init", type(config).__name__)
    if isinstance(config, BackboneConfig):
        return init_backbone(config, rng)
    if isinstance(config, tuple) and len(config) == 3 and config[0] == "dense":
        _, in_dim, out_dim = config
        return init_dense(rng, in_dim, out_dim)
    if isinstance(config, tuple) and len(config) == 3 and config[0] == "gru":
        _, in_dim, hidden = config
        return init_gru_cell(rng, in_dim, hidden)
    raise InvalidConfig(f"no initializer for config {config!r}")


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    """activation(W x + b) for a vector input."""
    if x.data.ndim != 1 or x.data.shape[0] != layer.W.data.shape[1]:
        raise DimensionMismatch(
            f"dense expects vector of length {layer.W.data.shape[1]}, got shape {x.data.shape}")
    pre = T.affine(layer.W, x, layer.b)
    if layer.activation == "none":
        return pre
    if layer.activation == "mish":
        return T.mish(pre)
    if layer.activation == "softmax":
        return T.softmax(pre)
    raise UnknownKind(f"unknown dense activation {layer.activation!r}")


def gru_step(cell: GRUCell, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU update.

    z and r gate via sigmoid, the candidate via tanh, and the new state is
    h' = (1 - z) * h_prev + z * h_cand, so z -> 0 freezes the state.
    """
    if x.data.ndim != 1 or x.data.shape[0] != cell.Wz.data.shape[1]:
        raise DimensionMismatch(
            f"gru expects input of length {cell.Wz.data.shape[1]}, got shape {x.data.shape}")
    if h_prev.data.ndim != 1 or h_prev.data.shape[0] != cell.Uz.data.shape[1]:
        raise DimensionMismatch(
            f"gru expects state of length {cell.Uz.data.shape[1]}, got shape {h_prev.data.shape}")
    z = T.sigmoid(T.affine_pair(cell.Wz, x, cell.Uz, h_prev, cell.bz))
    r = T.sigmoid(T.affine_pair(cell.Wr, x, cell.Ur, h_prev, cell.br))
    h_cand = T.tanh(T.affine_pair(cell.Wh, x, cell.Uh, r * h_prev, cell.bh))
    return (1.0 - z) * h_prev + z * h_cand


def backbone_forward(config: BackboneConfig, params: BackboneParams,
                     image: Tensor) -> Tensor:
    """conv -> mish per stage (stride downsampling), then global average pool."""
    x = image
    for (filters, _kernel, stride_), k, b in zip(config.stages, params.kernels,
                                                 params.biases):
        x = conv2d(x, k, stride_) + T.reshape(b, (filters, 1, 1))
        x = T.mish(x)
    return global_avg_pool(x)
