"""Finite-difference verification suite.

Every differentiable op, every layer, and both full model families (at a
reduced size so central differences stay tractable) are checked against
central finite differences. The CLI `grad-check` subcommand and the
acceptance tests share this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .hierarchy import ArchitectureConfig, init_flat, init_hierarchical
from .layers import dense_forward, gru_step, init_dense, init_gru_cell
from .models import attend, higher_forward, init_lower, lower_forward, model_loss
from .params import named_tensors, replace_tensors
from .rng import stream
from .tensor import Tensor, grad_check

TOLERANCE = 1e-4
EPS = 1e-5

# small enough that checking every coordinate of the probe tensors is cheap,
# large enough that every code path (tiling, attention, routing head) runs
CHECK_ARCH = ArchitectureConfig(
    window=8,
    stride=4,
    backbone_stages=((2, 3, 2), (4, 3, 2)),
    fx_dense=(6, 4),
    higher_head=(6, 5),
    encoder_hidden=4,
    decoder_hidden=4,
    attention_hidden=4,
)
CHECK_IMAGE_SIZE = 16
CHECK_CLASSES = 3


@dataclass
class CheckResult:
    name: str
    seed: int
    error: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def _op_checks(seed: int):
    rng = stream(seed, "gradcheck-ops")
    a23 = Tensor(rng.normal(size=(2, 3)))
    v3 = Tensor(rng.normal(size=3))
    m34 = Tensor(rng.normal(size=(3, 4)))
    img = Tensor(rng.normal(size=(2, 8, 8)))
    kern = Tensor(rng.normal(size=(3, 2, 3, 3)))
    probs_target = T.one_hot(1, 4)

    w43 = Tensor(rng.normal(size=(4, 3)))
    b4 = Tensor(rng.normal(size=4))

    def fixed_dropout(x):
        return T.dropout(x, 0.4, "train", stream(seed, "dropout-mask"))

    return {
        "op.add": (lambda x: T.tsum(T.mish(x + v3)), v3),
        "op.mul": (lambda x: T.tsum(T.mish(x * v3)), v3),
        "op.matmul.mat": (lambda x: T.tsum(T.mish(T.matmul(x, m34))), a23),
        "op.matmul.vec": (lambda x: T.tsum(T.mish(T.matmul(a23, x))), v3),
        "op.conv2d.input": (lambda x: T.tsum(T.mish(T.conv2d(x, kern, 2))), img),
        "op.conv2d.kernels": (lambda k: T.tsum(T.mish(T.conv2d(img, k, 2))), kern),
        "op.avg_pool2d": (lambda x: T.tsum(T.mish(T.avg_pool2d(x, 4, 2))), img),
        "op.crop2d": (lambda x: T.tsum(T.tanh(T.crop2d(x, 1, 2, 4, 4))), img),
        "op.concat": (lambda x: T.tsum(T.mish(T.concat(x, v3))), v3),
        "op.stack": (lambda x: T.tsum(T.tanh(T.stack([x, v3, x]))), v3),
        "op.sigmoid": (lambda x: T.tsum(T.elementwise("sigmoid", x)), v3),
        "op.tanh": (lambda x: T.tsum(T.elementwise("tanh", x)), v3),
        "op.relu": (lambda x: T.tsum(T.elementwise("relu", x + 0.3)), v3),
        "op.mish": (lambda x: T.tsum(T.mish(x)), v3),
        "op.softmax": (lambda x: T.tsum(T.mish(T.softmax(x))), v3),
        "op.dropout": (lambda x: T.tsum(fixed_dropout(x)), v3),
        "op.cross_entropy": (
            lambda x: T.cross_entropy(probs_target, T.softmax(x)),
            Tensor(rng.normal(size=4))),
        "op.affine": (lambda x: T.tsum(T.mish(T.affine(w43, x, b4))),
                      Tensor(rng.normal(size=3))),
        "op.transpose": (lambda x: T.tsum(T.mish(T.transpose(x))), a23),
        "op.reshape": (lambda x: T.tsum(T.mish(T.reshape(x, (6,)))), a23),
    }


def _layer_checks(seed: int):
    rng = stream(seed, "gradcheck-layers")
    dense = init_dense(rng, 4, 3, activation="mish")
    cell = init_gru_cell(rng, 3, 4)
    h_prev = Tensor(rng.normal(size=4))
    x3 = Tensor(rng.normal(size=3))

    def gru_wrt_params(cell_record, probe_name):
        probe = named_tensors(cell_record)[probe_name]

        def f(t):
            patched = replace_tensors(cell_record, {probe_name: t})
            return T.tsum(gru_step(patched, x3, h_prev))

        return f, probe

    gru_uh = gru_wrt_params(cell, "Uh")
    gru_bz = gru_wrt_params(cell, "bz")

    # alignment layer in isolation, with a live (nonzero) decoder state so the
    # W_r pathway carries healthy gradient magnitudes
    lower = init_lower(3, 2, 4, 4, seed=int(rng.integers(1 << 30)))
    r_prev = Tensor(rng.normal(size=4))
    a_seq = [Tensor(rng.normal(size=4)) for _ in range(5)]
    readout = Tensor(rng.normal(size=4))

    def attend_wrt(name):
        probe = named_tensors(lower)[name]

        def f(t):
            patched = replace_tensors(lower, {name: t})
            alpha, context = attend(patched, r_prev, a_seq)
            return T.matmul(context, readout) + T.tsum(alpha * alpha)

        return f, probe

    return {
        "layer.dense.x": (lambda x: T.tsum(dense_forward(dense, x)),
                          Tensor(rng.normal(size=4))),
        "layer.dense.W": (
            lambda w: T.tsum(dense_forward(
                replace_tensors(dense, {"W": w}), Tensor([0.5, -1.0, 2.0, 0.1]))),
            dense.W),
        "layer.gru.x": (lambda x: T.tsum(gru_step(cell, x, h_prev)), x3),
        "layer.gru.h": (lambda h: T.tsum(gru_step(cell, x3, h)), h_prev),
        "layer.gru.Uh": gru_uh,
        "layer.gru.bz": gru_bz,
        "layer.attend.W_r": attend_wrt("attn_W_r"),
        "layer.attend.W_a": attend_wrt("attn_W_a"),
        "layer.attend.v": attend_wrt("attn_v"),
        "layer.attend.r": (
            lambda r: T.matmul(attend(lower, r, a_seq)[1], readout), r_prev),
    }


def _model_checks(seed: int):
    arch = CHECK_ARCH
    model = init_hierarchical(arch, CHECK_CLASSES, CHECK_IMAGE_SIZE, 1, seed=seed)
    flat = init_flat(arch, CHECK_IMAGE_SIZE, 1, seed=seed + 1000)
    image = Tensor(stream(seed, "gradcheck-image").random((1, CHECK_IMAGE_SIZE,
                                                           CHECK_IMAGE_SIZE)))

    def higher_loss_wrt_image(img):
        probs = higher_forward(model.higher, img, "eval")
        return model_loss("higher", 1, probs)

    def higher_loss_wrt(name):
        tensors = named_tensors(model.higher)
        probe = tensors[name]

        def f(t):
            patched = replace_tensors(model.higher, {name: t})
            probs = higher_forward(patched, image, "eval")
            return model_loss("higher", 1, probs)

        return f, probe

    def lower_loss_wrt_image(img):
        probs = lower_forward(model.shared_fx, model.lowers[0], img, model.spec)
        return model_loss("lower", 2, probs)

    def lower_loss_wrt(owner: str, name: str):
        record = model.shared_fx if owner == "fx" else model.lowers[0]
        probe = named_tensors(record)[name]

        def f(t):
            patched = replace_tensors(record, {name: t})
            if owner == "fx":
                probs = lower_forward(patched, model.lowers[0], image, model.spec)
            else:
                probs = lower_forward(model.shared_fx, patched, image, model.spec)
            return model_loss("lower", 2, probs)

        return f, probe

    def flat_loss_wrt_image(img):
        probs = lower_forward(flat.fx, flat.lower, img, flat.spec)
        return model_loss("lower", 0, probs)

    checks = {
        "model.higher.image": (higher_loss_wrt_image, image),
        "model.higher.conv0": higher_loss_wrt("backbone.kernels.0"),
        "model.higher.head_b": higher_loss_wrt("head.0.b"),
        "model.lower.image": (lower_loss_wrt_image, image),
        "model.lower.fx_conv0": lower_loss_wrt("fx", "backbone.kernels.0"),
        "model.lower.fx_dense_b": lower_loss_wrt("fx", "dense.1.b"),
        "model.lower.enc_fwd_Uh": lower_loss_wrt("lower", "encoder_fwd.Uh"),
        "model.lower.enc_bwd_bz": lower_loss_wrt("lower", "encoder_bwd.bz"),
        "model.lower.attn_v": lower_loss_wrt("lower", "attn_v"),
        "model.lower.decoder_bh": lower_loss_wrt("lower", "decoder.bh"),
        "model.lower.head_W": lower_loss_wrt("lower", "score_head.W"),
        "model.flat.image": (flat_loss_wrt_image, image),
    }
    return checks


def run_grad_suite(seeds=range(5)) -> list:
    """Run every check for every seed; returns CheckResult rows."""
    results = []
    for seed in seeds:
        suites = {}
        suites.update(_op_checks(seed))
        suites.update(_layer_checks(seed))
        suites.update(_model_checks(seed))
        for name, (f, probe) in suites.items():
            results.append(CheckResult(name=name, seed=seed,
                                       error=grad_check(f, probe, eps=EPS)))
    return results
