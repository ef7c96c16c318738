"""Dense float64 tensors with a recorded-tape reverse-mode gradient engine.

A `Tensor` is an immutable value wrapping a C-contiguous float64 ndarray.
Ops compute eagerly; when an operand is watched on a `Tape`, the op appends a
node holding the inputs' node ids and one vector-Jacobian closure per input.
`backward` then sweeps the tape once in reverse creation order, which is a
valid topological order by construction.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidRate,
    KernelLargerThanInput,
    NonPositiveStride,
    NonScalarLoss,
    NotOneHot,
    ShapeMismatch,
    UnknownKind,
)

PROB_FLOOR = 1e-12  # clamp applied to probabilities before log


class Tensor:
    """Immutable dense array, optionally tied to a tape node."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: "Tape | None" = None, node_id: int | None = None):
        if type(data) is np.ndarray and data.dtype == np.float64 and data.flags["C_CONTIGUOUS"]:
            self.data = data
        else:
            arr = np.asarray(data, dtype=np.float64)
            # ascontiguousarray would promote 0-d to 1-d; 0-d is already contiguous
            self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f", node={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # arithmetic sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class _Node:
    __slots__ = ("op", "inputs", "vjps", "value")

    def __init__(self, op, inputs, vjps, value):
        self.op = op
        self.inputs = inputs  # tuple of node ids (None marks a constant input)
        self.vjps = vjps  # one closure per input: grad_out -> grad_in
        self.value = value


class Tape:
    """Ordered record of ops; every input id precedes its consumer."""

    __slots__ = ("nodes", "last_visit_counts")

    def __init__(self):
        self.nodes = []
        self.last_visit_counts: np.ndarray | None = None

    def _append(self, op, inputs, vjps, value) -> int:
        self.nodes.append(_Node(op, tuple(inputs), tuple(vjps), value))
        return len(self.nodes) - 1

    def watch(self, t: Tensor) -> Tensor:
        """Register a leaf (parameter or input) so backward can reach it."""
        t = as_tensor(t)
        nid = self._append("leaf", (), (), t.data)
        return Tensor(t.data, self, nid)

    def leaf_ids(self):
        return [i for i, n in enumerate(self.nodes) if n.op == "leaf"]


def _common_tape(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError("operands recorded on different tapes")
    return tape


def _emit(op: str, out_data: np.ndarray, srcs: Sequence[Tensor],
          vjps: Sequence[Callable]) -> Tensor:
    tape = _common_tape(*srcs)
    if tape is None:
        return Tensor(out_data)
    ids = tuple(t.node_id if t.tape is tape else None for t in srcs)
    nid = tape._append(op, ids, vjps, out_data)
    return Tensor(out_data, tape, nid)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, inverting numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(grad.reshape(shape))


# --- elementwise arithmetic -------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    if a.data.shape == b.data.shape:  # fast path: no unbroadcast needed
        return _emit("add", out, (a, b), (lambda g: g, lambda g: g))
    return _emit("add", out, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(g, b.data.shape),
    ))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    if a.data.shape == b.data.shape:
        return _emit("sub", out, (a, b), (lambda g: g, lambda g: -g))
    return _emit("sub", out, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(-g, b.data.shape),
    ))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:
        return _emit("mul", out, (a, b), (lambda g: g * bd, lambda g: g * ad))
    return _emit("mul", out, (a, b), (
        lambda g: _unbroadcast(g * bd, ad.shape),
        lambda g: _unbroadcast(g * ad, bd.shape),
    ))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), (lambda g: -g,))


def tsum(a: Tensor) -> Tensor:
    """Full reduction to a scalar."""
    shape = a.data.shape
    return _emit("sum", np.asarray(a.data.sum()), (a,),
                 (lambda g: np.full(shape, float(g)),))


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape
    return _emit("mean", np.asarray(a.data.mean()), (a,),
                 (lambda g: np.full(shape, float(g) / n),))


# --- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product following numpy `@` semantics for ndim <= 2."""
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2:
        raise DimensionMismatch(f"matmul expects 1D/2D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise DimensionMismatch(f"inner dimensions differ: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    if ad.ndim == 2 and bd.ndim == 2:
        vjps = (lambda g: g @ bd.T, lambda g: ad.T @ g)
    elif ad.ndim == 2 and bd.ndim == 1:
        vjps = (lambda g: np.outer(g, bd), lambda g: ad.T @ g)
    elif ad.ndim == 1 and bd.ndim == 2:
        vjps = (lambda g: bd @ g, lambda g: np.outer(ad, g))
    else:  # 1D @ 1D -> scalar
        vjps = (lambda g: float(g) * bd, lambda g: float(g) * ad)
    return _emit("matmul", out, (a, b), vjps)


def affine(W: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """W @ x + b as a single tape node (dense-layer hot path)."""
    Wd, xd, bd = W.data, x.data, b.data
    if Wd.ndim != 2 or xd.ndim != 1 or Wd.shape[1] != xd.shape[0] or bd.shape != (Wd.shape[0],):
        raise DimensionMismatch(
            f"affine expects [o,i] @ [i] + [o], got {Wd.shape}, {xd.shape}, {bd.shape}")
    out = Wd @ xd + bd
    return _emit("affine", out, (W, x, b), (
        lambda g: np.outer(g, xd),
        lambda g: Wd.T @ g,
        lambda g: g,
    ))


def affine_pair(W: Tensor, x: Tensor, U: Tensor, h: Tensor, b: Tensor) -> Tensor:
    """W @ x + U @ h + b as a single tape node (recurrent-gate hot path)."""
    Wd, xd, Ud, hd, bd = W.data, x.data, U.data, h.data, b.data
    if (Wd.ndim != 2 or Ud.ndim != 2 or Wd.shape[1] != xd.shape[0]
            or Ud.shape[1] != hd.shape[0] or Wd.shape[0] != Ud.shape[0]
            or bd.shape != (Wd.shape[0],)):
        raise DimensionMismatch(
            f"affine_pair shapes disagree: {Wd.shape}, {xd.shape}, {Ud.shape}, "
            f"{hd.shape}, {bd.shape}")
    out = Wd @ xd + Ud @ hd + bd
    return _emit("affine_pair", out, (W, x, U, h, b), (
        lambda g: np.outer(g, xd),
        lambda g: Wd.T @ g,
        lambda g: np.outer(g, hd),
        lambda g: Ud.T @ g,
        lambda g: g,
    ))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionMismatch(f"transpose expects a matrix, got shape {a.data.shape}")
    return _emit("transpose", np.ascontiguousarray(a.data.T), (a,),
                 (lambda g: np.ascontiguousarray(g.T),))


def reshape(a: Tensor, shape) -> Tensor:
    # tensors are immutable, so sharing the buffer with the parent is safe
    old = a.data.shape
    return _emit("reshape", a.data.reshape(shape), (a,),
                 (lambda g: np.ascontiguousarray(g).reshape(old),))


# --- structural ops ---------------------------------------------------------

def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim:
        raise ShapeMismatch(f"concat rank mismatch: {ad.shape} vs {bd.shape}")
    for ax in range(ad.ndim):
        if ax != axis % ad.ndim and ad.shape[ax] != bd.shape[ax]:
            raise ShapeMismatch(f"concat shapes differ off-axis: {ad.shape} vs {bd.shape}")
    out = np.concatenate([ad, bd], axis=axis)
    split = ad.shape[axis % ad.ndim]

    def take(g, start, stop):
        idx = [slice(None)] * g.ndim
        idx[axis % g.ndim] = slice(start, stop)
        return np.ascontiguousarray(g[tuple(idx)])

    return _emit("concat", out, (a, b), (
        lambda g: take(g, 0, split),
        lambda g: take(g, split, None),
    ))


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one row per input."""
    if len(tensors) == 0:
        raise EmptyInput("stack of zero tensors")
    dim = tensors[0].data.shape
    for t in tensors:
        if t.data.shape != dim:
            raise ShapeMismatch("stack inputs must share a shape")
    out = np.stack([t.data for t in tensors])
    vjps = tuple((lambda g, i=i: np.ascontiguousarray(g[i])) for i in range(len(tensors)))
    return _emit("stack", out, tuple(tensors), vjps)


def crop2d(x: Tensor, row: int, col: int, height: int, width: int) -> Tensor:
    """Exact [C, height, width] sub-slice of a [C, H, W] tensor."""
    xd = x.data
    if xd.ndim != 3:
        raise DimensionMismatch(f"crop2d expects [C,H,W], got shape {xd.shape}")
    if row < 0 or col < 0 or row + height > xd.shape[1] or col + width > xd.shape[2]:
        raise KernelLargerThanInput(
            f"crop [{row}:{row + height}, {col}:{col + width}] exceeds input {xd.shape}")
    out = np.ascontiguousarray(xd[:, row:row + height, col:col + width])
    full = xd.shape

    def scatter(g):
        gx = np.zeros(full)
        gx[:, row:row + height, col:col + width] = g
        return gx

    return _emit("crop2d", out, (x,), (scatter,))


# --- convolution / pooling --------------------------------------------------

def conv2d(x: Tensor, k: Tensor, stride: int = 1) -> Tensor:
    """Valid-padding convolution: x[C,H,W] * k[F,C,kh,kw] -> [F,H',W']."""
    xd, kd = x.data, k.data
    if xd.ndim != 3 or kd.ndim != 4:
        raise DimensionMismatch(f"conv2d expects [C,H,W] and [F,C,kh,kw], got {xd.shape}, {kd.shape}")
    if xd.shape[0] != kd.shape[1]:
        raise DimensionMismatch(f"channel mismatch: input {xd.shape[0]}, kernels {kd.shape[1]}")
    if stride < 1 or int(stride) != stride:
        raise NonPositiveStride(f"stride must be a positive int, got {stride}")
    kh, kw = kd.shape[2], kd.shape[3]
    if kh > xd.shape[1] or kw > xd.shape[2]:
        raise KernelLargerThanInput(f"kernel {kh}x{kw} exceeds input {xd.shape[1]}x{xd.shape[2]}")
    stride = int(stride)
    out = kernels.conv2d_forward(xd, kd, stride)
    h, w = xd.shape[1], xd.shape[2]
    return _emit("conv2d", out, (x, k), (
        lambda g: kernels.conv2d_grad_input(np.ascontiguousarray(g), kd, stride, h, w),
        lambda g: kernels.conv2d_grad_kernels(np.ascontiguousarray(g), xd, stride, kh, kw),
    ))


def avg_pool2d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    """Mean pooling; window == H == W collapses to a per-channel mean map."""
    xd = x.data
    if xd.ndim != 3:
        raise DimensionMismatch(f"avg_pool2d expects [C,H,W], got shape {xd.shape}")
    stride = window if stride is None else stride
    if stride < 1 or int(stride) != stride:
        raise NonPositiveStride(f"stride must be a positive int, got {stride}")
    if window > min(xd.shape[1], xd.shape[2]):
        raise KernelLargerThanInput(f"window {window} exceeds input {xd.shape[1]}x{xd.shape[2]}")
    window, stride = int(window), int(stride)
    out = kernels.avg_pool2d_forward(xd, window, stride)
    h, w = xd.shape[1], xd.shape[2]
    return _emit("avg_pool2d", out, (x,), (
        lambda g: kernels.avg_pool2d_grad(np.ascontiguousarray(g), window, stride, h, w),
    ))


def global_avg_pool(x: Tensor) -> Tensor:
    """[C,H,W] -> [C] via a full-image average pool."""
    if x.data.shape[1] != x.data.shape[2]:
        raise DimensionMismatch(f"global pool expects square maps, got {x.data.shape}")
    pooled = avg_pool2d(x, x.data.shape[1])
    return reshape(pooled, (x.data.shape[0],))


# --- nonlinearities ---------------------------------------------------------

def _sigmoid_values(xd: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x saturates to inf and divides out to 0,
    # which is the correct limit; silence the spurious warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-xd))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_values(x.data)
    return _emit("sigmoid", out, (x,), (lambda g: g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit("tanh", out, (x,), (lambda g: g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = (x.data > 0).astype(np.float64)
    return _emit("relu", out, (x,), (lambda g: g * mask,))


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(kind: str, x: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise UnknownKind(f"unknown elementwise kind {kind!r}") from None
    return fn(x)


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def mish(x: Tensor) -> Tensor:
    """x * tanh(softplus(x)), stable for large |x|."""
    xd = x.data
    sp = _softplus(xd)
    t = np.tanh(sp)
    out = xd * t
    # d/dx = tanh(sp) + x * sech^2(sp) * sigmoid(x)
    deriv = t + xd * (1.0 - t * t) * _sigmoid_values(xd)
    return _emit("mish", out, (x,), (lambda g: g * deriv,))


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over a nonempty vector."""
    xd = x.data
    if xd.ndim != 1:
        raise DimensionMismatch(f"softmax expects a vector, got shape {xd.shape}")
    if xd.size == 0:
        raise EmptyInput("softmax of an empty vector")
    shifted = xd - xd.max()
    ex = np.exp(shifted)
    out = ex / ex.sum()
    return _emit("softmax", out, (x,), (lambda g: out * (g - float(g @ out)),))


# --- stochastic / loss ------------------------------------------------------

def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train scales survivors by 1/(1-rate); eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval":
        return x
    if mode != "train":
        raise UnknownKind(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout requires an explicit rng stream")
    keep = (rng.random(x.data.shape) >= rate).astype(np.float64) / (1.0 - rate)
    out = x.data * keep
    return _emit("dropout", out, (x,), (lambda g: g * keep,))


def cross_entropy(target_onehot: Tensor, predicted_probs: Tensor) -> Tensor:
    """-sum(t * log p) with probabilities clamped to [1e-12, 1]."""
    td, pd = target_onehot.data, predicted_probs.data
    if td.shape != pd.shape or td.ndim != 1:
        raise ShapeMismatch(f"cross_entropy expects matching vectors, got {td.shape}, {pd.shape}")
    if not (np.all((td == 0.0) | (td == 1.0)) and td.sum() == 1.0):
        raise NotOneHot("cross_entropy target must be one-hot")
    clamped = np.clip(pd, PROB_FLOOR, 1.0)
    out = np.asarray(-(td * np.log(clamped)).sum())
    live = (pd >= PROB_FLOOR) & (pd <= 1.0)

    def vjp_probs(g):
        return float(g) * np.where(live, -td / clamped, 0.0)

    def vjp_target(g):
        return float(g) * -np.log(clamped)

    return _emit("cross_entropy", out, (target_onehot, predicted_probs),
                 (vjp_target, vjp_probs))


def one_hot(index: int, length: int) -> Tensor:
    vec = np.zeros(length)
    vec[index] = 1.0
    return Tensor(vec)


# --- reverse sweep ----------------------------------------------------------

def backward(tape: Tape, loss: Tensor) -> dict:
    """Gradients of a scalar loss w.r.t. every leaf on the tape.

    Returns {leaf node id: ndarray}; leaves the loss does not reach get zero
    gradients. Each tape node is visited at most once (recorded in
    tape.last_visit_counts for instrumentation).
    """
    if loss.tape is not tape or loss.node_id is None:
        raise NonScalarLoss("loss is not recorded on this tape")
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.data.shape}")

    visits = np.zeros(len(tape.nodes), dtype=np.int64)
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}

    for nid in range(loss.node_id, -1, -1):
        if nid not in grads:
            continue
        node = tape.nodes[nid]
        g = grads.pop(nid)
        visits[nid] += 1
        if node.op == "leaf":
            leaf_grads[nid] = g
            continue
        for input_id, vjp in zip(node.inputs, node.vjps):
            if input_id is None:
                continue
            piece = vjp(g)
            if input_id in grads:
                grads[input_id] = grads[input_id] + piece
            else:
                grads[input_id] = piece

    for nid in tape.leaf_ids():
        if nid not in leaf_grads:
            leaf_grads[nid] = np.zeros_like(tape.nodes[nid].value)

    tape.last_visit_counts = visits
    return leaf_grads


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `f` must be deterministic (run dropout in eval mode or with a fixed
    stream). Relative error per coordinate is |a-n| / max(|a|, |n|, 1e-8).
    """
    x = as_tensor(x)
    tape = Tape()
    xr = tape.watch(x)
    loss = f(xr)
    analytic = backward(tape, loss)[xr.node_id]

    worst = 0.0
    flat = x.data.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += eps
        fp = float(f(Tensor(bumped.reshape(x.data.shape))).data)
        bumped[i] -= 2 * eps
        fm = float(f(Tensor(bumped.reshape(x.data.shape))).data)
        numeric = (fp - fm) / (2.0 * eps)
        a = float(analytic.ravel()[i])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
