"""Forward-op contracts checked against naive loop oracles and closed forms."""

import math

import numpy as np
import pytest

from hirev import tensor as T
from hirev.errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidRate,
    KernelLargerThanInput,
    NonPositiveStride,
    NotOneHot,
    ShapeMismatch,
    UnknownKind,
)
from hirev.rng import stream
from hirev.tensor import Tensor


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for kk in range(k):
                out[i, j] += a[i, kk] * b[kk, j]
    return out


def naive_conv2d(x, k, stride):
    c, h, w = x.shape
    f, c2, kh, kw = k.shape
    assert c == c2
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((f, ho, wo))
    for fi in range(f):
        for oy in range(ho):
            for ox in range(wo):
                for ci in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            out[fi, oy, ox] += (
                                x[ci, oy * stride + i, ox * stride + j] * k[fi, ci, i, j])
    return out


def naive_avg_pool(x, window, stride):
    c, h, w = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    out = np.zeros((c, ho, wo))
    for ci in range(c):
        for oy in range(ho):
            for ox in range(wo):
                acc = 0.0
                for i in range(window):
                    for j in range(window):
                        acc += x[ci, oy * stride + i, ox * stride + j]
                out[ci, oy, ox] = acc / (window * window)
    return out


class TestMatmul:
    def test_identity(self):
        b = Tensor([[3.0, 4.0], [5.0, 6.0]])
        out = T.matmul(Tensor(np.eye(2)), b)
        assert np.array_equal(out.data, b.data)

    def test_known_product_matches_oracle(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        expected = np.array([[19.0, 22.0], [43.0, 50.0]])
        assert np.array_equal(naive_matmul(a, b), expected)
        assert np.array_equal(T.matmul(Tensor(a), Tensor(b)).data, expected)

    def test_zero_left_factor(self):
        rng = stream(0, "mm")
        out = T.matmul(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(3, 4))))
        assert out.data.shape == (2, 4)
        assert np.all(out.data == 0.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_random_vs_oracle(self, seed):
        rng = stream(seed, "mm-rand")
        m, k, n = rng.integers(1, 16, size=3)
        a = rng.normal(size=(m, k))
        b = rng.normal(size=(k, n))
        assert np.allclose(T.matmul(Tensor(a), Tensor(b)).data,
                           naive_matmul(a, b), atol=1e-12, rtol=0)

    def test_inner_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestConv2d:
    def test_identity_kernel(self):
        rng = stream(1, "conv")
        x = rng.normal(size=(1, 5, 5))
        out = T.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), 1)
        assert np.array_equal(out.data, x)

    def test_constant_image_all_ones_kernel(self):
        x = np.full((1, 6, 6), 2.0)
        k = np.ones((1, 1, 3, 3))
        out = T.conv2d(Tensor(x), Tensor(k), 1)
        assert np.allclose(out.data, 18.0, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("stride", [1, 2, 3])
    def test_random_vs_loop_oracle(self, stride):
        rng = stream(stride, "conv-rand")
        x = rng.normal(size=(1, 8, 8))
        k = rng.normal(size=(2, 1, 3, 3))
        out = T.conv2d(Tensor(x), Tensor(k), stride)
        assert np.allclose(out.data, naive_conv2d(x, k, stride), atol=1e-12, rtol=0)

    def test_multi_channel_vs_oracle(self):
        rng = stream(9, "conv-mc")
        x = rng.normal(size=(3, 16, 16))
        k = rng.normal(size=(4, 3, 5, 5))
        out = T.conv2d(Tensor(x), Tensor(k), 2)
        assert np.allclose(out.data, naive_conv2d(x, k, 2), atol=1e-12, rtol=0)

    def test_kernel_too_large(self):
        with pytest.raises(KernelLargerThanInput):
            T.conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))), 1)

    def test_bad_stride(self):
        with pytest.raises(NonPositiveStride):
            T.conv2d(Tensor(np.ones((1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), 0)


class TestAvgPool:
    def test_constant_image(self):
        out = T.avg_pool2d(Tensor(np.full((2, 6, 6), 3.5)), 3, 3)
        assert np.allclose(out.data, 3.5, atol=1e-12, rtol=0)

    def test_forced_mean(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        assert T.avg_pool2d(Tensor(x), 2).data.reshape(()) == pytest.approx(2.5, abs=1e-15)

    def test_random_vs_loop_oracle(self):
        rng = stream(3, "pool")
        x = rng.normal(size=(3, 8, 8))
        out = T.avg_pool2d(Tensor(x), 4, 4)
        assert np.allclose(out.data, naive_avg_pool(x, 4, 4), atol=1e-12, rtol=0)

    def test_global_variant_yields_channel_vector(self):
        rng = stream(4, "pool-g")
        x = rng.normal(size=(5, 7, 7))
        out = T.global_avg_pool(Tensor(x))
        assert out.data.shape == (5,)
        assert np.allclose(out.data, x.mean(axis=(1, 2)), atol=1e-12, rtol=0)


class TestConcat:
    def test_vectors(self):
        out = T.concat(Tensor([1.0, 2.0]), Tensor([3.0]))
        assert np.array_equal(out.data, [1.0, 2.0, 3.0])

    def test_empty_right_operand(self):
        x = Tensor([1.0, 2.0])
        out = T.concat(x, Tensor(np.zeros(0)))
        assert np.array_equal(out.data, x.data)

    def test_backward_splits_ones(self):
        tape = T.Tape()
        a = tape.watch(Tensor([1.0, 2.0]))
        b = tape.watch(Tensor([3.0, 4.0, 5.0]))
        grads = T.backward(tape, T.tsum(T.concat(a, b)))
        assert np.array_equal(grads[a.node_id], np.ones(2))
        assert np.array_equal(grads[b.node_id], np.ones(3))

    def test_off_axis_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.concat(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), axis=0)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert T.elementwise("sigmoid", Tensor([0.0])).data[0] == pytest.approx(0.5, abs=1e-15)

    def test_tanh_at_zero(self):
        assert T.elementwise("tanh", Tensor([0.0])).data[0] == 0.0

    def test_sigmoid_symmetry(self):
        xs = stream(5, "sym").normal(size=64) * 5
        total = T.sigmoid(Tensor(xs)).data + T.sigmoid(Tensor(-xs)).data
        assert np.allclose(total, 1.0, atol=1e-12, rtol=0)

    def test_relu(self):
        out = T.elementwise("relu", Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            T.elementwise("gelu", Tensor([1.0]))


class TestMish:
    def test_at_zero(self):
        assert T.mish(Tensor([0.0])).data[0] == 0.0

    def test_asymptote(self):
        assert T.mish(Tensor([20.0])).data[0] / 20.0 == pytest.approx(1.0, abs=1e-6)

    def test_at_one_high_precision(self):
        # x * tanh(log(1 + e^x)) at x=1, evaluated with 30-digit arithmetic
        assert T.mish(Tensor([1.0])).data[0] == pytest.approx(
            0.8650983882673103, abs=1e-12)

    def test_stable_for_large_negative(self):
        out = T.mish(Tensor([-800.0])).data[0]
        assert np.isfinite(out) and abs(out) < 1e-300


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5],
                           atol=1e-15, rtol=0)

    def test_forced_by_definition(self):
        out = T.softmax(Tensor([math.log(2.0), 0.0])).data
        assert np.allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15, rtol=0)

    def test_large_logits_no_overflow(self):
        out = T.softmax(Tensor([1000.0, 0.0])).data
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(1.0, abs=1e-12)
        assert out[1] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_sums_to_one_and_shift_invariant(self, seed):
        rng = stream(seed, "sm")
        x = rng.normal(size=int(rng.integers(1, 20))) * 10
        out = T.softmax(Tensor(x)).data
        assert abs(out.sum() - 1.0) < 1e-12
        shifted = T.softmax(Tensor(x + 123.456)).data
        assert np.max(np.abs(out - shifted)) < 1e-12

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            T.softmax(Tensor(np.zeros(0)))


class TestDropout:
    def test_rate_zero_identity(self):
        x = Tensor([1.0, 2.0, 3.0])
        assert np.array_equal(T.dropout(x, 0.0, "train", stream(0, "d")).data, x.data)

    def test_eval_identity_any_rate(self):
        x = Tensor(stream(1, "d").normal(size=100))
        assert T.dropout(x, 0.9, "eval") is x

    def test_law_of_large_numbers(self):
        x = Tensor(np.ones(100_000))
        out = T.dropout(x, 0.2, "train", stream(2, "d"))
        assert out.data.mean() == pytest.approx(1.0, abs=0.01)

    def test_invalid_rate(self):
        with pytest.raises(InvalidRate):
            T.dropout(Tensor([1.0]), 1.0, "train", stream(3, "d"))


class TestCrossEntropy:
    def test_perfect_prediction(self):
        out = T.cross_entropy(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]))
        assert float(out.data) == pytest.approx(0.0, abs=1e-11)

    def test_half_half(self):
        out = T.cross_entropy(Tensor([1.0, 0.0]), Tensor([0.5, 0.5]))
        assert float(out.data) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_uniform_over_five(self):
        target = T.one_hot(1, 5)
        out = T.cross_entropy(target, Tensor(np.full(5, 0.2)))
        assert float(out.data) == pytest.approx(math.log(5.0), abs=1e-15)

    def test_every_one_hot_zero_loss(self):
        for i in range(6):
            target = T.one_hot(i, 6)
            assert float(T.cross_entropy(target, target).data) == pytest.approx(
                0.0, abs=1e-11)

    def test_not_one_hot(self):
        with pytest.raises(NotOneHot):
            T.cross_entropy(Tensor([0.5, 0.5]), Tensor([0.5, 0.5]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.cross_entropy(Tensor([1.0, 0.0]), Tensor([1.0, 0.0, 0.0]))
