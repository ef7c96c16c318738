"""Model-family contracts: higher classifier, window features, encoder,
attention, decoder."""

import math

import numpy as np
import pytest

from hirev import tensor as T
from hirev.errors import EmptySequence, IndexOutOfRange
from hirev.layers import BackboneConfig, gru_step
from hirev.models import (
    attend,
    decode,
    encode,
    higher_forward,
    init_higher,
    init_lower,
    init_window_extractor,
    lower_forward,
    model_loss,
    score_from_features,
    window_features,
)
from hirev.params import named_tensors, replace_tensors
from hirev.rng import stream
from hirev.tensor import Tensor, grad_check, tsum
from hirev.tiling import TilingSpec

SMALL_BACKBONE = BackboneConfig(stages=((2, 3, 2), (4, 3, 2)), output_dim=4)


def small_lower(seed=0, feature_dim=4):
    return init_lower(feature_dim, encoder_hidden=3, decoder_hidden=4,
                      attention_hidden=4, seed=seed)


def zero_like(record):
    return replace_tensors(record, {
        name: Tensor(np.zeros_like(t.data)) for name, t in named_tensors(record).items()
    })


class TestHigher:
    MODEL = init_higher(5, SMALL_BACKBONE, (6, 5),  seed=3)
    IMAGE = Tensor(stream(1, "img").random((1, 16, 16)))

    def test_output_is_distribution(self):
        out = higher_forward(self.MODEL, self.IMAGE, "eval")
        assert out.data.shape == (5,)
        assert abs(out.data.sum() - 1.0) < 1e-12
        assert np.all(out.data > 0.0)

    def test_eval_mode_deterministic(self):
        a = higher_forward(self.MODEL, self.IMAGE, "eval")
        b = higher_forward(self.MODEL, self.IMAGE, "eval")
        assert np.array_equal(a.data, b.data)

    def test_train_mode_uses_dropout(self):
        a = higher_forward(self.MODEL, self.IMAGE, "train", stream(0, "da"))
        b = higher_forward(self.MODEL, self.IMAGE, "train", stream(1, "db"))
        assert not np.array_equal(a.data, b.data)

    def test_argmax_invariant_to_head_logit_shift(self):
        out = higher_forward(self.MODEL, self.IMAGE, "eval")
        shifted_head = list(self.MODEL.head)
        last = shifted_head[-1]
        shifted_head[-1] = replace_tensors(last, {"b": Tensor(last.b.data + 7.5)})
        model = replace_tensors(self.MODEL, {})
        model.head = shifted_head
        out2 = higher_forward(model, self.IMAGE, "eval")
        assert np.argmax(out.data) == np.argmax(out2.data)
        assert np.max(np.abs(out.data - out2.data)) < 1e-12

    @pytest.mark.parametrize("seed", range(2))
    def test_full_gradient_check(self, seed):
        model = init_higher(3, SMALL_BACKBONE, (5, 4), seed=seed)
        image = Tensor(stream(seed, "gc").random((1, 16, 16)))
        probe = model.head[0].b

        def f(t):
            patched = replace_tensors(model, {"head.0.b": t})
            return model_loss("higher", 1, higher_forward(patched, image, "eval"))

        assert grad_check(f, probe) < 1e-4


class TestWindowFeatures:
    FX = init_window_extractor(SMALL_BACKBONE, (6, 4), seed=5)
    SPEC = TilingSpec(16, 8, 4)

    def test_length_matches_window_count(self):
        img = Tensor(stream(2, "wf").random((1, 16, 16)))
        feats = window_features(self.FX, img, self.SPEC)
        assert len(feats) == 9
        assert all(f.data.shape == (4,) for f in feats)

    def test_constant_image_gives_identical_features(self):
        img = Tensor(np.full((1, 16, 16), 0.37))
        feats = window_features(self.FX, img, self.SPEC)
        for f in feats[1:]:
            assert np.array_equal(f.data, feats[0].data)

    def test_no_cross_window_leakage(self):
        rng = stream(3, "wf")
        img = rng.random((1, 16, 16))
        spec = TilingSpec(16, 8, 8)  # 4 disjoint windows
        feats = [f.data for f in window_features(self.FX, Tensor(img), spec)]
        # permute the four quadrants; features must permute identically
        permuted = np.zeros_like(img)
        permuted[:, :8, :8] = img[:, 8:, 8:]
        permuted[:, :8, 8:] = img[:, 8:, :8]
        permuted[:, 8:, :8] = img[:, :8, 8:]
        permuted[:, 8:, 8:] = img[:, :8, :8]
        feats_p = [f.data for f in window_features(self.FX, Tensor(permuted), spec)]
        order = [3, 2, 1, 0]
        for i, j in enumerate(order):
            assert np.array_equal(feats_p[i], feats[j])


class TestEncoder:
    def test_single_step_concatenates_both_cells(self):
        model = small_lower(seed=1)
        x = Tensor(stream(4, "enc").normal(size=4))
        states = encode(model, [x])
        zero = Tensor(np.zeros(3))
        fwd = gru_step(model.encoder_fwd, x, zero)
        bwd = gru_step(model.encoder_bwd, x, zero)
        assert np.allclose(states[0].data, np.concatenate([fwd.data, bwd.data]),
                           atol=1e-15, rtol=0)

    def test_zero_parameters_keep_states_zero(self):
        model = zero_like(small_lower(seed=2))
        xs = [Tensor(stream(5, "enc").normal(size=4)) for _ in range(4)]
        for state in encode(model, xs):
            assert np.array_equal(state.data, np.zeros(6))

    def test_reversal_swaps_directions(self):
        model = small_lower(seed=3)
        swapped = replace_tensors(model, {})
        swapped.encoder_fwd, swapped.encoder_bwd = model.encoder_bwd, model.encoder_fwd
        xs = [Tensor(stream(6, "enc", i).normal(size=4)) for i in range(5)]
        states = encode(model, xs)
        states_rev = encode(swapped, list(reversed(xs)))
        h = 3
        for t in range(5):
            a = states[t].data
            b = states_rev[4 - t].data
            assert np.allclose(a[:h], b[h:], atol=1e-15, rtol=0)
            assert np.allclose(a[h:], b[:h], atol=1e-15, rtol=0)

    def test_empty_sequence_rejected(self):
        with pytest.raises(EmptySequence):
            encode(small_lower(), [])


class TestAttention:
    def test_zero_alignment_gives_uniform_weights_and_mean_context(self):
        model = small_lower(seed=4)
        model = replace_tensors(model, {
            "attn_W_r": Tensor(np.zeros_like(model.attn_W_r.data)),
            "attn_W_a": Tensor(np.zeros_like(model.attn_W_a.data)),
            "attn_b": Tensor(np.zeros_like(model.attn_b.data)),
        })
        a_seq = [Tensor(stream(7, "att", i).normal(size=6)) for i in range(5)]
        alpha, context = attend(model, Tensor(np.zeros(4)), a_seq)
        assert np.allclose(alpha.data, 0.2, atol=1e-15, rtol=0)
        mean_state = np.mean([a.data for a in a_seq], axis=0)
        assert np.allclose(context.data, mean_state, atol=1e-12, rtol=0)

    def test_single_state_gets_full_weight(self):
        model = small_lower(seed=5)
        a_seq = [Tensor(stream(8, "att").normal(size=6))]
        alpha, context = attend(model, Tensor(stream(9, "att").normal(size=4)), a_seq)
        assert np.allclose(alpha.data, [1.0], atol=1e-15, rtol=0)
        assert np.allclose(context.data, a_seq[0].data, atol=1e-15, rtol=0)

    def test_context_matches_weighted_sum_oracle(self):
        model = small_lower(seed=6)
        a_seq = [Tensor(stream(10, "att", i).normal(size=6)) for i in range(7)]
        alpha, context = attend(model, Tensor(stream(11, "att").normal(size=4)), a_seq)
        oracle = sum(alpha.data[i] * a_seq[i].data for i in range(7))
        assert np.allclose(context.data, oracle, atol=1e-12, rtol=0)
        assert abs(alpha.data.sum() - 1.0) < 1e-12


class TestDecoder:
    def test_output_is_five_way_distribution(self):
        model = small_lower(seed=7)
        a_seq = [Tensor(stream(12, "dec", i).normal(size=6)) for i in range(4)]
        out = decode(model, a_seq)
        assert out.data.shape == (5,)
        assert abs(out.data.sum() - 1.0) < 1e-12

    def test_step_count_equals_sequence_length(self):
        model = small_lower(seed=8)
        for length in (1, 3, 6):
            a_seq = [Tensor(stream(13, "dec", i).normal(size=6)) for i in range(length)]
            alphas = []
            decode(model, a_seq, collect_alphas=alphas)
            assert len(alphas) == length

    def test_zero_parameters_give_uniform_scores(self):
        model = zero_like(small_lower(seed=9))
        a_seq = [Tensor(stream(14, "dec", i).normal(size=6)) for i in range(3)]
        out = decode(model, a_seq)
        assert np.allclose(out.data, 0.2, atol=1e-15, rtol=0)

    def test_uniform_attention_reduces_to_mean_state_decoder(self):
        model = small_lower(seed=10)
        model = replace_tensors(model, {
            "attn_W_r": Tensor(np.zeros_like(model.attn_W_r.data)),
            "attn_W_a": Tensor(np.zeros_like(model.attn_W_a.data)),
            "attn_b": Tensor(np.zeros_like(model.attn_b.data)),
        })
        a_seq = [Tensor(stream(15, "dec", i).normal(size=6)) for i in range(5)]
        out = decode(model, a_seq)
        mean_state = Tensor(np.mean([a.data for a in a_seq], axis=0))
        r = Tensor(np.zeros(4))
        for _ in range(5):
            r = gru_step(model.decoder, mean_state, r)
        from hirev.layers import dense_forward

        expected = dense_forward(model.score_head, r)
        assert np.max(np.abs(out.data - expected.data)) < 1e-10


class TestLowerForward:
    FX = init_window_extractor(SMALL_BACKBONE, (6, 4), seed=20)
    SPEC = TilingSpec(16, 8, 4)

    def test_deterministic(self):
        model = small_lower(seed=21)
        img = Tensor(stream(16, "lf").random((1, 16, 16)))
        a = lower_forward(self.FX, model, img, self.SPEC)
        b = lower_forward(self.FX, model, img, self.SPEC)
        assert np.array_equal(a.data, b.data)

    def test_published_geometry_sequence_length(self):
        fx = init_window_extractor(
            BackboneConfig(stages=((2, 5, 4), (3, 3, 2)), output_dim=3), (4, 3),
            seed=22)
        model = small_lower(seed=23, feature_dim=3)
        img = Tensor(stream(17, "lf").random((1, 224, 224)))
        alphas = []
        out = lower_forward(fx, model, img, TilingSpec(224, 64, 32), alphas)
        assert len(alphas) == 36
        assert all(a.data.shape == (36,) for a in alphas)
        assert out.data.shape == (5,)

    @pytest.mark.parametrize("seed", range(2))
    def test_end_to_end_gradient_check(self, seed):
        model = small_lower(seed=seed + 30)
        img = Tensor(stream(seed, "lf-gc").random((1, 16, 16)))

        def f(t):
            patched = replace_tensors(model, {"decoder.bh": t})
            probs = lower_forward(self.FX, patched, img, self.SPEC)
            return model_loss("lower", 3, probs)

        assert grad_check(f, model.decoder.bh) < 1e-4

    def test_all_parameters_receive_gradient(self):
        from hirev.params import watch_record
        from hirev.tensor import Tape, backward

        for seed in range(5):
            model = small_lower(seed=seed + 40)
            img = Tensor(stream(seed, "lf-all").random((1, 16, 16)))
            tape = Tape()
            (bfx, bmodel), index = watch_record(tape, (self.FX, model))
            probs = lower_forward(bfx, bmodel, img, self.SPEC)
            grads = backward(tape, model_loss("lower", 1, probs))
            for name, nid in index.items():
                assert np.any(grads[nid] != 0.0), f"zero gradient for {name} (seed {seed})"


class TestModelLoss:
    def test_perfect_prediction_zero_loss(self):
        assert float(model_loss("lower", 2, Tensor([0.0, 0.0, 1.0, 0.0, 0.0])).data) \
            == pytest.approx(0.0, abs=1e-11)

    def test_uniform_over_23(self):
        probs = Tensor(np.full(23, 1.0 / 23.0))
        assert float(model_loss("higher", 7, probs).data) == pytest.approx(
            math.log(23.0), abs=1e-12)

    def test_uniform_over_5(self):
        probs = Tensor(np.full(5, 0.2))
        assert float(model_loss("lower", 0, probs).data) == pytest.approx(
            math.log(5.0), abs=1e-12)

    def test_out_of_range_target(self):
        with pytest.raises(IndexOutOfRange):
            model_loss("lower", 5, Tensor(np.full(5, 0.2)))


def test_score_from_features_matches_lower_forward():
    fx = init_window_extractor(SMALL_BACKBONE, (6, 4), seed=50)
    model = small_lower(seed=51)
    spec = TilingSpec(16, 8, 4)
    img = Tensor(stream(52, "sff").random((1, 16, 16)))
    full = lower_forward(fx, model, img, spec)
    feats = window_features(fx, img, spec)
    cached = score_from_features(model, feats)
    assert np.array_equal(full.data, cached.data)
