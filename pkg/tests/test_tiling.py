"""Sliding-window tiler: counts, ordering, exactness."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hirev.errors import NonPositiveStride, NonSquareImage, WindowLargerThanImage
from hirev.rng import stream
from hirev.tensor import Tensor
from hirev.tiling import TilingSpec, expected_window_count, tile


def coverage_counts(spec: TilingSpec) -> np.ndarray:
    """Loop oracle: how many windows cover each pixel."""
    counts = np.zeros((spec.image_size, spec.image_size), dtype=int)
    per_side = (spec.image_size - spec.window) // spec.stride + 1
    for r in range(per_side):
        for c in range(per_side):
            counts[r * spec.stride:r * spec.stride + spec.window,
                   c * spec.stride:c * spec.stride + spec.window] += 1
    return counts


def test_published_geometry_yields_36_windows():
    assert expected_window_count(TilingSpec(224, 64, 32)) == 36


def test_window_equal_to_image_is_single_window():
    for stride in (1, 7, 50):
        assert expected_window_count(TilingSpec(48, 48, stride)) == 1


def test_forced_arithmetic_49():
    assert expected_window_count(TilingSpec(224, 32, 32)) == 49


def test_first_window_is_top_left_anchor():
    rng = stream(0, "tile")
    img = Tensor(rng.random((2, 32, 32)))
    spec = TilingSpec(32, 16, 8)
    first = tile(img, spec)[0]
    assert np.array_equal(first.data, img.data[:, 0:16, 0:16])


def test_published_geometry_last_window_covers_tail():
    rng = stream(1, "tile")
    img = Tensor(rng.random((1, 224, 224)))
    spec = TilingSpec(224, 64, 32)
    windows = tile(img, spec)
    assert len(windows) == 36
    assert np.array_equal(windows[-1].data, img.data[:, 160:224, 160:224])


def test_row_major_order():
    img = Tensor(np.arange(64, dtype=float).reshape(1, 8, 8))
    spec = TilingSpec(8, 4, 4)
    windows = tile(img, spec)
    assert np.array_equal(windows[0].data, img.data[:, 0:4, 0:4])
    assert np.array_equal(windows[1].data, img.data[:, 0:4, 4:8])
    assert np.array_equal(windows[2].data, img.data[:, 4:8, 0:4])
    assert np.array_equal(windows[3].data, img.data[:, 4:8, 4:8])


def test_coverage_matches_loop_oracle():
    spec = TilingSpec(20, 8, 4)
    img = Tensor(np.zeros((1, 20, 20)))
    counts = np.zeros((20, 20), dtype=int)
    per_side = spec.per_side
    for idx, w in enumerate(tile(img, spec)):
        r, c = divmod(idx, per_side)
        counts[r * spec.stride:r * spec.stride + spec.window,
               c * spec.stride:c * spec.stride + spec.window] += 1
    assert np.array_equal(counts, coverage_counts(spec))


@settings(max_examples=300, deadline=None)
@given(data=st.data())
def test_count_formula_holds_for_random_specs(data):
    h = data.draw(st.integers(8, 64))
    w = data.draw(st.integers(1, h))
    d = data.draw(st.integers(1, h))
    spec = TilingSpec(h, w, d)
    img = Tensor(np.zeros((1, h, h)))
    assert len(tile(img, spec)) == expected_window_count(spec)


@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_windows_are_bitwise_subslices(data):
    h = data.draw(st.integers(8, 32))
    w = data.draw(st.integers(1, h))
    d = data.draw(st.integers(1, h))
    spec = TilingSpec(h, w, d)
    img = Tensor(stream(h * 1000 + w * 10 + d, "prop").random((1, h, h)))
    per_side = spec.per_side
    for idx, win in enumerate(tile(img, spec)):
        r, c = divmod(idx, per_side)
        expected = img.data[:, r * d:r * d + w, c * d:c * d + w]
        assert np.array_equal(win.data, expected)


def test_non_overlapping_windows_reconstruct_image():
    rng = stream(2, "tile")
    img = Tensor(rng.random((3, 24, 24)))
    spec = TilingSpec(24, 8, 8)  # d == w and w | H
    windows = tile(img, spec)
    per_side = spec.per_side
    rebuilt = np.zeros_like(img.data)
    for idx, w in enumerate(windows):
        r, c = divmod(idx, per_side)
        rebuilt[:, r * 8:(r + 1) * 8, c * 8:(c + 1) * 8] = w.data
    assert np.array_equal(rebuilt, img.data)


def test_window_larger_than_image():
    with pytest.raises(WindowLargerThanImage):
        TilingSpec(16, 17, 1)


def test_non_positive_stride():
    with pytest.raises(NonPositiveStride):
        TilingSpec(16, 8, 0)


def test_non_square_image():
    with pytest.raises(NonSquareImage):
        tile(Tensor(np.zeros((1, 16, 18))), TilingSpec(16, 8, 4))
