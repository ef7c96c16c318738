"""Sliding-window decomposition of square images.

Windows are taken row-major from the top-left, stepping by the stride; any
right/bottom remainder narrower than a full window is dropped (floor
semantics), so the count per side is floor((H - window) / stride) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NonPositiveStride, NonSquareImage, ShapeMismatch, WindowLargerThanImage
from .tensor import Tensor, crop2d


@dataclass(frozen=True)
class TilingSpec:
    image_size: int
    window: int
    stride: int

    def __post_init__(self):
        if self.window < 1 or self.image_size < 1:
            raise WindowLargerThanImage(
                f"window and image size must be positive, got {self.window}, {self.image_size}")
        if self.window > self.image_size:
            raise WindowLargerThanImage(
                f"window {self.window} exceeds image size {self.image_size}")
        if self.stride < 1:
            raise NonPositiveStride(f"stride must be >= 1, got {self.stride}")

    @property
    def per_side(self) -> int:
        return (self.image_size - self.window) // self.stride + 1


def expected_window_count(spec: TilingSpec) -> int:
    """Number of windows tile() yields: (floor((H - w)/d) + 1)^2."""
    return spec.per_side ** 2


def tile(image: Tensor, spec: TilingSpec) -> list[Tensor]:
    """Ordered [C, w, w] windows, left-to-right then top-to-bottom.

    Window t (0-based, t = r * per_side + c) covers rows [r*d, r*d + w) and
    columns [c*d, c*d + w). Slices are exact; no interpolation.
    """
    if image.data.ndim != 3:
        raise ShapeMismatch(f"expected [C,H,W] image, got shape {image.data.shape}")
    if image.data.shape[1] != image.data.shape[2]:
        raise NonSquareImage(f"expected a square image, got shape {image.data.shape}")
    if image.data.shape[1] != spec.image_size:
        raise ShapeMismatch(
            f"image size {image.data.shape[1]} does not match spec {spec.image_size}")
    windows = []
    for r in range(spec.per_side):
        for c in range(spec.per_side):
            windows.append(crop2d(image, r * spec.stride, c * spec.stride,
                                  spec.window, spec.window))
    return windows
