"""Hierarchical visual review scoring.

A product-category classifier routes images to per-category attention
encoder-decoders that predict Likert review scores. Everything runs on a
from-scratch float64 tape autodiff engine with compiled (or numpy) kernels.
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: F401
