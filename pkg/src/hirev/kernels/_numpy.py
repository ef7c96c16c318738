"""Vectorized numpy implementations of the hot kernels.

Fallback used when the compiled extension is unavailable; also the reference
the extension is tested against. All inputs/outputs are C-contiguous float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    """Valid-padding cross-correlation: x[C,H,W], k[F,C,kh,kw] -> [F,H',W']."""
    kh, kw = k.shape[2], k.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(np.einsum("chwij,fcij->fhw", win, k, optimize=True))


def conv2d_grad_input(g: np.ndarray, k: np.ndarray, stride: int,
                      h: int, w: int) -> np.ndarray:
    """Gradient of conv2d_forward w.r.t. its input, given output grad g[F,H',W']."""
    ho, wo = g.shape[1], g.shape[2]
    c = k.shape[1]
    gx = np.zeros((c, h, w))
    for i in range(k.shape[2]):
        for j in range(k.shape[3]):
            tap = np.einsum("fhw,fc->chw", g, k[:, :, i, j], optimize=True)
            gx[:, i:i + stride * (ho - 1) + 1:stride,
                  j:j + stride * (wo - 1) + 1:stride] += tap
    return gx


def conv2d_grad_kernels(g: np.ndarray, x: np.ndarray, stride: int,
                        kh: int, kw: int) -> np.ndarray:
    """Gradient of conv2d_forward w.r.t. its kernels."""
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(np.einsum("fhw,chwij->fcij", g, win, optimize=True))


def avg_pool2d_forward(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Mean over window x window patches: x[C,H,W] -> [C,H',W']."""
    win = sliding_window_view(x, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(win.mean(axis=(-2, -1)))


def avg_pool2d_grad(g: np.ndarray, window: int, stride: int,
                    h: int, w: int) -> np.ndarray:
    """Gradient of avg_pool2d_forward w.r.t. its input."""
    ho, wo = g.shape[1], g.shape[2]
    gx = np.zeros((g.shape[0], h, w))
    share = g / float(window * window)
    for i in range(window):
        for j in range(window):
            gx[:, i:i + stride * (ho - 1) + 1:stride,
                  j:j + stride * (wo - 1) + 1:stride] += share
    return gx
