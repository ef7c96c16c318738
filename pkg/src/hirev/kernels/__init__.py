"""Hot numerical kernels with backend selection at import time.

The compiled extension (`hirev.kernels._native`) is used when it importable;
otherwise the vectorized numpy fallback takes over. Set HIREV_BACKEND=numpy
to force the fallback, HIREV_BACKEND=native to require the extension.
Both backends agree elementwise to ~1e-12 (see tests/test_kernels.py) and
`benchmarks/bench_kernels.py` compares their speed.
"""

import os

from . import _numpy

_requested = os.environ.get("HIREV_BACKEND", "").strip().lower()

if _requested in {"numpy", "py", "python"}:
    _impl = _numpy
    BACKEND = "numpy"
elif _requested in {"native", "cython", "ext"}:
    from . import _native as _impl  # noqa: F401  (explicit request: let it raise)

    BACKEND = "native"
elif _requested:
    raise ValueError(f"unknown HIREV_BACKEND value: {_requested!r}")
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _numpy
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_kernels = _impl.conv2d_grad_kernels
avg_pool2d_forward = _impl.avg_pool2d_forward
avg_pool2d_grad = _impl.avg_pool2d_grad


def available_backends() -> dict:
    """Map of backend name to its module, for benchmarks and cross-checks."""
    found = {"numpy": _numpy}
    try:
        from . import _native

        found["native"] = _native
    except ImportError:
        pass
    return found
