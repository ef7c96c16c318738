"""On-disk tensor blobs and model checkpoints.

Blob layout: magic "HRTN", then little-endian u32 version, u32 rank, one u64
per dimension, then the row-major float64 payload. Checkpoints are a
directory of one blob per named tensor plus a JSON header listing names,
shapes, the builder config, and the init seed.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, DatasetIOError
from .tensor import Tensor

MAGIC = b"HRTN"
VERSION = 1


def tensor_to_bytes(t: Tensor) -> bytes:
    data = np.asarray(t.data, dtype="<f8")
    if data.ndim and not data.flags["C_CONTIGUOUS"]:
        data = np.ascontiguousarray(data)
    head = MAGIC + struct.pack("<II", VERSION, data.ndim)
    dims = struct.pack(f"<{data.ndim}Q", *data.shape) if data.ndim else b""
    return head + dims + data.tobytes()


def tensor_from_bytes(buf: bytes) -> Tensor:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CorruptManifest("bad tensor blob magic")
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CorruptManifest(f"unsupported tensor blob version {version}")
    offset = 12
    if len(buf) < offset + 8 * rank:
        raise CorruptManifest("truncated tensor blob header")
    shape = struct.unpack_from(f"<{rank}Q", buf, offset) if rank else ()
    offset += 8 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(buf) != offset + 8 * count:
        raise CorruptManifest("truncated tensor blob payload")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
    return Tensor(data.reshape(shape).astype(np.float64))


def write_tensor(t: Tensor, path) -> None:
    Path(path).write_bytes(tensor_to_bytes(t))


def read_tensor(path) -> Tensor:
    try:
        return tensor_from_bytes(Path(path).read_bytes())
    except OSError as exc:
        raise DatasetIOError(str(exc)) from exc


def save_checkpoint(directory, tensors: dict[str, Tensor], config: dict,
                    seed: int) -> None:
    """Write one blob per tensor plus header.json; byte-stable across runs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "format": VERSION,
        "seed": seed,
        "config": config,
        "tensors": {name: list(tensors[name].data.shape) for name in sorted(tensors)},
    }
    (directory / "header.json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n")
    for name in sorted(tensors):
        write_tensor(tensors[name], directory / (name + ".htn"))


def load_checkpoint(directory) -> tuple[dict[str, Tensor], dict]:
    """Read back {name: Tensor} and the header dict."""
    directory = Path(directory)
    header_path = directory / "header.json"
    if not header_path.exists():
        raise DatasetIOError(f"no checkpoint header in {directory}")
    header = json.loads(header_path.read_text())
    tensors = {}
    for name, shape in header["tensors"].items():
        t = read_tensor(directory / (name + ".htn"))
        if list(t.data.shape) != shape:
            raise CorruptManifest(f"tensor {name!r} shape {t.data.shape} != header {shape}")
        tensors[name] = t
    return tensors, header
