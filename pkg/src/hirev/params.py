"""Traversal helpers for parameter records.

Model parameters live in nested dataclasses (layers, cells, lists of both).
These helpers give every tensor a stable dotted name so optimizers,
checkpoints, and tape-watching can treat a whole record as a flat
{name: Tensor} mapping without each model hand-rolling the walk.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

from .tensor import Tape, Tensor


def map_tensors(record, fn: Callable[[str, Tensor], Tensor], prefix: str = ""):
    """Rebuild `record` with fn applied to every Tensor field (depth-first)."""
    if isinstance(record, Tensor):
        return fn(prefix, record)
    if dataclasses.is_dataclass(record) and not isinstance(record, type):
        changes = {}
        for f in dataclasses.fields(record):
            value = getattr(record, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            changes[f.name] = map_tensors(value, fn, name)
        return dataclasses.replace(record, **changes)
    if isinstance(record, (list, tuple)):
        items = [map_tensors(v, fn, f"{prefix}.{i}" if prefix else str(i))
                 for i, v in enumerate(record)]
        return type(record)(items)
    return record


def named_tensors(record, prefix: str = "") -> dict[str, Tensor]:
    """Flat {dotted name: Tensor} view of a parameter record."""
    out: dict[str, Tensor] = {}

    def collect(name, t):
        out[name] = t
        return t

    map_tensors(record, collect, prefix)
    return out


def replace_tensors(record, mapping: dict[str, Tensor], prefix: str = ""):
    """Copy of `record` with tensors swapped in from `mapping` by name."""
    return map_tensors(record, lambda name, t: mapping.get(name, t), prefix)


def watch_record(tape: Tape, record, prefix: str = ""):
    """Watch every tensor in `record` on `tape`.

    Returns (bound record, {name: leaf node id}); backward() grads can then be
    keyed back to parameter names.
    """
    index: dict[str, int] = {}

    def bind(name, t):
        watched = tape.watch(t)
        index[name] = watched.node_id
        return watched

    bound = map_tensors(record, bind, prefix)
    return bound, index
