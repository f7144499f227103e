"""Minimal parameter-tree helpers over nested dataclasses, lists and dicts."""

from __future__ import annotations

import dataclasses
from typing import Any, Callable

import numpy as np

from .autodiff import Tensor


def _is_leaf(x) -> bool:
    return isinstance(x, (np.ndarray, Tensor))


def tree_map(fn: Callable[[str, Any], Any], obj, prefix: str = ""):
    """Rebuild ``obj`` with every array leaf replaced by ``fn(path, leaf)``."""
    if _is_leaf(obj):
        return fn(prefix, obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {}
        for f in dataclasses.fields(obj):
            if f.metadata.get("static"):
                continue
            changes[f.name] = tree_map(fn, getattr(obj, f.name), f"{prefix}{f.name}.")
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, list):
        return [tree_map(fn, x, f"{prefix}{i}.") for i, x in enumerate(obj)]
    if isinstance(obj, tuple):
        return tuple(tree_map(fn, x, f"{prefix}{i}.") for i, x in enumerate(obj))
    if isinstance(obj, dict):
        return {k: tree_map(fn, v, f"{prefix}{k}.") for k, v in obj.items()}
    return obj


def named_arrays(obj) -> dict[str, np.ndarray]:
    """Flatten to ``{dotted.path: array}`` in declaration order."""
    out: dict[str, np.ndarray] = {}

    def grab(path, leaf):
        out[path.rstrip(".")] = leaf.value if isinstance(leaf, Tensor) else leaf
        return leaf

    tree_map(grab, obj)
    return out


def load_arrays(obj, arrays: dict[str, np.ndarray]):
    """Inverse of ``named_arrays``: same structure, leaves taken from ``arrays``."""
    return tree_map(lambda path, leaf: np.asarray(arrays[path.rstrip(".")], dtype=np.float64), obj)


def static(default=None):
    """Dataclass field excluded from the parameter tree."""
    return dataclasses.field(default=default, metadata={"static": True})
