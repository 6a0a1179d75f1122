"""Parameter trees: nested dicts/lists whose leaves are Tensors.

Flat names join the path with ``/`` (``hfab/0/orig/3/conv1/w``); they are the
keys used by the optimizer and the checkpoint format.
"""

import numpy as np

from .errors import DimensionError, FormatError
from .tensor import Tensor


def flatten(tree, prefix=""):
    out = {}
    if isinstance(tree, Tensor):
        out[prefix] = tree
        return out
    items = tree.items() if isinstance(tree, dict) else enumerate(tree)
    for key, sub in items:
        name = f"{prefix}/{key}" if prefix else str(key)
        out.update(flatten(sub, name))
    return out


def snapshot(tree):
    """Copy of every parameter buffer, keyed by flat name."""
    return {name: t.data.copy() for name, t in flatten(tree).items()}


def set_requires_grad(tree, flag: bool):
    for t in flatten(tree).values():
        t.requires_grad = flag
        t.grad = None


def zero_grad(tree):
    for t in flatten(tree).values():
        t.grad = None


def load_flat(tree, arrays, prefix=""):
    """Copy named arrays into the matching tensors of ``tree`` in place."""
    for name, t in flatten(tree).items():
        key = f"{prefix}{name}"
        if key not in arrays:
            raise FormatError(f"checkpoint lacks parameter {key!r}")
        arr = np.asarray(arrays[key], dtype=np.float64)
        if arr.shape != t.shape:
            raise DimensionError(f"parameter {key!r} shape", t.shape, arr.shape)
        t.data = arr.copy()
    return tree


def count(tree) -> int:
    return sum(t.data.size for t in flatten(tree).values())
