"""Parameter-tree checkpoints.

Parameters are flattened to ``name -> array`` and stored as 64-bit floats in
the shared container format regardless of the training precision, so a
round-trip through disk is lossless in 64-bit mode and reproducible in
either mode.
"""

from __future__ import annotations

import numpy as np

from ..container import read_container, write_container
from .autodiff import Tensor

__all__ = ["save_params", "load_params", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1


def save_params(path, params: dict[str, Tensor], extra_meta: dict | None = None) -> None:
    meta = {"kind": "checkpoint", "checkpoint_version": CHECKPOINT_VERSION}
    if extra_meta:
        meta.update(extra_meta)
    arrays = {name: np.asarray(p.data, dtype=np.float64) for name, p in params.items()}
    write_container(path, meta, arrays)


def load_params(path, dtype=np.float64) -> tuple[dict, dict[str, Tensor]]:
    """Returns ``(metadata, name -> Tensor)`` with data cast to ``dtype``."""
    meta, arrays = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint container")
    params = {name: Tensor(arr.astype(dtype)) for name, arr in arrays.items()}
    return meta, params
