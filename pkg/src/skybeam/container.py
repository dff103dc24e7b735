"""Deterministic binary container: JSON metadata + named little-endian arrays.

Layout (all integers little-endian, see docs/formats.md):

    magic   8 bytes   b"SKYBEAM\\0"
    version u32       container format version (currently 1)
    mlen    u32       length of the UTF-8 JSON metadata blob
    meta    mlen      JSON object, keys sorted
    count   u32       number of named arrays
    per array:
        nlen  u16     name length, then name bytes (UTF-8)
        dtype u8      0=float64 1=float32 2=int64 3=complex128
        ndim  u8      then ndim * u32 dimensions
        data          raw little-endian C-order bytes

Writing the same content twice produces byte-identical files (no
timestamps, sorted metadata keys, caller-ordered arrays).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["write_container", "read_container", "ContainerError", "CONTAINER_VERSION"]

MAGIC = b"SKYBEAM\x00"
CONTAINER_VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f8"): 0,
    np.dtype("<f4"): 1,
    np.dtype("<i8"): 2,
    np.dtype("<c16"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class ContainerError(ValueError):
    """Malformed or incompatible container file."""


def write_container(path, metadata: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", CONTAINER_VERSION),
              struct.pack("<I", len(meta_blob)), meta_blob,
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_CODES:
            raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        arr = arr.astype(dt, copy=False)
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ContainerError(f"{path}: bad magic, not a skybeam container")
    off = 8
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != CONTAINER_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    metadata = json.loads(blob[off:off + mlen].decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        code, ndim = struct.unpack_from("<BB", blob, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        dt = _CODE_DTYPES.get(code)
        if dt is None:
            raise ContainerError(f"{path}: unknown dtype code {code}")
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(blob, dtype=dt, count=n, offset=off).reshape(shape)
        off += n * dt.itemsize
        arrays[name] = arr.copy()
    return metadata, arrays
