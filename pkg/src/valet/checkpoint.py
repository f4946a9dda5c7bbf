"""Flat binary checkpoint container for named tensors.

Layout: an 8-byte magic, a record count, then per tensor the utf-8 name,
dtype string, shape, and raw little-endian data. A plain-text manifest
(``<file>.manifest.txt``) listing names and shapes is written alongside.
Writes go to a temp file first and are renamed into place.
"""

from __future__ import annotations

import os
import struct
from typing import Dict

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"VALETCK1"


def save_checkpoint(path: str, tensors: Dict[str, Tensor]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name].data)
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("<"))
            name_b = name.encode("utf-8")
            dtype_b = arr.dtype.str.lstrip("<=|").encode("ascii")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<H", len(dtype_b)))
            f.write(dtype_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            f.write(arr.tobytes())
    os.replace(tmp, path)
    _write_manifest(path + ".manifest.txt", tensors)


def _write_manifest(path: str, tensors: Dict[str, Tensor]) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for name in sorted(tensors):
            shape = "x".join(str(s) for s in tensors[name].shape) or "scalar"
            f.write(f"{name} {shape}\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Dict[str, Tensor]:
    out: Dict[str, Tensor] = {}
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise FormatError(f"{path}: not a checkpoint file (bad magic)")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (dlen,) = struct.unpack("<H", f.read(2))
            dtype = np.dtype("<" + f.read(dlen).decode("ascii"))
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim)) if ndim else ()
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
            buf = f.read(n_bytes)
            if len(buf) != n_bytes:
                raise FormatError(f"{path}: truncated tensor data for '{name}'")
            out[name] = Tensor(np.frombuffer(buf, dtype=dtype).reshape(shape).copy())
    return out
