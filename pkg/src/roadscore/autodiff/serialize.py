"""Binary tensor files: magic "FTEN", little-endian header and float64 payload.

Layout: magic (4 bytes) | version u32 | rank u32 | dims u32[rank] | payload.
Round-trips are bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import Union

import numpy as np

from .tensor import Tensor

MAGIC = b"FTEN"
VERSION = 1


def tensor_to_bytes(value: Union[Tensor, np.ndarray]) -> bytes:
    arr = value.data if isinstance(value, Tensor) else value
    arr = np.asarray(arr, dtype=np.float64, order="C")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.astype("<f8", copy=False).tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported tensor file version {version}")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    offset = 12 + 4 * rank
    count = 1
    for d in dims:
        count *= d
    payload = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    if payload.size != count:
        raise ValueError("truncated tensor payload")
    return payload.astype(np.float64).reshape(dims)


def save_tensor(path: Union[str, os.PathLike], value: Union[Tensor, np.ndarray]) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = os.fspath(path)
    blob = tensor_to_bytes(value)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensor(path: Union[str, os.PathLike]) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
