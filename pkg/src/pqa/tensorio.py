"""Versioned binary tensor container used for all saved artifacts.

Layout (little-endian throughout):

    magic   4 bytes  b"PQT1"
    version 1 byte   (currently 1)
    dtype   1 byte   0=float32, 1=int32, 2=uint8, 3=float64
    rank    uint32
    dims    rank * uint32
    payload row-major element data

Round trips are bit-exact for every dtype, including rank-0 scalars and
zero-sized dims.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PQT1"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<i4"): 1,
    np.dtype("u1"): 2,
    np.dtype("<f8"): 3,
}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}


class TensorFileError(ValueError):
    """Malformed or unsupported tensor file."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Serialize an array; dtype must be one of the four supported codes."""
    arr = np.asarray(array)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    arr = arr.astype(dt, copy=False)
    if arr.dtype not in _DTYPE_CODES:
        raise TensorFileError(f"unsupported dtype {array.dtype}")
    header = MAGIC + struct.pack("<BBI", VERSION, _DTYPE_CODES[arr.dtype], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read tensor file {path}: {exc}") from exc
    if len(raw) < 10 or raw[:4] != MAGIC:
        raise TensorFileError(f"{path}: not a tensor file (bad magic)")
    version, code, rank = struct.unpack("<BBI", raw[4:10])
    if version != VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFileError(f"{path}: unknown dtype code {code}")
    offset = 10 + 4 * rank
    if len(raw) < offset:
        raise TensorFileError(f"{path}: truncated header")
    dims = struct.unpack(f"<{rank}I", raw[10:offset]) if rank else ()
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = offset + count * dtype.itemsize
    if len(raw) != expected:
        raise TensorFileError(
            f"{path}: payload length {len(raw) - offset} does not match "
            f"{count} x {dtype.itemsize} bytes")
    data = np.frombuffer(raw[offset:], dtype=dtype)
    return data.reshape(dims).copy()
