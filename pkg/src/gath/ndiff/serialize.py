"""Versioned little-endian binary format for single arrays.

Layout: magic b"NDT1", u8 version, u8 dtype tag, u8 rank, rank * u64 dims,
then the raw values in C order. Checkpoints embed these blobs per tensor.
"""

import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"NDT1"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float64): 1, np.dtype(np.int64): 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def array_to_bytes(arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_TAGS:
        arr = arr.astype(np.float64)
    header = MAGIC + struct.pack(
        "<BBB", VERSION, _DTYPE_TAGS[arr.dtype], arr.ndim
    )
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    if arr.dtype.byteorder == ">":  # pragma: no cover - LE platforms
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return header + arr.tobytes(order="C")


def array_from_bytes(buf, offset=0):
    """Decode one array; returns (array, next_offset)."""
    if buf[offset : offset + 4] != MAGIC:
        raise CheckpointError("bad tensor magic")
    version, tag, rank = struct.unpack_from("<BBB", buf, offset + 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported tensor format version {version}")
    if tag not in _TAG_DTYPES:
        raise CheckpointError(f"unknown dtype tag {tag}")
    pos = offset + 7
    dims = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    dtype = _TAG_DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    nbytes = count * dtype.itemsize
    if pos + nbytes > len(buf):
        raise CheckpointError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).reshape(dims)
    return arr.copy(), pos + nbytes


def save_array(path, arr):
    with open(path, "wb") as fh:
        fh.write(array_to_bytes(arr))


def load_array(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = array_from_bytes(buf)
    if end != len(buf):
        raise CheckpointError("trailing bytes after tensor payload")
    return arr
