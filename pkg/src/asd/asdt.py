"""Binary tensor serialization (ASDT records and ASDC containers).

Single tensor record:
    magic b"ASDT" | u8 version=1 | u8 dtype (1 = float64) | u8 ndim
    | ndim x u64 little-endian dims | row-major little-endian payload

Named container (checkpoints, dataset shards):
    magic b"ASDC" | u8 version=1 | u32 little-endian entry count
    | per entry: u16 little-endian name length | UTF-8 name | tensor record

Every parse failure raises FormatError carrying the byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

TENSOR_MAGIC = b"ASDT"
CONTAINER_MAGIC = b"ASDC"
VERSION = 1
DTYPE_F64 = 1


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    header = TENSOR_MAGIC + struct.pack("<BBB", VERSION, DTYPE_F64, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    payload = arr.astype("<f8", copy=False).tobytes(order="C")
    return header + dims + payload


def _take(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise FormatError(f"truncated file: needed {n} bytes for {what} at offset {offset}")
    return buf[offset:offset + n], offset + n


def parse_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor record starting at ``offset``; returns (array, next offset)."""
    magic, offset = _take(buf, offset, 4, "magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset {offset - 4}, expected {TENSOR_MAGIC!r}")
    head, offset = _take(buf, offset, 3, "header")
    version, dtype, ndim = struct.unpack("<BBB", head)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset {offset - 3}")
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype {dtype} at offset {offset - 2}")
    raw_dims, offset = _take(buf, offset, 8 * ndim, "dims")
    dims = struct.unpack(f"<{ndim}Q", raw_dims) if ndim else ()
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload, offset = _take(buf, offset, 8 * count, "payload")
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return arr, offset


def write_tensor(arr: np.ndarray, path) -> None:
    Path(path).write_bytes(tensor_bytes(arr))


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, offset = parse_tensor(buf)
    if offset != len(buf):
        raise FormatError(f"trailing bytes after tensor record at offset {offset}")
    return arr


def write_container(entries: dict[str, np.ndarray], path) -> None:
    """Write named tensors; entry order is preserved and acts as the index."""
    chunks = [CONTAINER_MAGIC, struct.pack("<BI", VERSION, len(entries))]
    for name, arr in entries.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(tensor_bytes(arr))
    Path(path).write_bytes(b"".join(chunks))


def read_container(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    magic, offset = _take(buf, 0, 4, "magic")
    if magic != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {CONTAINER_MAGIC!r}")
    head, offset = _take(buf, offset, 5, "header")
    version, count = struct.unpack("<BI", head)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw_len, offset = _take(buf, offset, 2, "name length")
        (name_len,) = struct.unpack("<H", raw_len)
        raw_name, offset = _take(buf, offset, name_len, "name")
        name = raw_name.decode("utf-8")
        entries[name], offset = parse_tensor(buf, offset)
    if offset != len(buf):
        raise FormatError(f"trailing bytes after last entry at offset {offset}")
    return entries


def is_container(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == CONTAINER_MAGIC
    except OSError:
        return False
