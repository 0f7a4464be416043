"""Flat little-endian parameter checkpoints.

Layout::

    b"CMSA0001"
    u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 rank, u64 extents[rank], f64 payload
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from cmsanet.errors import ParseError

MAGIC = b"CMSA0001"


def save_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(getattr(arr, "data", arr), dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise ParseError(f"truncated checkpoint while reading {what} at byte {pos}", path)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(len(MAGIC), "magic") != MAGIC:
        raise ParseError("bad magic, not a CMSA0001 checkpoint", path)
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("tensor name is not valid UTF-8", path) from None
        (rank,) = struct.unpack("<I", take(4, "rank"))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank, "extents"))
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = take(8 * n, f"payload of '{name}'")
        out[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(buf):
        raise ParseError(f"{len(buf) - pos} trailing bytes after last tensor", path)
    return out
