"""Binary checkpoint format.

Layout (little-endian)::

    b"PGN1"
    u32 parameter count
    repeated: u32 name length, UTF-8 name, u32 rank, rank x u32 dims, float32 data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PGN1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    pos = 4

    def read(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        values = struct.unpack_from(fmt, blob, pos)
        pos += size
        return values

    (count,) = read("<I")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = read("<I")
        if pos + name_len > len(blob):
            raise CheckpointError(f"{path}: truncated name")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = read("<I")
        dims = read(f"<{rank}I") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        if pos + 4 * n > len(blob):
            raise CheckpointError(f"{path}: truncated data for {name}")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        out[name] = arr.astype(np.float32)
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return out
