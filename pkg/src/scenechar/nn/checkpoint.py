"""Binary tensor checkpoint.

Layout (little endian)::

    b"GFCK" | version u32 | tensor count u32
    per tensor: name length u16 | UTF-8 name | rank u8 | extents u32 * rank | float32 data
    optional trailer: b"META" | length u32 | UTF-8 JSON

Normalization statistics and the vocabulary travel as ordinary tensors; the
JSON trailer carries the network layout.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError, IoFailure

MAGIC = b"GFCK"
TRAILER_MAGIC = b"META"
FORMAT_VERSION = 1


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} cannot be encoded")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        chunks.append(TRAILER_MAGIC + struct.pack("<I", len(blob)) + blob)
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def read_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        pos = 12
        tensors = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
            tensors[name] = arr.astype(np.float32)
            pos += 4 * size
        meta = {}
        if data[pos:pos + 4] == TRAILER_MAGIC:
            (n,) = struct.unpack_from("<I", data, pos + 4)
            meta = json.loads(data[pos + 8:pos + 8 + n].decode("utf-8"))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    return tensors, meta
