"""Binary checkpoint format.

Layout (little-endian)::

    b"STEP" u32 version
    repeated: u16 name_len, name (UTF-8), u8 rank, u32 dims[rank], f32 data[prod(dims)]
    u32 tensor_count

The config snapshot is a rank-1 tensor named ``__config`` holding the JSON
bytes, one byte value per f32 element.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"STEP"
VERSION = 1
CONFIG_NAME = "__config"


class CheckpointError(ValueError):
    pass


def _tensor_bytes(name: str, arr: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    head = struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def dumps(tensors: dict[str, np.ndarray], config: dict | None = None) -> bytes:
    items = []
    if config is not None:
        blob = json.dumps(config, sort_keys=True).encode("utf-8")
        items.append((CONFIG_NAME, np.frombuffer(blob, dtype=np.uint8).astype(np.float32)))
    items += [(k, np.asarray(v)) for k, v in tensors.items()]
    body = b"".join(_tensor_bytes(k, v) for k, v in items)
    return MAGIC + struct.pack("<I", VERSION) + body + struct.pack("<I", len(items))


def save(path, tensors: dict[str, np.ndarray], config: dict | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, config))


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict | None]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError("not a STEP checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    end = len(data) - 4
    pos = 8
    tensors: dict[str, np.ndarray] = {}
    config = None
    count = 0
    try:
        while pos < end:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > end:
                raise CheckpointError(f"tensor {name!r} runs past the end of the file")
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims)
            pos += 4 * size
            count += 1
            if name == CONFIG_NAME:
                config = json.loads(arr.astype(np.uint8).tobytes().decode("utf-8"))
            else:
                tensors[name] = arr.astype(np.float32)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint: {exc}") from None
    (stored,) = struct.unpack_from("<I", data, end)
    if pos != end or stored != count:
        raise CheckpointError(f"corrupted checkpoint: trailer says {stored} tensors, read {count}")
    return tensors, config


def load(path) -> tuple[dict[str, np.ndarray], dict | None]:
    return loads(Path(path).read_bytes())
