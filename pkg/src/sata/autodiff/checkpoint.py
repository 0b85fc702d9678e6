"""Versioned binary checkpoint.

Layout (little-endian)::

    b"SATA" | u32 version | u32 n | n bytes JSON config
    u32 count | per parameter: u32 name_len, name (UTF-8), u32 rank,
                               rank x u32 dims, float32 payload
"""

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"SATA"
VERSION = 1


def dumps(config, params):
    """Serialize ``config`` (JSON-able) and ``{name: array}`` to bytes."""
    buf = io.BytesIO()
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f4")  # keeps 0-d shapes; tobytes is C order
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data):
    """Inverse of :func:`dumps`: ``(config, {name: float32 array})``."""
    try:
        if data[:4] != MAGIC:
            raise CheckpointError("not a checkpoint (bad magic)")
        version, n = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 12
        config = json.loads(data[off:off + n].decode("utf-8"))
        off += n
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        params = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + ln].decode("utf-8")
            off += ln
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if off + 4 * size > len(data):
                raise CheckpointError(f"truncated payload for {name}")
            params[name] = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(dims).copy()
            off += 4 * size
        if off != len(data):
            raise CheckpointError(f"{len(data) - off} trailing bytes")
        return config, params
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None


def save(path, config, params):
    Path(path).write_bytes(dumps(config, params))


def load(path):
    return loads(Path(path).read_bytes())
