"""Binary checkpoint format.

Layout, all integers little-endian::

    magic      8 bytes  b"FEWLOC\\x00\\x01"
    count      uint32   number of entries
    entry*     repeated ``count`` times:
        name_len   uint16
        name       utf-8, name_len bytes
        dtype      uint8    (4 = float32, 8 = float64)
        ndim       uint8
        dims       uint32 * ndim
        data       little-endian IEEE floats, C order

Values are stored in the tensor's own precision, so a save/load cycle is
bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"FEWLOC\x00\x01"
_CODES = {4: "<f4", 8: "<f8"}


def save_checkpoint(path, params: Mapping[str, Tensor]) -> None:
    parts = [MAGIC, struct.pack("<I", len(params))]
    for name, t in params.items():
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        code = arr.dtype.itemsize
        if code not in _CODES or arr.dtype.kind != "f":
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (count,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        code, ndim = struct.unpack_from("<BB", buf, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        count_ = int(np.prod(shape))
        arr = np.frombuffer(buf, dtype=_CODES[code], count=count_, offset=pos).reshape(shape)
        pos += count_ * code
        out[name] = arr.astype(arr.dtype.newbyteorder("="))
    return out


def load_into(params: Mapping[str, Tensor], path) -> None:
    """Copy checkpoint values into ``params``; any name or shape mismatch is
    reported in full before anything is written."""
    stored = read_checkpoint(path)
    problems = []
    for name in sorted(set(params) | set(stored)):
        if name not in stored:
            problems.append(f"  missing in checkpoint: {name} {params[name].shape}")
        elif name not in params:
            problems.append(f"  unexpected in checkpoint: {name} {stored[name].shape}")
        elif stored[name].shape != params[name].shape:
            problems.append(f"  {name}: model {params[name].shape} vs checkpoint {stored[name].shape}")
    if problems:
        raise ValueError("checkpoint does not match the model architecture:\n" + "\n".join(problems))
    for name, t in params.items():
        t.data[...] = stored[name]
