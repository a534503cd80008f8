"""Versioned binary container used for every model file written by lepfer.

Layout (all integers little-endian)::

    magic      8 bytes   b"LEPFER\\x00\\x01"
    version    uint32
    hdr_len    uint64
    header     hdr_len bytes of UTF-8 JSON (sorted keys, no whitespace)
    payload    raw array bytes, concatenated in header order

The JSON header carries the container ``kind``, free-form ``meta`` and an
``arrays`` table of ``[name, dtype, shape, offset, nbytes]`` entries.  Arrays
are stored C-contiguous with explicit little-endian dtypes, so a reload is
bit-exact and writing the same object twice produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"LEPFER\x00\x01"
VERSION = 1


class ContainerError(ValueError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    dtype = np.dtype(dtype)
    if dtype.kind == "b" or dtype.itemsize == 1:
        return dtype
    return dtype.newbyteorder("<")


def dumps(kind: str, meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        if arr.dtype.kind not in "biuf":
            raise ContainerError(f"array {name!r} has unsupported dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr, dtype=_le(arr.dtype))
        raw = arr.tobytes()
        table.append([name, arr.dtype.str, list(arr.shape), offset, len(raw)])
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": table},
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header)), header, *chunks]
    )


def loads(data: bytes, expect_kind: str | None = None):
    """Parse container bytes; returns ``(kind, meta, arrays)``."""
    if data[:8] != MAGIC:
        raise ContainerError("not a lepfer container (bad magic)")
    (version,) = struct.unpack("<I", data[8:12])
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (hlen,) = struct.unpack("<Q", data[12:20])
    header = json.loads(data[20 : 20 + hlen].decode("utf-8"))
    base = 20 + hlen
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ContainerError(f"expected a {expect_kind!r} container, found {kind!r}")
    arrays = {}
    for name, dtype, shape, offset, nbytes in header["arrays"]:
        raw = data[base + offset : base + offset + nbytes]
        if len(raw) != nbytes:
            raise ContainerError(f"truncated payload for array {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=np.dtype(dtype)).reshape(shape).copy()
    return kind, header["meta"], arrays


def save(path, kind: str, meta: dict, arrays: dict) -> bytes:
    data = dumps(kind, meta, arrays)
    Path(path).write_bytes(data)
    return data


def load(path, expect_kind: str | None = None):
    return loads(Path(path).read_bytes(), expect_kind)


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]
