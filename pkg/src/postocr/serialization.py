"""Versioned single-file tensor container.

Layout (all integers little-endian)::

    magic            8 bytes
    format version   uint32
    header length    uint32, then that many bytes of canonical UTF-8 JSON
    tensor count     uint32
    per tensor:
        name length  uint16, name bytes (UTF-8)
        ndim         uint8, then ndim x uint32 shape
        data         prod(shape) x float32
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import FormatError

FORMAT_VERSION = 1


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def pack(magic: bytes, header: dict, tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    assert len(magic) == 8
    head = canonical_json(header)
    parts = [magic, struct.pack("<II", FORMAT_VERSION, len(head)), head, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<HB", len(raw), arr.ndim) + raw)
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def unpack(magic: bytes, blob: bytes) -> tuple[dict, "OrderedDict[str, np.ndarray]"]:
    try:
        if blob[:8] != magic:
            raise FormatError(f"bad magic {blob[:8]!r}, expected {magic!r}")
        version, hlen = struct.unpack_from("<II", blob, 8)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        pos = 16
        header = json.loads(blob[pos : pos + hlen].decode())
        pos += hlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        tensors = OrderedDict()
        for _ in range(count):
            nlen, ndim = struct.unpack_from("<HB", blob, pos)
            pos += 3
            name = blob[pos : pos + nlen].decode()
            pos += nlen
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f4", count=size, offset=pos)
            pos += 4 * size
            tensors[name] = data.reshape(shape).astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"corrupt container: {exc}") from exc
    if pos != len(blob):
        raise FormatError("trailing bytes after last tensor")
    return header, tensors


def read_file(path: str | Path, magic: bytes):
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    return unpack(magic, path.read_bytes())
