"""Binary container for named float64 tensors with an embedded JSON manifest.

Layout (all integers little-endian):

    8 bytes   magic ``FSSMTNS1``
    u32       container version
    u64       manifest length, followed by UTF-8 JSON manifest
    u32       tensor count
    per tensor: u16 name length + name bytes, u8 ndim, u32 per dim,
                float64 data (C order)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import IoError, ParseError

MAGIC = b"FSSMTNS1"
VERSION = 1


def save_container(path, tensors: dict[str, np.ndarray], manifest: dict) -> None:
    """Write tensors + manifest atomically (temp file then rename)."""
    path = Path(path)
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION),
              struct.pack("<Q", len(manifest_bytes)), manifest_bytes,
              struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # keeps ndim >= 1 inputs as-is
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(b"".join(chunks))
        tmp.replace(path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a tensor container; raises ParseError on bad magic or layout."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 24 or data[:8] != MAGIC:
        raise ParseError(f"{path}: not a flowssm tensor container")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    (manifest_len,) = struct.unpack_from("<Q", data, 12)
    offset = 20
    try:
        manifest = json.loads(data[offset : offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt manifest: {exc}") from exc
    offset += manifest_len
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", data, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            tensors[name] = arr.reshape(shape).astype(np.float64)
    except struct.error as exc:
        raise ParseError(f"{path}: truncated container: {exc}") from exc
    return tensors, manifest
