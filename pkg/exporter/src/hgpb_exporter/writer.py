"""Minimal HGPB v1 writer (f32 payloads, atomic file replacement).

The format is shared with the optimizer package but deliberately
reimplemented here: the two packages communicate only through the file
format, never through each other's code.

Layout, little-endian throughout:

    magic  "HGPB" (4 bytes)
    u32    version (= 1)
    u32    manifest byte length, then UTF-8 key=value lines
           (keys: M, N, h, p, d, C, provenance, seed)
    u32    tensor count, then per tensor:
        u16  name length, UTF-8 name
        u8   dtype (1 = f32, 2 = f64, 3 = i64)
        u8   ndim, then ndim x u64 dims
        payload, row-major packed
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"HGPB"
VERSION = 1

_F32, _F64, _I64 = 1, 2, 3


def _tensor_record(name: str, arr: np.ndarray, code: int) -> bytes:
    dtype = {_F32: "<f4", _F64: "<f8", _I64: "<i8"}[code]
    payload = np.ascontiguousarray(arr.astype(dtype, copy=False))
    name_b = name.encode("utf-8")
    parts = [struct.pack("<H", len(name_b)), name_b,
             struct.pack("<BB", code, payload.ndim)]
    parts += [struct.pack("<Q", dim) for dim in payload.shape]
    parts.append(payload.tobytes())
    return b"".join(parts)


def write_bundle_f32(path, features, gradients, labels, class_count,
                     prompts=None, provenance="", seed=0):
    """Serialize one bundle with f32 tensor payloads, atomically.

    The file appears at ``path`` only if serialization completed: data is
    written to a temporary file in the same directory and renamed over the
    target.
    """
    m = len(features)
    if m == 0:
        raise ValueError("bundle must contain at least one source")
    if len(gradients) != m or (prompts is not None and len(prompts) != m):
        raise ValueError("features, gradients, and prompts must agree on M")
    labels = np.asarray(labels, dtype=np.int64)
    n, h = np.asarray(features[0]).shape
    p, d = np.asarray(gradients[0]).shape

    manifest = "".join(f"{k}={v}\n" for k, v in [
        ("M", m), ("N", n), ("h", h), ("p", p), ("d", d),
        ("C", class_count), ("provenance", provenance), ("seed", seed),
    ]).encode("utf-8")

    tensors = [_tensor_record("labels", labels, _I64)]
    for i, f in enumerate(features):
        tensors.append(_tensor_record(f"features/{i}", np.asarray(f), _F32))
    for i, g in enumerate(gradients):
        tensors.append(_tensor_record(f"gradients/{i}", np.asarray(g), _F32))
    if prompts is not None:
        for i, pt in enumerate(prompts):
            tensors.append(_tensor_record(f"prompts/{i}", np.asarray(pt), _F32))

    blob = b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(manifest)), manifest,
        struct.pack("<I", len(tensors)), *tensors,
    ])

    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".hgpb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
