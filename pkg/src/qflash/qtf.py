"""QTF1 binary tensor files.

Layout (all little-endian)::

    b"QTF1"  | u8 dtype code | u8 rank | rank x u32 dims
    u64 scale count | scale count x f64 | row-major payload

Dtype codes: 0 = f64, 1 = i8, 2 = i32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .int_tensor import Granularity, QuantizedTensor

MAGIC = b"QTF1"

_CODES = {0: np.dtype("<f8"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_BY_KIND = {("f", 8): 0, ("i", 1): 1, ("i", 4): 2}


class QTFError(ValueError):
    pass


def encode(array, scales=()) -> bytes:
    array = np.asarray(array)
    code = _BY_KIND.get((array.dtype.kind, array.dtype.itemsize))
    if code is None:
        raise QTFError(f"unsupported dtype {array.dtype}")
    if array.ndim > 255:
        raise QTFError("rank too large")
    scales = np.asarray(scales, dtype="<f8").ravel()
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    header += struct.pack("<Q", scales.size)
    payload = np.ascontiguousarray(array, dtype=_CODES[code]).tobytes()
    return header + scales.tobytes() + payload


def decode(buf: bytes):
    """Return ``(array, scales)`` from QTF1 bytes."""
    if buf[:4] != MAGIC:
        raise QTFError("bad magic")
    try:
        code, rank = struct.unpack_from("<BB", buf, 4)
        pos = 6
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        (n_scales,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
    except struct.error as exc:
        raise QTFError("truncated header") from exc
    if code not in _CODES:
        raise QTFError(f"unknown dtype code {code}")
    dtype = _CODES[code]
    if len(buf) - pos < 8 * n_scales:
        raise QTFError("truncated scale block")
    scales = np.frombuffer(buf, dtype="<f8", count=n_scales, offset=pos).copy()
    pos += 8 * n_scales
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - pos != count * dtype.itemsize:
        raise QTFError(f"payload size {len(buf) - pos} does not match dims {dims}")
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).reshape(dims).copy()
    return data, scales


def save(path, array, scales=()):
    Path(path).write_bytes(encode(array, scales))


def load(path):
    return decode(Path(path).read_bytes())


def save_quantized(path, t: QuantizedTensor):
    save(path, t.data, t.scales)


def load_quantized(path, granularity=Granularity.PER_TENSOR) -> QuantizedTensor:
    data, scales = load(path)
    if data.dtype.kind != "i":
        raise QTFError("payload is not integer")
    return QuantizedTensor(data, 8 * data.dtype.itemsize, scales, granularity)
