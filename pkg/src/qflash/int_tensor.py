"""Symmetric integer tensors: scales, quantize/dequantize, int8 GEMM, row reductions.

Layout is row-major with the channel axis innermost.  Tensors have rank <= 4
and are read as ``(batch, head, token, channel)`` from the right, so a rank-2
tensor is a single head of ``(token, channel)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _ops

#: scale substituted for an all-zero slice so downstream divisions stay defined
EPS_MIN = 2.0**-20

SUPPORTED_BITS = (8, 32)

_DTYPES = {8: np.int8, 32: np.int32}


class Granularity(str, enum.Enum):
    PER_TENSOR = "per-tensor"
    PER_HEAD = "per-head"
    PER_TOKEN = "per-token"

    @classmethod
    def parse(cls, value) -> "Granularity":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for g in cls:
            if g.value == key or g.name.lower().replace("_", "-") == key:
                return g
        raise ValueError(f"unknown granularity {value!r}")


def int_range(bits: int) -> tuple[int, int]:
    """Closed range ``[-2^(b-1), 2^(b-1) - 1]`` of a signed ``bits``-bit integer."""
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def _check_bits(bits):
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"bit width must be one of {SUPPORTED_BITS}, got {bits}")


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _scale_shape(shape, granularity):
    if granularity is Granularity.PER_TENSOR:
        return ()
    if granularity is Granularity.PER_HEAD:
        return (shape[-3],) if len(shape) >= 3 else (1,)
    return tuple(shape[-3:-1]) if len(shape) >= 3 else tuple(shape[:-1])


def _broadcast_scales(scales, shape, granularity):
    """Reshape a scale array so it broadcasts against a tensor of ``shape``."""
    scales = np.asarray(scales, dtype=np.float64)
    if granularity is Granularity.PER_TENSOR:
        return scales.reshape(())
    if granularity is Granularity.PER_HEAD:
        if len(shape) >= 3:
            return scales.reshape((shape[-3], 1, 1))
        return scales.reshape(())
    return scales.reshape(scales.shape + (1,))


@dataclass(frozen=True)
class QuantizedTensor:
    """Integer payload plus the scale(s) that map it back to real values."""

    data: np.ndarray
    bit_width: int
    scales: np.ndarray
    granularity: Granularity = Granularity.PER_TENSOR

    def __post_init__(self):
        _check_bits(self.bit_width)
        data = np.asarray(self.data)
        if data.dtype.kind not in "iu":
            raise TypeError(f"payload must be integer, got {data.dtype}")
        if not 1 <= data.ndim <= 4:
            raise ValueError(f"rank must be in [1, 4], got {data.ndim}")
        lo, hi = int_range(self.bit_width)
        if data.size and (data.min() < lo or data.max() > hi):
            raise ValueError(f"payload outside int{self.bit_width} range")
        data = data.astype(_DTYPES[self.bit_width], copy=False).view()
        data.flags.writeable = False
        g = Granularity.parse(self.granularity)
        scales = np.array(self.scales, dtype=np.float64)
        expected = _scale_shape(data.shape, g) if data.ndim >= 2 else ()
        if scales.size != int(np.prod(expected, dtype=int)):
            raise ValueError(f"{g.value} needs scales of shape {expected}, got {scales.shape}")
        scales = scales.reshape(expected)
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise ValueError("scales must be finite and strictly positive")
        scales.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "granularity", g)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def scale_array(self):
        """Scales reshaped to broadcast against ``data``."""
        return _broadcast_scales(self.scales, self.data.shape, self.granularity)


def compute_scale(x, bits: int = 8, granularity=Granularity.PER_TENSOR):
    """Max-abs symmetric scale ``||slice||_inf / (2^(b-1) - 1)`` per slice."""
    _check_bits(bits)
    g = Granularity.parse(granularity)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    qmax = (1 << (bits - 1)) - 1
    ax = np.abs(x)
    if g is Granularity.PER_TENSOR or x.ndim < 2:
        if g is Granularity.PER_TOKEN and x.ndim < 2:
            raise ValueError("per-token scales need a (token, channel) tensor")
        amax = np.asarray(ax.max() if ax.size else 0.0)
    elif g is Granularity.PER_HEAD:
        if x.ndim < 3:
            amax = np.asarray([ax.max()])
        else:
            moved = np.moveaxis(ax, -3, 0).reshape(x.shape[-3], -1)
            amax = moved.max(axis=1)
    else:
        amax = ax.max(axis=-1)
        if x.ndim > 3:
            amax = amax.max(axis=tuple(range(x.ndim - 3)))
    scales = amax / qmax
    return np.where(amax == 0, EPS_MIN, scales)


def quantize(x, scales, bits: int = 8, granularity=Granularity.PER_TENSOR) -> QuantizedTensor:
    """``clamp(round(x / s))`` with ties rounded away from zero."""
    _check_bits(bits)
    g = Granularity.parse(granularity)
    x = np.asarray(x, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
        raise ValueError("scales must be finite and strictly positive")
    s = _broadcast_scales(scales, x.shape, g)
    lo, hi = int_range(bits)
    q = np.clip(round_half_away(x / s), lo, hi).astype(_DTYPES[bits])
    return QuantizedTensor(q, bits, scales, g)


def dequantize(t: QuantizedTensor) -> np.ndarray:
    return t.data.astype(np.float64) * t.scale_array()


def quantize_like(x, bits=8, granularity=Granularity.PER_TENSOR) -> QuantizedTensor:
    """Compute scales from ``x`` and quantize it in one step."""
    return quantize(x, compute_scale(x, bits, granularity), bits, granularity)


def _matmul_scales(a: QuantizedTensor, b: QuantizedTensor):
    if Granularity.PER_TOKEN in (a.granularity, b.granularity):
        raise ValueError("per-token operands have no single product scale")
    g = a.granularity
    if b.granularity is Granularity.PER_HEAD:
        g = Granularity.PER_HEAD
    return np.asarray(a.scales * b.scales), g


def int_matmul(a: QuantizedTensor, b: QuantizedTensor, audit=None) -> QuantizedTensor:
    """Exact int8 x int8 -> int32 product; the output scale is ``s_A * s_B``."""
    if a.bit_width != 8 or b.bit_width != 8:
        raise TypeError("int_matmul takes int8 operands")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("operands must be at least 2-D")
    inner = a.shape[-1]
    if b.shape[-2] != inner:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    # worst-case |sum| = inner * 128 * 128 must stay below 2^31
    if inner * 128 * 128 > (1 << 31) - 1:
        raise ValueError(f"inner dimension {inner} overflows the int32 accumulator")
    scales, g = _matmul_scales(a, b)
    c = _ops.matmul(a.data.astype(np.int32), b.data.astype(np.int32), audit)
    return QuantizedTensor(c, 32, scales, g)


def row_max(x, audit=None) -> np.ndarray:
    """Per-row maximum of an int32 tile."""
    data = x.data if isinstance(x, QuantizedTensor) else np.asarray(x)
    if data.shape[-1] < 1:
        raise ValueError("row_max of an empty row")
    return _ops.reduce_max(data, axis=-1, audit=audit).astype(np.int32)


def row_sum(x, audit=None) -> np.ndarray:
    """Per-row sum of an int8 tile, accumulated in int32."""
    data = x.data if isinstance(x, QuantizedTensor) else np.asarray(x)
    if data.shape[-1] < 1:
        raise ValueError("row_sum of an empty row")
    return _ops.reduce_sum(data, axis=-1, dtype=np.int32, audit=audit)


@dataclass(frozen=True)
class GranularityVerdict:
    """Outcome of the fused-kernel granularity gate; falsy when rejected."""

    granularity: Granularity
    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok

    def to_dict(self):
        return {"granularity": self.granularity.value, "ok": self.ok, "reason": self.reason}


def validate_fused_granularity(granularity) -> GranularityVerdict:
    g = Granularity.parse(granularity)
    if g is Granularity.PER_TOKEN:
        return GranularityVerdict(
            g,
            False,
            "per-token scales differ between the rows of each score tile, so the "
            "tile-wise integer max update and numerator/denominator accumulation would "
            "compare and add values in different units; use per-tensor or per-head",
        )
    return GranularityVerdict(g, True)
