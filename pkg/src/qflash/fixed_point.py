"""Integer-only scalar kernels: fixed-point rescaling and the shift-based exp2.

All real-valued scale handling happens when a :class:`FixedPointMultiplier`
or :class:`ShiftExpParams` is built.  The functions that take those objects
evaluate with integer multiplies, adds, compares and arithmetic right shifts
only.  Products are formed in 64-bit integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _ops
from .int_tensor import int_range

#: quotients at or beyond this many halvings underflow to zero
Q_CLAMP = 31

#: fractional bits of the quotient multiplier ``M``
SHIFT_EXP_BITS = 30

#: largest |x| accepted by shift_exp2; the running-max offset can reach -2^22
MAX_EXP_INPUT = 1 << 22

_I64_LIMIT = 1 << 63


class AccumulatorOverflow(OverflowError):
    """An integer accumulator left its representable range."""

    def __init__(self, message, bits=None):
        super().__init__(message)
        self.bits = bits


def _round_half_away(v: float) -> int:
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


@dataclass(frozen=True)
class FixedPointMultiplier:
    """``src_scale / dst_scale`` realized as ``(x * multiplier) >> shift``."""

    n: int
    shift: int
    multiplier: int
    bits: int
    src_scale: float
    dst_scale: float

    @property
    def ratio(self) -> float:
        return self.src_scale / self.dst_scale

    @property
    def realized(self) -> float:
        return self.multiplier / (1 << self.shift)


def make_multiplier(src_scale: float, dst_scale: float, bits: int = 8) -> FixedPointMultiplier:
    """Build the multiplier/shift pair for rescaling from ``src_scale`` to ``dst_scale``.

    ``n = floor(log2(ratio))``, ``shift = bits - n`` and
    ``multiplier = round(ratio * 2^shift)``, so the multiplier carries
    ``bits + 1`` significant bits.
    """
    if not (src_scale > 0 and dst_scale > 0) or not math.isfinite(src_scale / dst_scale):
        raise ValueError("scales must be finite and positive")
    ratio = src_scale / dst_scale
    mantissa, exponent = math.frexp(ratio)  # ratio = mantissa * 2^exponent, mantissa in [0.5, 1)
    n = exponent - 1
    shift = bits - n
    if shift < 0:
        raise ValueError(f"ratio {ratio:g} needs a left shift at {bits} bits")
    multiplier = _round_half_away(math.ldexp(ratio, shift))
    if multiplier < 1 or multiplier >= 1 << 62:
        raise ValueError(f"ratio {ratio:g} is not representable at {bits} bits")
    return FixedPointMultiplier(n, shift, multiplier, bits, float(src_scale), float(dst_scale))


def _max_abs(x) -> int:
    x = np.asarray(x)
    if x.size == 0:
        return 0
    return max(abs(int(x.max())), abs(int(x.min())))


def requantize(x, mult: FixedPointMultiplier, out_bits: int = 8, audit=None) -> np.ndarray:
    """``(x * M) >> r`` then saturate to ``out_bits``; the result has ``mult.dst_scale``."""
    x = np.asarray(x)
    if _max_abs(x) * mult.multiplier >= _I64_LIMIT:
        raise AccumulatorOverflow("requantize product exceeds 64 bits", 64)
    y = _ops.shr(_ops.mul(x.astype(np.int64), np.int64(mult.multiplier), audit), mult.shift, audit)
    lo, hi = int_range(out_bits)
    y = _ops.clip(y, lo, hi, audit)
    return y.astype(np.int8 if out_bits == 8 else np.int32)


@dataclass(frozen=True)
class ShiftExpParams:
    """Precomputed constants for :func:`shift_exp2` at input scale ``s``.

    ``s`` already includes the ``log2(e)`` factor, so ``shift_exp2(x)``
    approximates ``2 ** (s * x)``.
    """

    s: float
    s_inv: int
    multiplier: int
    n_bits: int = SHIFT_EXP_BITS

    @classmethod
    def from_scale(cls, s: float, n_bits: int = SHIFT_EXP_BITS) -> "ShiftExpParams":
        if not (s > 0 and math.isfinite(s)):
            raise ValueError("exp scale must be finite and positive")
        s_inv = _round_half_away(1.0 / s)
        multiplier = _round_half_away(math.ldexp(s, n_bits))
        if s_inv < 1 or multiplier < 1:
            raise ValueError(f"exp scale {s:g} out of range for {n_bits}-bit quotient")
        if MAX_EXP_INPUT * multiplier >= _I64_LIMIT:
            raise ValueError(f"exp scale {s:g} overflows the 64-bit quotient product")
        return cls(float(s), s_inv, multiplier, n_bits)


@dataclass(frozen=True)
class ShiftExpTrace:
    """Quotient and remainder of the exp2 input split; ``rem = x + q * s_inv``."""

    q: np.ndarray
    rem: np.ndarray


def _check_exp_input(x):
    x = np.asarray(x)
    if x.dtype.kind not in "iu":
        raise TypeError(f"shift_exp2 input must be integer, got {x.dtype}")
    if x.size and int(x.max()) > 0:
        raise ValueError("shift_exp2 input must be <= 0")
    if x.size and -int(x.min()) > MAX_EXP_INPUT:
        raise ValueError(f"shift_exp2 input below -{MAX_EXP_INPUT}")
    return x.astype(np.int64)


def quotient_div(x, s_inv: int, audit=None) -> np.ndarray:
    """Reference quotient ``floor(x / -s_inv)`` by integer division."""
    x = np.asarray(x, dtype=np.int64)
    return _ops.floordiv(x, np.int64(-s_inv), audit)


def quotient_mulshift(x, params: ShiftExpParams, correct: bool = True, audit=None) -> np.ndarray:
    """Quotient ``((-x) * M) >> N`` with no division.

    ``M / 2^N`` approximates ``s`` rather than ``1 / s_inv`` exactly, so the
    raw value can be one off from :func:`quotient_div` at remainder
    boundaries.  With ``correct`` a single compare-and-step on the remainder
    moves it onto floor semantics.
    """
    x = np.asarray(x, dtype=np.int64)
    q = _ops.shr(_ops.mul(_ops.sub(0, x, audit), np.int64(params.multiplier), audit), params.n_bits, audit)
    if not correct:
        return q
    s_inv = np.int64(params.s_inv)
    rem = _ops.add(x, _ops.mul(q, s_inv, audit), audit)
    q = _ops.sub(q, (rem > 0).astype(np.int64), audit)
    q = _ops.add(q, (rem <= -s_inv).astype(np.int64), audit)
    return q


def shift_exp2(x, params: ShiftExpParams, quotient: str = "mulshift", audit=None):
    """Integer ``2 ** (s * x)`` for ``x <= 0``.

    Splits ``x`` into ``-q`` whole halvings and a remainder in ``(-s_inv, 0]``,
    replaces ``2 ** (s * rem)`` by the line ``s * (rem / 2 + s_inv)`` and
    applies the halvings as a right shift.  ``quotient`` picks how ``q`` is
    found: ``"mulshift"`` (default), ``"mulshift-raw"`` (no remainder
    correction) or ``"div"``.  Returns ``(y, s_y, trace)`` with
    ``y`` in ``[0, s_inv]`` and ``s_y = s``.
    """
    x = _check_exp_input(x)
    if quotient == "mulshift":
        q = quotient_mulshift(x, params, audit=audit)
    elif quotient == "mulshift-raw":
        q = quotient_mulshift(x, params, correct=False, audit=audit)
    elif quotient == "div":
        q = quotient_div(x, params.s_inv, audit)
    else:
        raise ValueError(f"unknown quotient mode {quotient!r}")
    s_inv = np.int64(params.s_inv)
    rem = _ops.add(x, _ops.mul(q, s_inv, audit), audit)
    mantissa = _ops.add(_ops.shr(rem, 1, audit), s_inv, audit)
    underflow = q >= Q_CLAMP
    y = _ops.shr(mantissa, np.where(underflow, 0, q), audit)
    y = np.where(underflow, 0, y).astype(np.int32)
    return y, params.s, ShiftExpTrace(q, rem)


def release_multiplier(s_alpha: float, bits: int = 16) -> FixedPointMultiplier:
    """Multiplier folding the exp output scale into an accumulator rescale."""
    return make_multiplier(s_alpha, 1.0, bits)


def reciprocal_multiplier(s_alpha: float, bits: int = 24) -> FixedPointMultiplier:
    """Multiplier for ``x / s_alpha``, used by the scale-accumulation variant."""
    return make_multiplier(1.0, s_alpha, bits)


def _row_bound(acc, alpha):
    """Exact per-row max of ``|acc * alpha|`` as a Python int."""
    acc = np.asarray(acc)
    if acc.size == 0:
        return 0
    mag = np.abs(acc.astype(np.int64))
    if mag.ndim > alpha.ndim:
        mag = mag.max(axis=-1)
    alpha = np.abs(alpha)
    if mag.max() < 1 << 31 and alpha.max() < 1 << 31:
        return int((mag * alpha).max())
    return max(int(a) * int(b) for a, b in zip(mag.ravel(), alpha.ravel()))


def _expand_alpha(acc, alpha):
    alpha = np.asarray(alpha, dtype=np.int64)
    if np.ndim(acc) == alpha.ndim + 1:
        return alpha, alpha[..., None]
    return alpha, alpha


def scale_release(acc, alpha, mult: FixedPointMultiplier, audit=None) -> np.ndarray:
    """``floor(acc * alpha * s_alpha)`` per row as ``(acc * alpha * M) >> r``.

    The accumulator keeps its scale; only the exp factor's scale is folded in.
    The result is returned as int64 so the caller can add the next tile
    before narrowing.
    """
    acc = np.asarray(acc)
    alpha_rows, alpha_b = _expand_alpha(acc, alpha)
    if _row_bound(acc, alpha_rows) * mult.multiplier >= _I64_LIMIT:
        raise AccumulatorOverflow("scale_release product exceeds 64 bits; tile sizes too large", 64)
    prod = _ops.mul(_ops.mul(acc.astype(np.int64), alpha_b, audit), np.int64(mult.multiplier), audit)
    out = _ops.shr(prod, mult.shift, audit)
    lo, hi = int_range(32)
    if out.size and (int(out.min()) < lo or int(out.max()) > hi):
        raise AccumulatorOverflow("released accumulator exceeds int32", 32)
    return out


def scale_accumulate(acc, alpha, pv, recip: FixedPointMultiplier, acc_bits: int = 64, audit=None) -> np.ndarray:
    """``acc * alpha + floor(pv / s_alpha)`` with checked arithmetic.

    The accumulator's scale grows with every tile.  Leaving the signed
    ``acc_bits`` range raises :class:`AccumulatorOverflow` instead of wrapping.
    """
    acc = np.asarray(acc)
    pv = np.asarray(pv)
    alpha_rows, alpha_b = _expand_alpha(acc, alpha)
    lo, hi = int_range(acc_bits)
    if _max_abs(pv) * recip.multiplier >= _I64_LIMIT:
        raise AccumulatorOverflow("scale_accumulate tile term exceeds 64 bits", 64)
    term = _ops.shr(_ops.mul(pv.astype(np.int64), np.int64(recip.multiplier), audit), recip.shift, audit)
    bound = _row_bound(acc, alpha_rows) + _max_abs(term)
    if bound < min(hi, _I64_LIMIT - 1):
        return _ops.add(_ops.mul(acc.astype(np.int64), alpha_b, audit), term, audit)
    # slow path: exact big-integer evaluation to tell a real overflow from a loose bound
    exact = acc.astype(object) * alpha_b.astype(object) + term.astype(object)
    top = max(abs(int(v)) for v in exact.ravel()) if exact.size else 0
    if top > hi:
        raise AccumulatorOverflow(f"scale accumulation exceeds int{acc_bits}", acc_bits)
    if audit is not None:
        audit.count("int_mul", exact.size)
        audit.count("int_add", exact.size)
    return exact.astype(np.int64)
