"""Fused, tile-wise, integer-only attention forward pass.

For every block of query rows the kernel walks the key/value tiles once,
keeping a running row maximum ``m``, an integer denominator ``l`` and an
int32 numerator accumulator ``o``.  Per tile:

    S     = Q_i K_j^T                         int8 x int8 -> int32
    m'    = max(m, rowmax(S))
    alpha = ShiftExp2(m - m')                  rescale factor for old state
    P     = requant(ShiftExp2(S - m'))         int8 in [0, 127]
    l     = release(l, alpha) + rowsum(P)
    o     = release(o, alpha) + P V_j

and after the last tile ``O_i = floor(o / l)``, which carries the scale of V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _ops
from .fixed_point import (
    AccumulatorOverflow,
    FixedPointMultiplier,
    ShiftExpParams,
    make_multiplier,
    reciprocal_multiplier,
    release_multiplier,
    requantize,
    scale_accumulate,
    scale_release,
    shift_exp2,
)
from .int_tensor import (
    Granularity,
    QuantizedTensor,
    int_matmul,
    quantize_like,
    row_max,
    row_sum,
    validate_fused_granularity,
)
from .tiling import TileConfig

#: initial running maximum, below any reachable int8 x int8 score for d <= 128
SCORE_FLOOR = -(1 << 21)

#: scale of the requantized probabilities: [0, 1] maps onto [0, 127]
P_SCALE = 1.0 / 127.0

MAX_HEAD_DIM = 128

LOG2E = math.log2(math.e)

MODES = ("release", "accumulate")


class KernelInvariantError(RuntimeError):
    """An internal kernel invariant (positive denominator, output range) was violated."""


class GranularityError(ValueError):
    def __init__(self, verdict):
        super().__init__(verdict.reason)
        self.verdict = verdict


@dataclass(frozen=True)
class AttentionInputs:
    """Quantized Q, K, V of shape ``(..., N, d)`` sharing one granularity."""

    q: QuantizedTensor
    k: QuantizedTensor
    v: QuantizedTensor

    def __post_init__(self):
        for name in ("q", "k", "v"):
            t = getattr(self, name)
            if t.bit_width != 8:
                raise TypeError(f"{name} must be int8")
            if t.data.ndim < 2:
                raise ValueError(f"{name} must be at least (N, d)")
        if self.q.shape[-1] != self.k.shape[-1]:
            raise ValueError("q and k head dimensions differ")
        if self.k.shape[-2] != self.v.shape[-2]:
            raise ValueError("k and v sequence lengths differ")
        if self.head_dim > MAX_HEAD_DIM:
            raise ValueError(f"head dim {self.head_dim} exceeds {MAX_HEAD_DIM}")
        grans = {self.q.granularity, self.k.granularity, self.v.granularity}
        if len(grans) != 1:
            raise ValueError("q, k and v must share a granularity")
        verdict = validate_fused_granularity(self.granularity)
        if not verdict:
            raise GranularityError(verdict)

    @property
    def granularity(self) -> Granularity:
        return self.q.granularity

    @property
    def head_dim(self) -> int:
        return self.q.shape[-1]

    @property
    def seq_len(self) -> int:
        return self.k.shape[-2]

    @classmethod
    def from_real(cls, q, k, v, granularity=Granularity.PER_TENSOR) -> "AttentionInputs":
        g = Granularity.parse(granularity)
        verdict = validate_fused_granularity(g)
        if not verdict:
            raise GranularityError(verdict)
        return cls(quantize_like(q, 8, g), quantize_like(k, 8, g), quantize_like(v, 8, g))

    def exp_scale(self):
        """``s_Q * s_K / sqrt(d) * log2(e)``, one value per scale slice."""
        return self.q.scales * self.k.scales / math.sqrt(self.head_dim) * LOG2E

    def heads(self):
        """Yield ``(index, q, k, v)`` groups that share a single scale."""
        if self.granularity is Granularity.PER_TENSOR or self.q.data.ndim < 3:
            yield None, _as_scalar(self.q), _as_scalar(self.k), _as_scalar(self.v)
            return
        for h in range(self.q.shape[-3]):
            yield h, *(_head(t, h) for t in (self.q, self.k, self.v))


def _as_scalar(t: QuantizedTensor) -> QuantizedTensor:
    return QuantizedTensor(t.data, t.bit_width, t.scales.reshape(()), Granularity.PER_TENSOR)


def _head(t: QuantizedTensor, h: int) -> QuantizedTensor:
    return QuantizedTensor(t.data[..., h, :, :], t.bit_width, t.scales[h], Granularity.PER_TENSOR)


@dataclass(frozen=True)
class KernelParams:
    """Launch constants derived once from the combined exp scale."""

    exp: ShiftExpParams
    p_requant: FixedPointMultiplier
    release: FixedPointMultiplier
    reciprocal: FixedPointMultiplier | None = None
    mode: str = "release"

    @classmethod
    def from_scale(cls, s: float, mode: str = "release") -> "KernelParams":
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        exp = ShiftExpParams.from_scale(float(s))
        return cls(
            exp=exp,
            p_requant=make_multiplier(exp.s, P_SCALE, 8),
            release=release_multiplier(exp.s),
            reciprocal=reciprocal_multiplier(exp.s) if mode == "accumulate" else None,
            mode=mode,
        )


@dataclass(frozen=True)
class KernelState:
    """Running max ``m``, denominator ``l`` and numerator ``o`` after ``j`` tiles."""

    m: np.ndarray
    l: np.ndarray
    o: np.ndarray
    j: int = 0


def init_state(batch_shape, rows: int, d: int, mode: str = "release") -> KernelState:
    acc = np.int32 if mode == "release" else np.int64
    shape = tuple(batch_shape) + (rows,)
    return KernelState(
        m=np.full(shape, SCORE_FLOOR, dtype=np.int32),
        l=np.zeros(shape, dtype=acc),
        o=np.zeros(shape + (d,), dtype=acc),
    )


def _transpose(t: QuantizedTensor) -> QuantizedTensor:
    return QuantizedTensor(np.swapaxes(t.data, -1, -2), t.bit_width, t.scales, t.granularity)


def process_tile(state: KernelState, q_i: QuantizedTensor, k_j: QuantizedTensor,
                 v_j: QuantizedTensor, params: KernelParams, audit=None) -> KernelState:
    """One inner-loop step; returns the updated state and leaves ``state`` untouched."""
    s = int_matmul(q_i, _transpose(k_j), audit).data
    m_new = _ops.maximum(state.m, row_max(s, audit), audit)
    alpha, _, _ = shift_exp2(_ops.sub(state.m, m_new, audit), params.exp, audit=audit)
    p_tiled, _, _ = shift_exp2(_ops.sub(s, m_new[..., None], audit), params.exp, audit=audit)
    p = requantize(p_tiled, params.p_requant, 8, audit)
    p_sum = row_sum(p, audit)
    pv = int_matmul(QuantizedTensor(p, 8, P_SCALE), v_j, audit).data
    try:
        if params.mode == "release":
            l = _ops.add(scale_release(state.l, alpha, params.release, audit), p_sum, audit)
            o = _ops.add(scale_release(state.o, alpha, params.release, audit), pv, audit)
            l, o = _narrow(l, state.j), _narrow(o, state.j)
        else:
            l = scale_accumulate(state.l, alpha, p_sum, params.reciprocal, audit=audit)
            o = scale_accumulate(state.o, alpha, pv, params.reciprocal, audit=audit)
    except AccumulatorOverflow as exc:
        exc.tile = state.j
        raise
    return KernelState(m=m_new.astype(np.int32), l=l, o=o, j=state.j + 1)


def _narrow(x, j):
    if x.size and (int(x.max()) > np.iinfo(np.int32).max or int(x.min()) < np.iinfo(np.int32).min):
        exc = AccumulatorOverflow("int32 accumulator overflow after tile addition", 32)
        exc.tile = j
        raise exc
    return x.astype(np.int32)


def normalize(o, l, saturate: bool = False, audit=None) -> np.ndarray:
    """Row-wise ``floor(o / l)`` as int8.

    With the release path ``|o| <= 127 * l`` row-wise, so the quotient is in
    range without saturation; ``saturate`` is for the accumulation variant.
    """
    o = np.asarray(o)
    l = np.asarray(l)
    if l.size and int(l.min()) <= 0:
        raise KernelInvariantError("non-positive softmax denominator")
    out = _ops.floordiv(o, l[..., None], audit)
    if saturate:
        out = _ops.clip(out, -128, 127, audit)
    elif out.size and (int(out.min()) < -128 or int(out.max()) > 127):
        raise KernelInvariantError("normalized output left the int8 range")
    return out.astype(np.int8)


def _forward_single(q, k, v, cfg: TileConfig, params: KernelParams, audit=None) -> np.ndarray:
    n_q, n_k, d = q.shape[-2], k.shape[-2], v.shape[-1]
    batch = q.shape[:-2]
    out = np.empty(batch + (n_q, d), dtype=np.int8)
    for rows in cfg.row_slices(n_q):
        q_i = QuantizedTensor(q.data[..., rows, :], 8, q.scales)
        state = init_state(batch, rows.stop - rows.start, d, params.mode)
        for cols in cfg.col_slices(n_k):
            k_j = QuantizedTensor(k.data[..., cols, :], 8, k.scales)
            v_j = QuantizedTensor(v.data[..., cols, :], 8, v.scales)
            state = process_tile(state, q_i, k_j, v_j, params, audit)
        out[..., rows, :] = normalize(state.o, state.l, saturate=params.mode != "release", audit=audit)
    return out


def _run_heads(inp: AttentionInputs, body):
    out = np.empty(inp.q.shape[:-1] + (inp.v.shape[-1],), dtype=np.int8)
    for h, q, k, v in inp.heads():
        s = float(q.scales * k.scales / math.sqrt(inp.head_dim) * LOG2E)
        res = body(q, k, v, s)
        if h is None:
            out[...] = res
        else:
            out[..., h, :, :] = res
    o = QuantizedTensor(out, 8, inp.v.scales, inp.granularity)
    return o, np.array(inp.v.scales)


def qflash_forward(inp: AttentionInputs, cfg: TileConfig | None = None, mode: str = "release", audit=None):
    """Integer-only fused attention.

    Returns ``(O, s_O)``: the int8 output tensor and its scale, which is the
    scale of V.  ``mode="accumulate"`` swaps the scale-release update for
    scale accumulation and is only meant for the comparison experiment.
    """
    cfg = cfg or TileConfig()
    return _run_heads(
        inp, lambda q, k, v, s: _forward_single(q, k, v, cfg, KernelParams.from_scale(s, mode), audit)
    )


def untiled_forward(inp: AttentionInputs, audit=None):
    """The same integer pipeline without tiling or running-state rescaling."""

    def body(q, k, v, s):
        params = KernelParams.from_scale(s)
        scores = int_matmul(q, _transpose(k), audit).data
        m = row_max(scores, audit)
        p_tiled, _, _ = shift_exp2(_ops.sub(scores, m[..., None], audit), params.exp, audit=audit)
        p = requantize(p_tiled, params.p_requant, 8, audit)
        pv = int_matmul(QuantizedTensor(p, 8, P_SCALE), v, audit).data
        return normalize(pv, row_sum(p, audit), audit=audit)

    return _run_heads(inp, body)
