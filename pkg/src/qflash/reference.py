"""Double-precision attention oracles.

These are the ground truth for every SQNR/MSE figure.  They accept an
optional ``audit`` so the integer-only audit has a floating-point
counterpart to sanity-check against.
"""

from __future__ import annotations

import math

import numpy as np

from .tiling import TileConfig


def _check_qkv(q, k, v):
    q, k, v = (np.asarray(t, dtype=np.float64) for t in (q, k, v))
    if q.ndim < 2 or q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"incompatible shapes q={q.shape} k={k.shape} v={v.shape}")
    for t in (q, k, v):
        if not np.all(np.isfinite(t)):
            raise ValueError("oracle inputs must be finite")
    return q, k, v


def _flops(audit, n):
    if audit is not None:
        audit.count("float_ops", n)


def softmax_weights_fp(q, k, d=None):
    """Row-stochastic ``softmax(q k^T / sqrt(d))``."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    d = q.shape[-1] if d is None else d
    scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(d)
    scores = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    return w / w.sum(axis=-1, keepdims=True)


def softmax_attention_fp(q, k, v, d=None, audit=None):
    """Exact ``softmax(q k^T / sqrt(d)) v`` with max subtraction."""
    q, k, v = _check_qkv(q, k, v)
    w = softmax_weights_fp(q, k, d)
    n_scores = w.size
    _flops(audit, 2 * n_scores * q.shape[-1] + 5 * n_scores)
    out = w @ v
    _flops(audit, 2 * n_scores * v.shape[-1])
    return out


def online_softmax_attention_fp(q, k, v, cfg: TileConfig, d=None, audit=None):
    """Tiled attention with a running max and running denominator per row."""
    q, k, v = _check_qkv(q, k, v)
    d = q.shape[-1] if d is None else d
    inv_sqrt_d = 1.0 / math.sqrt(d)
    n_q, n_k = q.shape[-2], k.shape[-2]
    out = np.empty(q.shape[:-1] + (v.shape[-1],))
    for rows in cfg.row_slices(n_q):
        qi = q[..., rows, :]
        m = np.full(qi.shape[:-1], -np.inf)
        l = np.zeros(qi.shape[:-1])
        acc = np.zeros(qi.shape[:-1] + (v.shape[-1],))
        for cols in cfg.col_slices(n_k):
            s = qi @ np.swapaxes(k[..., cols, :], -1, -2) * inv_sqrt_d
            m_new = np.maximum(m, s.max(axis=-1))
            alpha = np.exp(m - m_new)
            p = np.exp(s - m_new[..., None])
            l = l * alpha + p.sum(axis=-1)
            acc = acc * alpha[..., None] + p @ v[..., cols, :]
            m = m_new
            _flops(audit, s.size * (2 * q.shape[-1] + 4) + acc.size * (2 * p.shape[-1] + 2))
        out[..., rows, :] = acc / l[..., None]
        _flops(audit, acc.size)
    return out


def exp2_oracle(x):
    """Exact ``2 ** x`` in double precision."""
    return np.exp2(np.asarray(x, dtype=np.float64))
