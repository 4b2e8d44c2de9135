"""scikit-learn style front ends for the quantizer and the fused kernel."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .int_tensor import (
    Granularity,
    QuantizedTensor,
    compute_scale,
    dequantize,
    quantize,
    validate_fused_granularity,
)
from .kernel import AttentionInputs, GranularityError, qflash_forward
from .tiling import TileConfig


def _check_tensor(x, name="X"):
    x = check_array(x, allow_nd=True, dtype=np.float64, ensure_all_finite=True, ensure_2d=True,
                    input_name=name)
    if x.ndim > 4:
        raise ValueError(f"{name} has rank {x.ndim}; at most 4 is supported")
    return x


class SymmetricQuantizer(TransformerMixin, BaseEstimator):
    """Max-abs symmetric quantizer.

    ``fit`` records ``scales_`` from calibration data; ``transform`` maps
    real inputs onto the integer grid with those scales (saturating), and
    ``inverse_transform`` maps integers back.
    """

    def __init__(self, bits=8, granularity="per-tensor"):
        self.bits = bits
        self.granularity = granularity

    def fit(self, X, y=None):
        X = _check_tensor(X)
        self.granularity_ = Granularity.parse(self.granularity)
        self.scales_ = compute_scale(X, self.bits, self.granularity_)
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "scales_")
        return self.quantize(X).data

    def quantize(self, X) -> QuantizedTensor:
        check_is_fitted(self, "scales_")
        X = _check_tensor(X)
        return quantize(X, self.scales_, self.bits, self.granularity_)

    def inverse_transform(self, X):
        check_is_fitted(self, "scales_")
        return dequantize(QuantizedTensor(np.asarray(X), self.bits, self.scales_, self.granularity_))


class QFlashAttention(BaseEstimator):
    """Integer-only attention with scikit-learn conventions.

    ``fit(Q, K, V)`` calibrates static int8 scales for the three inputs.
    ``predict`` quantizes new inputs with those scales, runs the fused
    kernel and returns real-valued outputs; ``predict_quantized`` returns
    the int8 tensor and its scale instead.  Without ``K``/``V`` the
    estimator does self-attention on ``Q``.
    """

    def __init__(self, block_rows=64, block_cols=64, granularity="per-tensor", mode="release"):
        self.block_rows = block_rows
        self.block_cols = block_cols
        self.granularity = granularity
        self.mode = mode

    def fit(self, Q, K=None, V=None, y=None):
        g = Granularity.parse(self.granularity)
        verdict = validate_fused_granularity(g)
        if not verdict:
            raise GranularityError(verdict)
        Q, K, V = self._inputs(Q, K, V)
        self.granularity_ = g
        self.quantizers_ = tuple(
            SymmetricQuantizer(8, g.value).fit(t) for t in (Q, K, V)
        )
        self.n_features_in_ = Q.shape[-1]
        return self

    def _inputs(self, Q, K, V):
        Q = _check_tensor(Q, "Q")
        K = Q if K is None else _check_tensor(K, "K")
        V = K if V is None else _check_tensor(V, "V")
        return Q, K, V

    def quantize_inputs(self, Q, K=None, V=None) -> AttentionInputs:
        check_is_fitted(self, "quantizers_")
        Q, K, V = self._inputs(Q, K, V)
        if Q.shape[-1] != self.n_features_in_:
            raise ValueError(f"Q has {Q.shape[-1]} channels, fitted with {self.n_features_in_}")
        return AttentionInputs(*(qz.quantize(t) for qz, t in zip(self.quantizers_, (Q, K, V))))

    def predict_quantized(self, Q, K=None, V=None, audit=None):
        inp = self.quantize_inputs(Q, K, V)
        return qflash_forward(inp, TileConfig(self.block_rows, self.block_cols), self.mode, audit)

    def predict(self, Q, K=None, V=None):
        out, _ = self.predict_quantized(Q, K, V)
        return dequantize(out)

    def fit_predict(self, Q, K=None, V=None):
        return self.fit(Q, K, V).predict(Q, K, V)
