"""Integer-only fused attention with fixed-point softmax, plus FP oracles and error metrics."""

from .fixed_point import (
    AccumulatorOverflow,
    FixedPointMultiplier,
    ShiftExpParams,
    ShiftExpTrace,
    make_multiplier,
    quotient_div,
    quotient_mulshift,
    requantize,
    scale_accumulate,
    scale_release,
    shift_exp2,
)
from .int_tensor import (
    Granularity,
    QuantizedTensor,
    compute_scale,
    dequantize,
    int_matmul,
    quantize,
    row_max,
    row_sum,
    validate_fused_granularity,
)
from .estimator import QFlashAttention, SymmetricQuantizer
from .kernel import (
    AttentionInputs,
    GranularityError,
    KernelState,
    normalize,
    process_tile,
    qflash_forward,
    untiled_forward,
)
from .metrics import ErrorReport, OpAudit, audited_run, mse, sqnr
from .reference import exp2_oracle, online_softmax_attention_fp, softmax_attention_fp
from .tiling import TileConfig

__version__ = "0.1.0"
