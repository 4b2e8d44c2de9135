"""Error metrics against a floating-point reference and the op-count audit."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

#: value reported for SQNR when the test tensor matches the reference exactly
SQNR_EXACT = math.inf


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    return ref, test


def sqnr(ref, test) -> float:
    """``10 log10(sum ref^2 / sum (ref - test)^2)`` in dB; ``inf`` for zero noise."""
    ref, test = _pair(ref, test)
    signal = float(np.sum(ref * ref))
    if signal == 0.0:
        raise ValueError("SQNR undefined for an all-zero reference")
    diff = ref - test
    noise = float(np.sum(diff * diff))
    if noise == 0.0:
        return SQNR_EXACT
    return 10.0 * math.log10(signal / noise)


def mse(ref, test) -> float:
    ref, test = _pair(ref, test)
    diff = ref - test
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class ErrorReport:
    sqnr_db: float
    mse: float
    max_abs_err: float
    num_elements: int

    @classmethod
    def compare(cls, ref, test) -> "ErrorReport":
        ref, test = _pair(ref, test)
        return cls(
            sqnr_db=sqnr(ref, test),
            mse=mse(ref, test),
            max_abs_err=float(np.max(np.abs(ref - test))) if ref.size else 0.0,
            num_elements=int(ref.size),
        )

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["sqnr_db"]):
            d["sqnr_db"] = "inf"
        return d


@dataclass
class OpAudit:
    """Per-invocation tally of arithmetic executed, by instruction class."""

    int_mul: int = 0
    int_add: int = 0
    int_shift: int = 0
    int_div: int = 0
    float_ops: int = 0
    _kinds: tuple = field(default=("int_mul", "int_add", "int_shift", "int_div", "float_ops"), init=False, repr=False)

    def count(self, kind: str, n: int = 1):
        if kind not in self._kinds:
            raise KeyError(kind)
        setattr(self, kind, getattr(self, kind) + int(n))

    @property
    def integer_only(self) -> bool:
        return self.float_ops == 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self._kinds}


def audited_run(fn, *args, **kwargs):
    """Call ``fn(*args, audit=OpAudit(), **kwargs)``; return ``(result, audit)``."""
    audit = OpAudit()
    result = fn(*args, audit=audit, **kwargs)
    return result, audit
