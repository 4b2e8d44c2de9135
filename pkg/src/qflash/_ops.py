"""Instrumented elementwise arithmetic for the integer kernel path.

Every arithmetic step executed by the fused kernel goes through one of these
helpers so that an optional audit object can tally it.  Operands with a
floating dtype are still evaluated but land in the ``float_ops`` counter,
which must stay at zero on the kernel path.
"""

import numpy as np


def _tally(audit, kind, *operands):
    if audit is None:
        return
    size = max(np.size(x) for x in operands)
    if any(np.asarray(x).dtype.kind == "f" for x in operands):
        audit.count("float_ops", size)
    else:
        audit.count(kind, size)


def mul(a, b, audit=None):
    _tally(audit, "int_mul", a, b)
    return np.multiply(a, b)


def add(a, b, audit=None):
    _tally(audit, "int_add", a, b)
    return np.add(a, b)


def sub(a, b, audit=None):
    _tally(audit, "int_add", a, b)
    return np.subtract(a, b)


def maximum(a, b, audit=None):
    # compares are tallied with adds; they share the ALU class
    _tally(audit, "int_add", a, b)
    return np.maximum(a, b)


def clip(a, lo, hi, audit=None):
    # two compares per element
    _tally(audit, "int_add", a)
    _tally(audit, "int_add", a)
    return np.clip(a, lo, hi)


def shr(a, b, audit=None):
    _tally(audit, "int_shift", a, b)
    return np.right_shift(a, b)


def floordiv(a, b, audit=None):
    _tally(audit, "int_div", a, b)
    return np.floor_divide(a, b)


def matmul(a, b, audit=None):
    """Batched ``a @ b`` counted as ``rows * cols * inner`` multiply-adds."""
    if audit is not None:
        inner = a.shape[-1]
        out_size = int(np.prod(np.broadcast_shapes(a.shape[:-2], b.shape[:-2]))) * a.shape[-2] * b.shape[-1]
        kind_mul, kind_add = "int_mul", "int_add"
        if a.dtype.kind == "f" or b.dtype.kind == "f":
            kind_mul = kind_add = "float_ops"
        audit.count(kind_mul, out_size * inner)
        audit.count(kind_add, out_size * inner)
    # einsum keeps integer inputs on its exact integer loops
    return np.einsum("...ik,...kj->...ij", a, b)


def reduce_max(a, axis=-1, audit=None):
    _tally(audit, "int_add", a)
    return np.max(a, axis=axis)


def reduce_sum(a, axis=-1, dtype=None, audit=None):
    _tally(audit, "int_add", a)
    return np.sum(a, axis=axis, dtype=dtype)
