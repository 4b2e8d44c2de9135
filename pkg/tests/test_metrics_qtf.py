import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qflash import qtf
from qflash.int_tensor import QuantizedTensor, quantize_like
from qflash.metrics import SQNR_EXACT, ErrorReport, OpAudit, audited_run, mse, sqnr


def test_sqnr_examples():
    assert sqnr([1.0, 2.0], [1.0, 2.0]) == SQNR_EXACT
    assert sqnr([1.0, 1.0], [1.05, 0.95]) == pytest.approx(26.0206, abs=1e-4)
    with pytest.raises(ValueError):
        sqnr([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        sqnr([1.0], [1.0, 2.0])


@pytest.mark.parametrize("eps", [1e-1, 1e-3, 1e-6])
def test_sqnr_relative_perturbation(eps):
    rng = np.random.default_rng(0)
    x = rng.normal(size=1000)
    assert sqnr(x, x * (1 + eps)) == pytest.approx(-20 * math.log10(eps), abs=1e-6)


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([0.0, 0.0], [1.0, -1.0]) == 1.0


def test_error_report():
    rep = ErrorReport.compare(np.ones((2, 2)), np.array([[1.0, 1.5], [1.0, 1.0]]))
    assert rep.max_abs_err == 0.5 and rep.num_elements == 4
    assert rep.mse == pytest.approx(0.0625)
    assert ErrorReport.compare(np.ones(3), np.ones(3)).to_dict()["sqnr_db"] == "inf"


def test_op_audit():
    audit = OpAudit()
    audit.count("int_mul", 3)
    audit.count("int_add")
    assert audit.integer_only
    assert audit.to_dict() == {"int_mul": 3, "int_add": 1, "int_shift": 0, "int_div": 0, "float_ops": 0}
    with pytest.raises(KeyError):
        audit.count("fma")

    def fn(x, audit):
        audit.count("float_ops", x)
        return x

    result, a = audited_run(fn, 5)
    assert result == 5 and a.float_ops == 5 and not a.integer_only


@given(hnp.arrays(st.sampled_from([np.int8, np.int32, np.float64]), hnp.array_shapes(max_dims=4, max_side=5)),
       st.lists(st.floats(1e-9, 1e9), max_size=4))
def test_qtf_round_trip(array, scales):
    data, got_scales = qtf.decode(qtf.encode(array, scales))
    assert data.dtype == array.dtype and data.shape == array.shape
    np.testing.assert_array_equal(data, array)
    np.testing.assert_array_equal(got_scales, scales)


def test_qtf_header_layout():
    buf = qtf.encode(np.array([[1, -2, 3]], dtype=np.int8), [0.5])
    assert buf[:4] == b"QTF1"
    assert buf[4] == 1 and buf[5] == 2
    assert int.from_bytes(buf[6:10], "little") == 1 and int.from_bytes(buf[10:14], "little") == 3
    assert int.from_bytes(buf[14:22], "little") == 1
    assert len(buf) == 22 + 8 + 3


def test_qtf_quantized_file_round_trip(tmp_path):
    t = quantize_like(np.random.default_rng(1).normal(size=(2, 3, 4)), 8, "per-head")
    path = tmp_path / "t.qtf"
    qtf.save_quantized(path, t)
    back = qtf.load_quantized(path, "per-head")
    np.testing.assert_array_equal(back.data, t.data)
    np.testing.assert_array_equal(back.scales, t.scales)
    acc = QuantizedTensor(np.array([1 << 20], dtype=np.int32), 32, 0.25)
    qtf.save_quantized(path, acc)
    assert qtf.load_quantized(path).bit_width == 32


def test_qtf_errors(tmp_path):
    good = qtf.encode(np.arange(6, dtype=np.int32).reshape(2, 3), [1.0])
    for bad in (b"QTF2" + good[4:], good[:5], good[:-1], good + b"\0", good[:4] + b"\x07" + good[5:],
                good[:16]):
        with pytest.raises(qtf.QTFError):
            qtf.decode(bad)
    with pytest.raises(qtf.QTFError):
        qtf.encode(np.zeros(2, dtype=np.int16))
    path = tmp_path / "f.qtf"
    qtf.save(path, np.zeros(2))
    with pytest.raises(qtf.QTFError):
        qtf.load_quantized(path)
