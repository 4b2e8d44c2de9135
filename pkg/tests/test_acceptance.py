"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line with the measured figures; the
lines are repeated in the pytest terminal summary.  Thresholds are the
stated ones and are not adjusted to make a criterion pass.
"""

import json
import time

import numpy as np

from qflash.cli import main
from qflash.harness import (
    ExperimentSpec,
    catalog,
    catalog_exp_scales,
    compare_scaling,
    exp_error_sweep,
    gen_inputs,
    run_experiment,
)
from qflash.int_tensor import dequantize
from qflash.kernel import AttentionInputs, qflash_forward, untiled_forward
from qflash.metrics import audited_run, mse, sqnr
from qflash.reference import softmax_attention_fp, softmax_weights_fp
from qflash.tiling import TileConfig

SWEEP = dict(lo=-(1 << 21), hi=0, stride=97)


def test_criterion_1_sqnr_fidelity(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for wid in ("A2", "A7"):
        sq, ms = [], []
        for seed in range(10):
            spec = ExperimentSpec(workload=wid, batch=8, seed=seed, std=0.5)
            q, k, v = gen_inputs(spec)
            out, _ = qflash_forward(AttentionInputs.from_real(q, k, v), spec.tile)
            ref = softmax_attention_fp(q, k, v)
            deq = dequantize(out)
            sq.append(sqnr(ref, deq))
            ms.append(mse(ref, deq))
        mean_sq, mean_ms = float(np.mean(sq)), float(np.mean(ms))
        ok &= mean_sq >= 28.0 and mean_ms <= 5e-3
        parts.append(f"{wid} mean SQNR {mean_sq:.2f} dB (>= 28), mean MSE {mean_ms:.2e} (<= 5e-3)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    verdict(1, "SQNR fidelity", ok, "; ".join(parts) + f"; {elapsed:.1f} s (< 60)")


def test_criterion_2_scale_release_stability(verdict):
    t0 = time.perf_counter()
    tiles = [1, 2, 4, 8, 16, 32, 64]
    rows = compare_scaling(ExperimentSpec(workload="A2", tokens=4096, heads=1, seed=0), tiles)
    rel = [r["release_sqnr_db"] for r in rows]
    spread = max(rel) - min(rel)
    last = rows[-1]
    if last["accumulate_overflow"]:
        acc_ok, acc_text = True, f"accumulate overflowed at tile {last['overflow_tile']}"
    else:
        gap = last["release_sqnr_db"] - last["accumulate_sqnr_db"]
        acc_ok, acc_text = gap > 15.0, f"accumulate trails by {gap:.2f} dB (> 15)"
    elapsed = time.perf_counter() - t0
    ok = spread < 5.0 and acc_ok and elapsed < 120
    verdict(2, "scale-release stability", ok,
            f"release SQNR spread {spread:.3f} dB (< 5) over T_c={tiles}; {acc_text} at T_c=64; "
            f"{elapsed:.1f} s (< 120)")


def test_criterion_3_shiftexp2_accuracy(verdict):
    t0 = time.perf_counter()
    worst, in_range = 0.0, True
    for s in catalog_exp_scales().values():
        sw = exp_error_sweep(s, **SWEEP)
        big = sw["y"] >= 4
        worst = max(worst, float(sw["rel_err"][big].max()))
        in_range &= bool(np.all((sw["y"] >= 0) & (sw["y"] <= sw["s_inv"])))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.08 and in_range and elapsed < 30
    verdict(3, "ShiftExp2 accuracy", ok,
            f"max rel err {worst:.4f} where y >= 4 (<= 0.08); outputs in [0, s_inv]: {in_range}; "
            f"{elapsed:.1f} s (< 30)")


def test_criterion_4_quotient_equivalence(verdict):
    t0 = time.perf_counter()
    q_diff = y_diff = 0
    for s in catalog_exp_scales().values():
        sw = exp_error_sweep(s, **SWEEP)
        q_diff = max(q_diff, int(np.abs(sw["q_raw"] - sw["q_div"]).max()))
        y_diff = max(y_diff, int(np.abs(sw["y_raw"].astype(np.int64) - sw["y_div"]).max()))
    elapsed = time.perf_counter() - t0
    ok = q_diff <= 1 and y_diff <= 1 and elapsed < 30
    verdict(4, "quotient equivalence", ok,
            f"max |q_mulshift - q_div| = {q_diff} (<= 1); max downstream y diff = {y_diff} (<= 1); "
            f"{elapsed:.1f} s (< 30)")


def test_criterion_5_integer_only_audit(verdict):
    t0 = time.perf_counter()
    counts = {}
    for w in catalog():
        q, k, v = gen_inputs(ExperimentSpec(workload=w.id))
        _, audit = audited_run(qflash_forward, AttentionInputs.from_real(q, k, v))
        counts[w.id] = audit.float_ops
    q, k, v = gen_inputs(ExperimentSpec(workload="A7"))
    _, oracle_audit = audited_run(softmax_attention_fp, q, k, v)
    elapsed = time.perf_counter() - t0
    ok = all(c == 0 for c in counts.values()) and oracle_audit.float_ops > 0 and elapsed < 10
    verdict(5, "integer-only audit", ok,
            f"kernel float_ops {counts}; oracle float_ops {oracle_audit.float_ops} (> 0); {elapsed:.1f} s (< 10)")


def test_criterion_6_single_tile_equivalence(verdict):
    t0 = time.perf_counter()
    spec = ExperimentSpec(workload="A2", batch=8, seed=0)
    inp = AttentionInputs.from_real(*gen_inputs(spec))
    n = inp.seq_len
    base, _ = untiled_forward(inp)
    single, _ = qflash_forward(inp, TileConfig(n, n))
    identical = single.data.tobytes() == base.data.tobytes()
    diffs = {}
    for bc in (8, 16, 32, 64):
        out, _ = qflash_forward(inp, TileConfig(64, bc))
        diffs[bc] = int(np.abs(out.data.astype(np.int16) - base.data).max())
    elapsed = time.perf_counter() - t0
    ok = identical and max(diffs.values()) <= 2 and elapsed < 30
    verdict(6, "single-tile equivalence", ok,
            f"B_r=B_c=N bit-identical: {identical}; max diff by B_c {diffs} (<= 2); {elapsed:.1f} s (< 30)")


def test_criterion_7_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    args = ["run", "--workload", "A2", "--seed", "42", "--no-timestamp"]
    for i in range(2):
        assert main(args + ["--out", str(tmp_path / f"r{i}.json"), "--out-tensor", str(tmp_path / f"o{i}.qtf")]) == 0
    same_json = (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()
    same_qtf = (tmp_path / "o0.qtf").read_bytes() == (tmp_path / "o1.qtf").read_bytes()
    elapsed = time.perf_counter() - t0
    verdict(7, "determinism", same_json and same_qtf and elapsed < 10,
            f"JSON identical: {same_json}; QTF1 identical: {same_qtf}; {elapsed:.1f} s (< 10)")


def test_criterion_8_trivial_identities(verdict):
    t0 = time.perf_counter()
    spec = ExperimentSpec(workload="A2", tokens=1, batch=8, seed=3)
    q, k, v = gen_inputs(spec)
    inp = AttentionInputs.from_real(q, k, v)
    out, _ = qflash_forward(inp)
    n1_exact = bool(np.array_equal(out.data, inp.v.data))

    q, k, v = gen_inputs(ExperimentSpec(workload="A7", seed=4))
    v = np.broadcast_to(np.linspace(-0.9, 0.9, v.shape[-1]), v.shape).copy()
    inp = AttentionInputs.from_real(q, k, v)
    out, _ = qflash_forward(inp, TileConfig(16, 16))
    const_diff = int(np.abs(out.data.astype(np.int16) - inp.v.data).max())

    w = softmax_weights_fp(*gen_inputs(ExperimentSpec(workload="A2", seed=5))[:2])
    row_err = float(np.abs(w.sum(axis=-1) - 1.0).max())
    elapsed = time.perf_counter() - t0
    ok = n1_exact and const_diff <= 1 and row_err <= 1e-12 and elapsed < 5
    verdict(8, "trivial identities", ok,
            f"N=1 equals quantized V: {n1_exact}; constant-V max diff {const_diff} (<= 1); "
            f"oracle row-sum error {row_err:.1e} (<= 1e-12); {elapsed:.1f} s (< 5)")


def test_criterion_9_granularity_gate(verdict, tmp_path, capsys):
    path = tmp_path / "tok.json"
    code = main(["run", "--workload", "A7", "--granularity", "per-token", "--out", str(path)])
    diag = json.loads(path.read_text())
    structured = diag["status"] == "rejected" and diag["granularity_check"]["ok"] is False \
        and bool(diag["granularity_check"]["reason"])
    statuses = {}
    for g in ("per-tensor", "per-head"):
        report, _ = run_experiment(ExperimentSpec(workload="A7", granularity=g), timestamp=False)
        statuses[g] = report["status"]
    capsys.readouterr()
    ok = code == 2 and structured and all(s == "ok" for s in statuses.values())
    verdict(9, "granularity gate", ok,
            f"per-token exit code {code} (== 2), structured diagnostic: {structured}; other granularities {statuses}")
