"""Workload catalog, synthetic inputs and the experiments behind the CLI."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fixed_point import (
    AccumulatorOverflow,
    ShiftExpParams,
    quotient_div,
    quotient_mulshift,
    shift_exp2,
)
from .int_tensor import Granularity, compute_scale, dequantize, validate_fused_granularity
from .kernel import LOG2E, AttentionInputs, GranularityError, qflash_forward
from .metrics import ErrorReport, audited_run
from .reference import exp2_oracle, online_softmax_attention_fp, softmax_attention_fp
from .tiling import TileConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Workload:
    id: str
    source: str
    windows: int
    heads: int
    n: int
    d: int

    def shape(self, batch: int = 1) -> tuple[int, int, int, int]:
        """Input shape with windows folded into the batch axis."""
        return (self.windows * batch, self.heads, self.n, self.d)


_CATALOG = (
    Workload("A1", "ViT/DeiT-Tiny", 1, 3, 197, 64),
    Workload("A2", "ViT/DeiT-Small", 1, 6, 197, 64),
    Workload("A3", "ViT/DeiT-Base", 1, 12, 197, 64),
    Workload("A4", "Swin-T/S Stage-1", 64, 3, 49, 32),
    Workload("A5", "Swin-T/S Stage-2", 16, 6, 49, 32),
    Workload("A6", "Swin-T/S Stage-3", 4, 12, 49, 32),
    Workload("A7", "Swin-T/S Stage-4", 1, 24, 49, 32),
)


def catalog() -> list[Workload]:
    return list(_CATALOG)


def get_workload(workload_id: str) -> Workload:
    for w in _CATALOG:
        if w.id == workload_id.upper():
            return w
    raise KeyError(f"unknown workload {workload_id!r}; expected one of A1..A7")


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a (possibly reshaped) workload, seeded inputs and kernel settings.

    ``tokens``, ``heads`` and ``dim`` override the catalog shape, which is how
    micro-workloads (N=1) and long-sequence sweeps are described.
    """

    workload: str = "A2"
    batch: int = 1
    seed: int = 0
    tile: TileConfig = field(default_factory=TileConfig)
    granularity: Granularity = Granularity.PER_TENSOR
    mean: float = 0.0
    std: float = 0.5
    tokens: int | None = None
    heads: int | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.std < 0:
            raise ValueError("std must be >= 0")
        object.__setattr__(self, "granularity", Granularity.parse(self.granularity))

    def resolve(self) -> Workload:
        w = get_workload(self.workload)
        if self.tokens is None and self.heads is None and self.dim is None:
            return w
        return replace(
            w,
            id=f"{w.id}-custom",
            n=self.tokens or w.n,
            heads=self.heads or w.heads,
            d=self.dim or w.d,
        )

    def to_dict(self):
        d = asdict(self)
        d["granularity"] = self.granularity.value
        d["tile"] = {"block_rows": self.tile.block_rows, "block_cols": self.tile.block_cols}
        return d


def gen_inputs(spec: ExperimentSpec):
    """Seeded Gaussian Q, K, V of shape ``(windows * batch, heads, N, d)``."""
    shape = spec.resolve().shape(spec.batch)
    rng = np.random.default_rng(spec.seed)
    return tuple(rng.normal(spec.mean, spec.std, size=shape) for _ in range(3))


def _timestamp():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_experiment(spec: ExperimentSpec, timestamp: bool = True):
    """Quantize, run the fused kernel and both oracles; return ``(report, output)``.

    A rejected granularity yields a report with ``status == "rejected"`` and
    no output tensor.
    """
    w = spec.resolve()
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": spec.to_dict(),
        "workload": asdict(w),
    }
    verdict = validate_fused_granularity(spec.granularity)
    report["granularity_check"] = verdict.to_dict()
    if not verdict:
        report["status"] = "rejected"
    else:
        q, k, v = gen_inputs(spec)
        inp = AttentionInputs.from_real(q, k, v, spec.granularity)
        (out, s_out), audit = audited_run(qflash_forward, inp, spec.tile)
        exact = softmax_attention_fp(q, k, v)
        online = online_softmax_attention_fp(q, k, v, spec.tile)
        deq = dequantize(out)
        report.update(
            status="ok",
            error=ErrorReport.compare(exact, deq).to_dict(),
            error_vs_online_oracle=ErrorReport.compare(online, deq).to_dict(),
            oracle_max_disagreement=float(np.max(np.abs(exact - online))),
            output_scales=np.asarray(s_out).ravel().tolist(),
            op_audit=audit.to_dict(),
        )
    if timestamp:
        report["timestamp"] = _timestamp()
    return report, (out if verdict else None)


def dumps_report(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def strip_timestamp(report):
    return {k: v for k, v in report.items() if k != "timestamp"}


def compare_scaling(spec: ExperimentSpec, tile_counts):
    """SQNR of scale release vs scale accumulation as the column-tile count grows.

    Each requested count sets ``block_cols = ceil(N / count)``; the row
    records the count actually realized.  Accumulation overflow is recorded
    instead of an SQNR value.
    """
    verdict = validate_fused_granularity(spec.granularity)
    if not verdict:
        raise GranularityError(verdict)
    q, k, v = gen_inputs(spec)
    n = q.shape[-2]
    inp = AttentionInputs.from_real(q, k, v, spec.granularity)
    exact = softmax_attention_fp(q, k, v)
    rows = []
    for count in tile_counts:
        cfg = TileConfig.for_col_tiles(n, int(count), spec.tile.block_rows)
        out, _ = qflash_forward(inp, cfg, mode="release")
        row = {
            "tile_count": int(count),
            "col_tiles": cfg.col_tiles(n),
            "block_cols": cfg.block_cols,
            "release_sqnr_db": ErrorReport.compare(exact, dequantize(out)).sqnr_db,
        }
        try:
            acc_out, _ = qflash_forward(inp, cfg, mode="accumulate")
            row.update(
                accumulate_sqnr_db=ErrorReport.compare(exact, dequantize(acc_out)).sqnr_db,
                accumulate_overflow=False,
                overflow_tile="",
            )
        except AccumulatorOverflow as exc:
            row.update(accumulate_sqnr_db="", accumulate_overflow=True, overflow_tile=exc.tile + 1)
        rows.append(row)
    return rows


def exp_error_sweep(scale: float, lo: int = -(1 << 21), hi: int = 0, stride: int = 97):
    """Compare ShiftExp2 with exact ``2 ** (s * x)`` over ``x = hi, hi - stride, ..., >= lo``.

    Returns a dict of equal-length arrays, one entry per sampled input.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    if hi > 0 or lo > hi or stride < 1:
        raise ValueError("need lo <= hi <= 0 and stride >= 1")
    params = ShiftExpParams.from_scale(scale)
    x = np.arange(hi, lo - 1, -stride, dtype=np.int64)
    y, s_y, trace = shift_exp2(x, params)
    y_div, _, _ = shift_exp2(x, params, quotient="div")
    y_raw, _, _ = shift_exp2(x, params, quotient="mulshift-raw")
    q_div = quotient_div(x, params.s_inv)
    q_raw = quotient_mulshift(x, params, correct=False)
    exact = exp2_oracle(scale * x.astype(np.float64))
    approx = s_y * y.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(exact > 0, np.abs(approx - exact) / exact, np.inf)
    return {
        "x": x,
        "y": y,
        "approx": approx,
        "exact": exact,
        "rel_err": rel,
        "q": trace.q,
        "q_div": q_div,
        "q_raw": q_raw,
        "y_div": y_div,
        "y_raw": y_raw,
        "s_inv": np.full(x.shape, params.s_inv),
    }


def summarize_exp_sweep(sweep, min_output: int = 4):
    y = sweep["y"]
    s_inv = int(sweep["s_inv"][0]) if y.size else 0
    big = y >= min_output
    return {
        "samples": int(y.size),
        "s_inv": s_inv,
        "max_rel_err": float(sweep["rel_err"][big].max()) if big.any() else 0.0,
        "min_output": min_output,
        "out_of_range": int(np.count_nonzero((y < 0) | (y > s_inv))),
        "max_quotient_diff_raw": int(np.abs(sweep["q_raw"] - sweep["q_div"]).max()) if y.size else 0,
        "max_quotient_diff": int(np.abs(sweep["q"] - sweep["q_div"]).max()) if y.size else 0,
        "max_output_diff": int(np.abs(sweep["y"].astype(np.int64) - sweep["y_div"]).max()) if y.size else 0,
        "max_output_diff_raw": int(np.abs(sweep["y_raw"].astype(np.int64) - sweep["y_div"]).max()) if y.size else 0,
    }


def catalog_exp_scales(seed: int = 0, mean: float = 0.0, std: float = 0.5):
    """Per-tensor exp scale ``s_Q s_K / sqrt(d) log2(e)`` of each workload's synthetic inputs."""
    scales = {}
    for w in _CATALOG:
        q, k, _ = gen_inputs(ExperimentSpec(workload=w.id, seed=seed, mean=mean, std=std))
        s_q, s_k = float(compute_scale(q)), float(compute_scale(k))
        scales[w.id] = s_q * s_k / math.sqrt(w.d) * LOG2E
    return scales


def rows_to_csv(rows, columns=None) -> str:
    rows = list(rows)
    buf = io.StringIO()
    columns = columns or (list(rows[0]) if rows else [])
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _fmt(row[c]) for c in columns})
    return buf.getvalue()


def sweep_to_csv(sweep) -> str:
    cols = ["x", "y", "approx", "exact", "rel_err", "q", "q_div", "q_raw", "y_div", "y_raw"]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(cols + ["quotient_agree", "quotient_raw_within_1"])
    agree = sweep["q"] == sweep["q_div"]
    raw_ok = np.abs(sweep["q_raw"] - sweep["q_div"]) <= 1
    for i in range(sweep["x"].size):
        writer.writerow([_fmt(sweep[c][i]) for c in cols] + [int(agree[i]), int(raw_ok[i])])
    return out.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
