"""``qflash`` command line.

Exit status: 0 on success, 2 when the request is rejected by validation
(unknown workload, per-token granularity, bad arguments), 1 on any fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import qtf
from .fixed_point import AccumulatorOverflow
from .harness import (
    ExperimentSpec,
    catalog,
    compare_scaling,
    dumps_report,
    exp_error_sweep,
    gen_inputs,
    rows_to_csv,
    run_experiment,
    summarize_exp_sweep,
    sweep_to_csv,
)
from .int_tensor import Granularity
from .kernel import GranularityError, KernelInvariantError
from .reference import softmax_attention_fp
from .tiling import TileConfig

log = logging.getLogger("qflash")

EXIT_OK, EXIT_FAULT, EXIT_REJECTED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_REJECTED, f"{self.prog}: error: {message}\n")


def _add_spec_args(p, with_tiles=True):
    p.add_argument("--workload", default="A2", help="catalog id A1..A7 (default: A2)")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--granularity", default="per-tensor", choices=[g.value for g in Granularity])
    p.add_argument("--mean", type=float, default=0.0, help="input mean (default: 0)")
    p.add_argument("--std", type=float, default=0.5, help="input std (default: 0.5)")
    p.add_argument("--tokens", type=int, help="override the workload's context length N")
    p.add_argument("--heads", type=int, help="override the workload's head count")
    p.add_argument("--dim", type=int, help="override the workload's head dimension")
    if with_tiles:
        p.add_argument("--tile-br", type=int, default=64)
        p.add_argument("--tile-bc", type=int, default=64)


def _spec(args) -> ExperimentSpec:
    tile = TileConfig(getattr(args, "tile_br", 64), getattr(args, "tile_bc", 64))
    return ExperimentSpec(
        workload=args.workload,
        batch=args.batch,
        seed=args.seed,
        tile=tile,
        granularity=args.granularity,
        mean=args.mean,
        std=args.std,
        tokens=args.tokens,
        heads=args.heads,
        dim=args.dim,
    )


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run(args):
    report, out = run_experiment(_spec(args), timestamp=not args.no_timestamp)
    _write(args.out, dumps_report(report))
    if report["status"] == "rejected":
        print(f"rejected: {report['granularity_check']['reason']}", file=sys.stderr)
        return EXIT_REJECTED
    if args.out_tensor:
        qtf.save_quantized(args.out_tensor, out)
    return EXIT_OK


def cmd_compare_scaling(args):
    tiles = [int(t) for t in args.tiles.split(",") if t.strip()]
    rows = compare_scaling(_spec(args), tiles)
    if args.out and args.out.endswith(".json"):
        _write(args.out, json.dumps(rows, indent=2) + "\n")
    else:
        _write(args.out, rows_to_csv(rows))
    return EXIT_OK


def cmd_exp_error(args):
    sweep = exp_error_sweep(args.scale, args.min, args.max, args.stride)
    _write(args.out, sweep_to_csv(sweep))
    print(json.dumps(summarize_exp_sweep(sweep)), file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args):
    q, k, v = gen_inputs(_spec(args))
    qtf.save(args.out, softmax_attention_fp(q, k, v))
    return EXIT_OK


def cmd_catalog(args):
    header = f"{'id':<4} {'source':<18} {'#win':>5} {'H':>4} {'N':>5} {'D':>4}"
    print(header)
    for w in catalog():
        print(f"{w.id:<4} {w.source:<18} {w.windows:>5} {w.heads:>4} {w.n:>5} {w.d:>4}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="qflash", description="Integer-only fused attention harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the fused kernel on a workload and report SQNR/MSE")
    _add_spec_args(p)
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--out-tensor", help="write the int8 output as a QTF1 file")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare-scaling", help="scale release vs scale accumulation over tile counts")
    _add_spec_args(p)
    p.add_argument("--tiles", default="1,2,4,8,16,32,64")
    p.add_argument("--out", help="CSV (or .json) path (default: stdout)")
    p.set_defaults(func=cmd_compare_scaling)

    p = sub.add_parser("exp-error", help="ShiftExp2 error sweep against exact exp2")
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--min", type=int, default=-(1 << 21))
    p.add_argument("--max", type=int, default=0)
    p.add_argument("--stride", type=int, default=97)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_exp_error)

    p = sub.add_parser("oracle", help="write the FP64 oracle output as QTF1")
    _add_spec_args(p, with_tiles=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("catalog", help="list the workload catalog")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except GranularityError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (KeyError, ValueError) as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (AccumulatorOverflow, KernelInvariantError, OSError) as exc:
        log.error("fault: %s", exc)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
