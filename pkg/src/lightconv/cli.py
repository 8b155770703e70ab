"""Command-line interface.

Subcommands (exit 0 on success, 1 on operational errors, 2 on usage errors):

    run       --graph G.json --input in.ltb --output out.ltb [--weights DIR]
    analyze   --graph G.json [--format json|table] [--weights DIR]
    gradcheck --block KIND --shape n,c,h,w --seed S [--tol 1e-5]
              [--eps 1e-6] [--gate-mode soft|hard]
    eval      --detections det.csv --ground-truth gt.csv
              [--iou-thr 0.5] [--conf-thr 0.25]

Reports go to standard output as JSON unless ``--format table``.
"""

import argparse
import json
import sys

from .blocks import CHECKABLE_KINDS, make_block
from .errors import FormatError, GraphError, ShapeError
from .gradcheck import check_module
from .graph import analyze_graph, load_graph, run_graph
from .ltb import read_tensor, write_tensor
from .metrics import read_detections_csv, read_ground_truth_csv, summarize


def _parse_shape(text: str) -> tuple[int, int, int, int]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"shape must be n,c,h,w, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape entries must be integers, got {text!r}")
    if any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"shape entries must be positive, got {text!r}")
    return dims


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lightconv",
        description="Lightweight convolution block runtime, cost analyzer, "
                    "gradient checker, and detection evaluator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a block graph on an LTB1 tensor")
    p_run.add_argument("--graph", required=True)
    p_run.add_argument("--input", required=True)
    p_run.add_argument("--output", required=True)
    p_run.add_argument("--weights", default=None, help="directory of <node>.<group>.ltb overrides")

    p_an = sub.add_parser("analyze", help="exact per-node parameter/MAC report")
    p_an.add_argument("--graph", required=True)
    p_an.add_argument("--format", choices=("json", "table"), default="json")
    p_an.add_argument("--weights", default=None)

    p_gc = sub.add_parser("gradcheck", help="central-difference check of one block")
    p_gc.add_argument("--block", required=True, choices=sorted(CHECKABLE_KINDS))
    p_gc.add_argument("--shape", required=True, type=_parse_shape, metavar="n,c,h,w")
    p_gc.add_argument("--seed", required=True, type=int)
    p_gc.add_argument("--tol", type=float, default=1e-5)
    p_gc.add_argument("--eps", type=float, default=1e-6)
    p_gc.add_argument("--gate-mode", choices=("soft", "hard"), default="soft",
                      help="gate mode for sru/scconv (hard reports unsupported-mode)")

    p_ev = sub.add_parser("eval", help="detection metrics from CSV files")
    p_ev.add_argument("--detections", required=True)
    p_ev.add_argument("--ground-truth", required=True)
    p_ev.add_argument("--iou-thr", type=float, default=0.5)
    p_ev.add_argument("--conf-thr", type=float, default=0.25)

    return parser


def _cmd_run(args) -> int:
    graph = load_graph(args.graph)
    tensor = read_tensor(args.input)
    out = run_graph(graph, tensor, weights_dir=args.weights)
    write_tensor(args.output, out)
    print(json.dumps({
        "graph": args.graph,
        "input_shape": list(tensor.shape),
        "output_shape": list(out.shape),
        "output": args.output,
    }, indent=2))
    return 0


def _cmd_analyze(args) -> int:
    graph = load_graph(args.graph)
    report = analyze_graph(graph, weights_dir=args.weights)
    if args.format == "table":
        print(report.to_table())
    else:
        print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_gradcheck(args) -> int:
    params = {}
    if args.block in ("sru", "scconv"):
        params["gate_mode"] = args.gate_mode
    block = make_block(args.block, [args.shape], params, seed=args.seed)
    report = check_module(block, args.shape, seed=args.seed,
                          tolerance=args.tol, epsilon=args.eps)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_eval(args) -> int:
    detections = read_detections_csv(args.detections)
    ground_truths = read_ground_truth_csv(args.ground_truth)
    report = summarize(detections, ground_truths,
                       iou_threshold=args.iou_thr,
                       confidence_threshold=args.conf_thr)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "analyze": _cmd_analyze,
    "gradcheck": _cmd_gradcheck,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GraphError, FormatError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
