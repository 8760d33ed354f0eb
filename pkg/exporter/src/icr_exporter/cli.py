"""Command line entry point: icr-export."""
from __future__ import annotations

import argparse
import sys

from .errors import ExporterError
from .export import ExportJob, export_attention


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icr-export",
        description="export per-query attention dumps from a transformers "
        "checkpoint, given layout JSON files",
    )
    parser.add_argument("--model", required=True, help="checkpoint path or hub id")
    parser.add_argument(
        "--layouts", required=True, nargs="+",
        help="*.layout.json files (calibration siblings are found next to them)",
    )
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--precision", choices=("float32", "float16"), default="float32")
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--row-sum-tol", type=float, default=1e-3,
        help="row-sum tolerance enforced before writing",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model_id=args.model,
        layout_paths=tuple(args.layouts),
        out_dir=args.out_dir,
        precision=args.precision,
        device=args.device,
        row_sum_tol=args.row_sum_tol,
    )
    try:
        report = export_attention(job)
    except ExporterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(
        f"exported {len(report.queries)} queries "
        f"({len(report.written)} files) to {args.out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
