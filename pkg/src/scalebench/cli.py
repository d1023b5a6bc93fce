"""``scalebench`` command line.

Exit codes: 0 on success, 1 on a usage error, 2 when a stage fails.
Log verbosity comes from ``SCALEBENCH_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bench import read_records, write_records
from .errors import StageError
from .pipeline import ARCH_CHOICES, LABEL_SOURCES, analyze_stage, bench_stage, expand_archs, run_pipeline, shifts_stage
from .report import emit_report
from .scaling import write_fit_outputs

EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2
LOG_ENV = "SCALEBENCH_LOG_LEVEL"

log = logging.getLogger("scalebench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _lengths(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid length list {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("lengths must be positive integers")
    return sorted(values)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scalebench", description="Transformer vs. selective state-space scaling benchmarks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    arch = dict(choices=[*ARCH_CHOICES, "both"], default="both")
    model = dict(choices=["paper", "mini"], default="mini")

    b = sub.add_parser("bench", help="measure peak memory and latency per sequence length")
    b.add_argument("--arch", **arch)
    b.add_argument("--corpus", required=True, type=Path)
    b.add_argument("--lengths", type=_lengths, default=[128, 256, 512, 1024])
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--budget-gb", type=float, default=16.0)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--config", **model)
    b.add_argument("--out", required=True, type=Path)

    f = sub.add_parser("fit", help="fit cost curves, ratios and crossovers")
    f.add_argument("--records", required=True, type=Path)
    f.add_argument("--out-dir", required=True, type=Path)

    a = sub.add_parser("analyze", help="hidden-state, attention and context metrics")
    a.add_argument("--arch", **arch)
    a.add_argument("--corpus", required=True, type=Path)
    a.add_argument("--length", type=int, default=256)
    a.add_argument("--config", **model)
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--window", type=int, default=50)
    a.add_argument("--probes", type=int, default=5)
    a.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("shifts", help="segment shift scores with ROC/F1 evaluation")
    s.add_argument("--corpus", type=Path)
    s.add_argument("--arch", **arch)
    s.add_argument("--segments", type=int, default=4)
    s.add_argument("--label-source", choices=LABEL_SOURCES, default="self-percentile")
    s.add_argument("--labels", type=Path)
    s.add_argument("--length", type=int, default=None)
    s.add_argument("--sequences", type=int, default=4, help="synthetic sequence count")
    s.add_argument("--config", **model)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True, type=Path)

    pl = sub.add_parser("pipeline", help="run bench, fit, analyze and shifts from a config file")
    pl.add_argument("--config", required=True, type=Path)
    pl.add_argument("--out", required=True, type=Path)

    r = sub.add_parser("report", help="render CSV tables and SVG plots from a pipeline directory")
    r.add_argument("--in", dest="in_dir", required=True, type=Path)
    r.add_argument("--out", type=Path, default=None)
    return p


def _check_usage(parser, args) -> None:
    if args.command == "shifts":
        if args.label_source == "file" and args.labels is None:
            parser.error("--label-source file requires --labels")
        if args.label_source != "synthetic" and args.corpus is None:
            parser.error("--corpus is required unless --label-source synthetic")
    if args.command == "bench" and (args.runs < 1 or args.warmup < 0):
        parser.error("--runs must be >= 1 and --warmup >= 0")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")


def _dispatch(args, argv) -> None:
    cmd = args.command
    if cmd == "bench":
        records = bench_stage(
            expand_archs(args.arch), args.config, args.corpus, args.lengths,
            args.runs, args.warmup, args.budget_gb, args.seed,
        )  # fmt: skip
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_records(args.out, records)
    elif cmd == "fit":
        write_fit_outputs(read_records(args.records), args.out_dir)
    elif cmd == "analyze":
        _write_json(
            args.out,
            analyze_stage(expand_archs(args.arch), args.config, args.corpus, args.length, args.seed, args.window, args.probes),
        )
    elif cmd == "shifts":
        _write_json(
            args.out,
            shifts_stage(
                expand_archs(args.arch), args.config, args.corpus, args.segments, args.label_source,
                args.labels, args.length, args.seed, args.sequences,
            ),
        )  # fmt: skip
    elif cmd == "pipeline":
        run_pipeline(args.config, args.out, argv)
    elif cmd == "report":
        emit_report(args.in_dir, args.out)


def configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_usage(parser, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        _dispatch(args, ["scalebench", *argv])
    except StageError as exc:
        print(f"scalebench: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - any failure inside a stage
        log.debug("stage failure", exc_info=True)
        print(f"scalebench: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
