"""Command line entry points: run, tables, mask-figure, validate.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .masks import BlockLayout, build_causal_mask, build_sdag_mask, render_mask_figure
from .report import TABLE_STYLES, emit_tables, load_report

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        loaded = load_config(args.config)
        loaded.experiment.validate_files()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"config ok: {args.config}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    from .experiment import StageError, run_experiment

    try:
        loaded = load_config(args.config)
        loaded.experiment.validate_files()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        report = run_experiment(loaded)
    except StageError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = loaded.experiment.output_dir
    for mode, metrics in sorted(report.modes.items()):
        print(f"{mode}: acc={metrics['acc']:.4f} asr={metrics['asr']:.4f} n={metrics['n']}")
    print(f"report written to {out_dir}/report.json")
    return EXIT_OK


def _cmd_tables(args: argparse.Namespace) -> int:
    try:
        report = load_report(args.report)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out) if args.out else Path(args.report).parent
    try:
        paths = emit_tables(report, args.style, out_dir)
    except Exception as exc:
        print(f"table emission failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_mask_figure(args: argparse.Namespace) -> int:
    try:
        obj = json.loads(Path(args.layout).read_text(encoding="utf-8"))
        layout = BlockLayout.from_dict(obj)
        kind = obj.get("kind", "sdag")
        if kind == "sdag":
            mask = build_sdag_mask(layout)
        elif kind == "causal":
            mask = build_causal_mask(layout.total_len)
        else:
            raise ValueError(f"unknown mask kind {kind!r}")
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"invalid layout: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        render_mask_figure(mask, layout, args.out)
    except OSError as exc:
        print(f"cannot write figure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdaglab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config")
    run.set_defaults(fn=_cmd_run)

    tables = sub.add_parser("tables", help="render metric tables from a report")
    tables.add_argument("report")
    tables.add_argument("--style", choices=TABLE_STYLES, default="markdown")
    tables.add_argument("--out", default=None, help="output directory (default: report's)")
    tables.set_defaults(fn=_cmd_tables)

    figure = sub.add_parser("mask-figure", help="render a mask figure from a layout JSON")
    figure.add_argument("layout")
    figure.add_argument("out")
    figure.set_defaults(fn=_cmd_mask_figure)

    validate = sub.add_parser("validate", help="check a config without running it")
    validate.add_argument("config")
    validate.set_defaults(fn=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
