"""Command line entry point.

Subcommands:

``prepare-data``     build datasets, partition, and stats from a config
``stats``            print corpus statistics as JSON
``train-central``    centralized baseline training
``train-federated``  federated training (FedAvg or queue-chained)
``compress-eval``    post-training quantization sweep
``report``           CSV + figures from one or more metric files

Every config-driven subcommand takes ``--config``, optional ``--seed``
(replaces the config's master seed), repeatable ``--override key=value``
(dotted paths, JSON-parsed values), and ``--out``.  When ``--out`` is
omitted the artifacts land in ``$FQS_OUT_DIR/<subcommand>`` (or
``./runs/<subcommand>``).  Exit status is 0 on success and 2 on any
configuration or data error, with a diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..errors import FedqsimError
from .config import load_config
from .experiments import (
    corpus_stats,
    run_compress_eval,
    run_prepare_data,
    run_train_central,
    run_train_federated,
)
from .report import emit_report


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON file")
    parser.add_argument(
        "--seed", type=int, default=None, help="replace the config's master seed"
    )
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field by dotted path (repeatable); "
        "values are parsed as JSON, falling back to plain strings",
    )


def _add_out_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedqsim",
        description="Deterministic simulator for federated recommender training",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare-data", help="build datasets, partition, and stats")
    _add_config_flags(p)
    _add_out_flag(p)

    p = sub.add_parser("stats", help="print corpus statistics as JSON")
    _add_config_flags(p)

    p = sub.add_parser("train-central", help="centralized baseline training")
    _add_config_flags(p)
    _add_out_flag(p)

    p = sub.add_parser("train-federated", help="federated training run")
    _add_config_flags(p)
    _add_out_flag(p)
    p.add_argument(
        "--checkpoint-every",
        type=int,
        default=0,
        metavar="N",
        help="save a checkpoint every N rounds (0 disables)",
    )
    p.add_argument(
        "--resume",
        action="store_true",
        help="resume from the latest checkpoint in the output directory",
    )

    p = sub.add_parser("compress-eval", help="post-training quantization sweep")
    _add_config_flags(p)
    _add_out_flag(p)
    p.add_argument(
        "--model",
        default=None,
        help="saved parameter file to evaluate; omitted trains per the config first",
    )
    p.add_argument(
        "--qps",
        default=None,
        metavar="QP,QP,...",
        help="comma-separated quantization parameters to sweep",
    )

    p = sub.add_parser("report", help="CSV and figures from metric files")
    p.add_argument("metric_files", nargs="+", help="metric JSONL files to combine")
    _add_out_flag(p)

    return parser


def _out_dir(args: argparse.Namespace) -> Path:
    if args.out is not None:
        return Path(args.out)
    root = Path(os.environ.get("FQS_OUT_DIR", "runs"))
    return root / args.subcommand


def _parse_qps(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise SystemExit(f"fedqsim: error: --qps expects comma-separated integers, got {text!r}")


def _dispatch(args: argparse.Namespace) -> None:
    if args.subcommand == "report":
        result = emit_report(args.metric_files, _out_dir(args))
        sys.stdout.write(result["summary_text"])
        print(f"report written to {result['csv'].parent}")
        return

    cfg = load_config(args.config, overrides=args.override, seed=args.seed)
    if args.subcommand == "stats":
        print(json.dumps(corpus_stats(cfg), indent=2))
        return

    out = _out_dir(args)
    if args.subcommand == "prepare-data":
        summary = run_prepare_data(cfg, out)
        print(json.dumps(summary, indent=2))
    elif args.subcommand == "train-central":
        series = run_train_central(cfg, out)
        print(series.final().to_json_line())
    elif args.subcommand == "train-federated":
        series = run_train_federated(
            cfg,
            out,
            checkpoint_every=args.checkpoint_every,
            resume=args.resume,
        )
        print(series.final().to_json_line())
    elif args.subcommand == "compress-eval":
        records = run_compress_eval(
            cfg,
            out,
            model_path=args.model,
            qps=_parse_qps(args.qps) if args.qps else None,
        )
        for record in records:
            print(json.dumps(record, separators=(",", ":")))
    else:  # pragma: no cover - argparse restricts choices
        raise AssertionError(args.subcommand)
    print(f"artifacts written to {out}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except FedqsimError as exc:
        print(f"fedqsim: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"fedqsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
