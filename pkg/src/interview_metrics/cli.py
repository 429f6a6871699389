"""``ivmetrics`` command line: ingest, metrics, compare, psm, report.

Usage::

    ivmetrics ingest  --config run.yaml
    ivmetrics metrics --config run.yaml [--skip-semantic] [--provider bert-base]
    ivmetrics compare --config run.yaml
    ivmetrics psm     --config run.yaml
    ivmetrics report  --config run.yaml
    ivmetrics all     --config run.yaml

Exit status is 0 when no error-level diagnostic was emitted, 1 otherwise,
and 2 for a failed stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from . import __version__
from .corpus import CorpusError
from .lexical import TokenizerConfigError
from .pipeline import (PipelineError, RunConfig, run_compare, run_ingest, run_metrics, run_psm,
                       run_report, set_dotted)

STAGES = {
    "ingest": run_ingest,
    "metrics": run_metrics,
    "compare": run_compare,
    "psm": run_psm,
    "report": run_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("-o", "--out", help="override the output directory")
    common.add_argument("--workers", type=int, help="worker threads for per-transcript work")
    common.add_argument("--skip-semantic", action="store_true",
                        help="omit embeddings and similarity columns")
    common.add_argument("--provider", action="append", default=None, metavar="MODEL",
                        help="use only these embedding providers (repeatable)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. psm.bandwidth=0.05")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ivmetrics", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse, validate and filter transcripts")
    sub.add_parser("metrics", parents=[common], help="entropy, sentence length and similarity per transcript")
    sub.add_parser("compare", parents=[common], help="descriptive and significance tables")
    sub.add_parser("psm", parents=[common], help="propensity-score kernel matching and ATE table")
    sub.add_parser("report", parents=[common], help="merge tables into a report bundle and plot data")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.skip_semantic:
        set_dotted(overrides, "embeddings.skip_semantic", True)
    for item in args.set:
        if "=" not in item:
            raise PipelineError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        set_dotted(overrides, key, yaml.safe_load(value))
    cfg = RunConfig.load(args.config, overrides)
    if args.provider:
        providers = cfg.data["embeddings"]["providers"]
        known = [p["model_name"] for p in providers]
        unknown = [p for p in args.provider if p not in known]
        if unknown:
            raise PipelineError(f"unknown provider(s): {', '.join(unknown)}")
        cfg.data["embeddings"]["providers"] = [p for p in providers if p["model_name"] in args.provider]
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        stages = list(STAGES) if args.command == "all" else [args.command]
        status = 0
        for name in stages:
            result = STAGES[name](cfg)
            for d in result.diagnostics:
                print(f"{d['level']}: {d['message']}", file=sys.stderr)
            print(json.dumps({"stage": name, "ok": result.ok, **result.summary}, sort_keys=True))
            if not result.ok:
                status = 1
        return status
    except (PipelineError, CorpusError, TokenizerConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
