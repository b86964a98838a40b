"""Command-line interface.

Subcommands: run, report, humaneval-serve, validate-config.
Exit codes: 0 success, 1 partial failures, 2 configuration errors.
"""

from __future__ import annotations

import argparse
import random
import sys

from .core import ChartPotError, InputComposition, Strategy, load_manifest
from .evalharness import build_report, load_config, render_tables, run_batch
from .humaneval import HumanEvalService, sample_pairs, serve
from .pipeline import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chartpot")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a manifest under a configuration")
    run_p.add_argument("--manifest", required=True)
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--strategy", choices=[s.value for s in Strategy])
    run_p.add_argument("--composition", choices=[c.value for c in InputComposition])
    run_p.add_argument("--limit", type=int, help="run only N charts")
    run_p.add_argument("--seed", type=int, help="sample charts with this seed instead of taking the first N")

    rep_p = sub.add_parser("report", help="aggregate metrics from run records")
    rep_p.add_argument("--runs", required=True)
    rep_p.add_argument("--manifest", required=True)
    rep_p.add_argument("--format", choices=["markdown", "tsv"], default="markdown")

    he_p = sub.add_parser("humaneval-serve", help="serve blinded pairwise comparisons")
    he_p.add_argument("--runs-a", required=True)
    he_p.add_argument("--runs-b", required=True)
    he_p.add_argument("--manifest", required=True)
    he_p.add_argument("--images", help="directory of chart images to serve")
    he_p.add_argument("--per-type", type=int, default=10)
    he_p.add_argument("--seed", type=int, default=0)
    he_p.add_argument("--system-a", default="a")
    he_p.add_argument("--system-b", default="b")
    he_p.add_argument("--choices-log", help="append-only JSONL choice log")
    he_p.add_argument("--admin-token")
    he_p.add_argument("--host", default="127.0.0.1")
    he_p.add_argument("--port", type=int, default=8808)

    val_p = sub.add_parser("validate-config", help="check a config file without any model call")
    val_p.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.strategy:
            cfg.strategy = Strategy(args.strategy)
        if args.composition:
            cfg.input_composition = InputComposition(args.composition)
        cfg.validate()
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    limit = args.limit
    manifest = args.manifest
    if args.seed is not None and limit is not None:
        # seeded sampling: materialize a sampled manifest order via limit
        records = load_manifest(manifest)
        rng = random.Random(args.seed)
        sample = rng.sample(records, min(limit, len(records)))
        sampled_ids = {rec.id for rec in sample}
        import json
        import tempfile

        tmp = tempfile.NamedTemporaryFile(
            "w", suffix=".jsonl", delete=False, encoding="utf-8"
        )
        with open(manifest, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip() and json.loads(line)["id"] in sampled_ids:
                    tmp.write(line)
        tmp.close()
        manifest = tmp.name
        limit = None

    counts = run_batch(manifest, cfg, args.out, limit=limit)
    print(
        f"written={counts['written']} skipped={counts['skipped']} "
        f"failures={counts['failures']}"
    )
    return 1 if counts["failures"] else 0


def _cmd_report(args) -> int:
    report = build_report(args.runs, args.manifest)
    sys.stdout.write(render_tables(report, args.format))
    return 0


def _cmd_humaneval(args) -> int:
    result = sample_pairs(
        args.runs_a,
        args.runs_b,
        args.manifest,
        per_type=args.per_type,
        seed=args.seed,
        system_a=args.system_a,
        system_b=args.system_b,
    )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    service = HumanEvalService(
        result.pairs,
        images_dir=args.images,
        choices_log=args.choices_log,
        admin_token=args.admin_token,
    )
    print(f"serving {len(result.pairs)} pairs on {args.host}:{args.port}")
    print(f"admin token: {service.admin_token}")
    serve(service, host=args.host, port=args.port)
    return 0


def _cmd_validate(args) -> int:
    try:
        load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print("config ok")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "humaneval-serve":
            return _cmd_humaneval(args)
        if args.command == "validate-config":
            return _cmd_validate(args)
    except ChartPotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
