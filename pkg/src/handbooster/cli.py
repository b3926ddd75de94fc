"""Command-line interface.

    handbooster run --config pipeline.cfg [--seed N] [--out DIR] [--dry-run]
    handbooster label|sample|validate|render|filter --config CFG --out DIR [--in DIR]
    handbooster metrics --pred PRED.jsonl --gt GT.jsonl [--report OUT.json]
    handbooster make-fixture --out DIR [--seed N] [...]

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError, DataError
from .fixtures import generate_fixture
from .metrics import EvalRecord, format_report_table, read_predictions_jsonl, summarize
from .pipeline import STAGE_ORDER, format_plan, run_pipeline, run_single_stage


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="handbooster", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full staged pipeline")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="override the config output directory")
    run.add_argument("--dry-run", action="store_true", help="print the stage plan and exit")

    for stage in STAGE_ORDER:
        p = sub.add_parser(stage, help=f"run only the {stage} stage")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--in", dest="input_dir", default=None,
                       help="snapshot directory from the previous stage")
        p.add_argument("--out", required=True, help="snapshot directory to write")

    metrics = sub.add_parser("metrics", help="evaluate predictions against ground truth")
    metrics.add_argument("--pred", required=True, help="JSON-lines predictions")
    metrics.add_argument("--gt", required=True, help="JSON-lines ground truth")
    metrics.add_argument("--report", default=None, help="also write the summary as JSON")

    fixture = sub.add_parser("make-fixture", help="generate the self-contained toy dataset")
    fixture.add_argument("--out", required=True)
    fixture.add_argument("--seed", type=int, default=0)
    fixture.add_argument("--frames", type=int, default=100)
    fixture.add_argument("--synthetic", type=int, default=100, help="synthetic grasps per object")
    fixture.add_argument("--contactless", action="store_true",
                         help="make the synthetic pool fail validation (for testing)")
    return parser


def _resolve_out(value):
    # CLI path overrides are CWD-relative, unlike config-file paths
    return None if value is None else str(Path(value).resolve())


def _cmd_run(args) -> int:
    overrides = {"seed": args.seed, "output_dir": _resolve_out(args.out)}
    cfg = load_config(args.config, overrides)
    if args.dry_run:
        print(format_plan(cfg))
        return 0
    report = run_pipeline(cfg)
    print(f"pipeline complete: {cfg.output_dir}")
    render = report["stages"].get("render", {})
    print(f"condition sets: {render.get('condition_sets', 0)}"
          f" (real {render.get('from_real', 0)}, synthetic {render.get('from_synthetic', 0)})")
    if report["warnings"]:
        print(f"warnings: {len(report['warnings'])}")
        for w in report["warnings"]:
            print(f"  - {w}")
    return 0


def _cmd_stage(args) -> int:
    out = _resolve_out(args.out)
    cfg = load_config(args.config, {"seed": args.seed, "output_dir": out})
    run_single_stage(cfg, args.command, args.input_dir, out)
    print(f"stage {args.command} complete: {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    preds = read_predictions_jsonl(args.pred)
    gts = read_predictions_jsonl(args.gt)
    shared = sorted(set(preds) & set(gts))
    if not shared:
        raise DataError("no shared sample ids between predictions and ground truth")
    records = [
        EvalRecord.from_arrays(
            sid,
            np.array(preds[sid]["joints"], dtype=np.float64),
            np.array(gts[sid]["joints"], dtype=np.float64),
            np.array(preds[sid]["vertices"], dtype=np.float64),
            np.array(gts[sid]["vertices"], dtype=np.float64),
        )
        for sid in shared
    ]
    summary = summarize(records)
    print(format_report_table(summary))
    if args.report:
        Path(args.report).write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return 0


def _cmd_fixture(args) -> int:
    out = generate_fixture(
        args.out,
        seed=args.seed,
        real_frames=args.frames,
        synthetic_per_object=args.synthetic,
        contactless_pool=args.contactless,
    )
    print(f"fixture written to {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command in STAGE_ORDER:
            return _cmd_stage(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "make-fixture":
            return _cmd_fixture(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
