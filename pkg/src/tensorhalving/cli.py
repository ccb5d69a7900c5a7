"""Command line entry point: ``tensorhalving <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .diagnostics import diagnose, format_diagnostics
from .environment import gen_additive, gen_cp, gen_tucker, load_truth, save_truth
from .errors import BudgetExhausted, InvalidArgument, NumericFailure, ParseError
from .ingestion import fixture_truth, ingest, synthetic_events, write_events


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_generate(args):
    dims = _ints(args.dims)
    if args.kind == "events":
        if args.out is None:
            raise InvalidArgument("generate --kind events needs --out")
        events = synthetic_events(dims, args.seed)
        write_events(args.out, events, dims)
        print(f"wrote {len(events)} events over {dims} to {args.out}")
        return 0
    if args.kind == "fixture":
        truth = fixture_truth(dims, args.seed)
    elif args.kind == "tucker":
        truth = gen_tucker(dims, _ints(args.ranks), args.seed, args.normalize)
    elif args.kind == "cp":
        truth = gen_cp(dims, _ints(args.ranks)[0], args.seed, normalize=args.normalize)
    else:
        truth = gen_additive(dims, args.seed, args.normalize)
    if args.out is None:
        raise InvalidArgument("generate needs --out")
    save_truth(args.out, truth)
    print(f"wrote {truth.kind} tensor {truth.shape} to {args.out}")
    return 0


def cmd_ingest(args):
    report = ingest(args.events, args.eta, out=args.out, unfold_csv=args.unfold_csv)
    record = {
        "shape": list(report.tensor.shape),
        "distinct_users_total": report.distinct_users_total,
        "estimated_ranks": list(report.estimated_ranks),
        "cpv_threshold": report.cpv_threshold,
        "total_count": int(report.raw_counts.sum()),
    }
    if args.format == "json":
        text = json.dumps(record, indent=1, sort_keys=True) + "\n"
    else:
        text = "".join(f"{k}={','.join(map(str, v)) if isinstance(v, list) else v}\n"
                       for k, v in record.items())
    sys.stdout.write(text)
    return 0


def cmd_diagnose(args):
    truth = load_truth(args.truth)
    eps = _floats(args.eps) if args.eps else ()
    ranks = _ints(args.ranks) if args.ranks else None
    diag = diagnose(truth.tensor, eps, ranks, args.switch_round)
    text = format_diagnostics(diag)
    if args.format == "json":
        record = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                record[k] = v
        text = json.dumps(record, indent=1) + "\n"
    _emit(text, args.out)
    return 0


def _run_config(args):
    config = harness.load_config(args.config) if args.config else harness.default_paper_config()
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    return config


def cmd_run(args):
    config = _run_config(args)
    if args.show_config:
        sys.stdout.write(config.to_text())
        return 0
    print(harness.df_banner(config), file=sys.stderr)
    rows = harness.run_experiment(config)
    errors = sum(1 for r in rows if r.error)
    if errors:
        print(f"{errors} of {len(rows)} runs failed; see error rows", file=sys.stderr)
    text = harness.rows_to_json(rows) if args.format == "json" else harness.rows_to_csv(rows)
    _emit(text, args.out)
    return 0


def cmd_summarize(args):
    summary = harness.summarize(harness.read_rows(args.results))
    text = harness.summary_to_json(summary) if args.format == "json" else harness.summary_to_csv(summary)
    _emit(text, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="tensorhalving",
                                     description="Two-stage tensor screening benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic ground truth (TNS v1) or event log (EVT v1)")
    p.add_argument("--kind", choices=["tucker", "cp", "additive", "fixture", "events"], default="tucker")
    p.add_argument("--dims", default="21,10,8")
    p.add_argument("--ranks", default="2,2,2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="EVT v1 log -> normalized TNS v1 tensor and CPV ranks")
    p.add_argument("events")
    p.add_argument("--eta", type=float, default=0.95)
    p.add_argument("--out")
    p.add_argument("--unfold-csv", dest="unfold_csv")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("diagnose", help="instance diagnostics of a TNS v1 tensor")
    p.add_argument("truth")
    p.add_argument("--eps", help="comma-separated eps values")
    p.add_argument("--ranks")
    p.add_argument("--switch-round", dest="switch_round", type=int)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("run", help="Monte Carlo sweep; without --config runs the bundling grid")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--show-config", dest="show_config", action="store_true",
                   help="print the effective config and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="mean regret and standard error per cell of a results file")
    p.add_argument("results")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, ParseError, NumericFailure, BudgetExhausted, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
