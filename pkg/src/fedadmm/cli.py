"""Command line entry point: ``fedadmm run | compare | verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, parse_config
from .metrics import CsvStream, compare_runs, emit_metrics, format_summary
from .orchestrator import run_experiment, thread_count

log = logging.getLogger("fedadmm")


def manifest_for(cfg, out: Path, meta: dict) -> dict:
    return {
        "config": cfg.to_dict(),
        "seeds": cfg.to_dict()["seeds"],
        "version": __version__,
        "outputs": {
            "metrics_csv": str(out / "metrics.csv"),
            "metrics_json": str(out / "metrics.json"),
        },
        "data": meta,
    }


def _data_meta(problem) -> dict:
    meta = {"train_size": len(problem.train), "clients": problem.num_clients}
    if problem.test is not None:
        meta["test_size"] = len(problem.test)
    rule = problem.train.meta.get("label_rule")
    if rule:
        meta["label_rule"] = rule
        meta["blocks"] = problem.train.meta["blocks"]
    return meta


def cmd_run(args) -> int:
    from .orchestrator import build_problem

    cfg = parse_config(args.config, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    stream = CsvStream(out / "metrics.csv")
    (out / "manifest.json").write_text(
        json.dumps(manifest_for(cfg, out, _data_meta(problem)), indent=2, sort_keys=True) + "\n"
    )

    def on_record(rec):
        stream(rec)
        if not args.quiet:
            loss = "-" if rec.train_loss is None else f"{rec.train_loss:.6g}"
            acc = "" if rec.test_accuracy is None else f" acc {rec.test_accuracy:.4f}"
            print(f"round {rec.round:4d} loss {loss}{acc} steps {rec.cumulative_steps} "
                  f"beta {rec.beta_mean:.4g}", flush=True)

    try:
        result = run_experiment(cfg, problem, on_record=on_record, threads=thread_count())
    finally:
        stream.close()
    emit_metrics(result.records, "json", out / "metrics.json")
    log.info("wrote %d rounds to %s", len(result.records), out)
    return 0


def cmd_compare(args) -> int:
    summaries, warnings = compare_runs(args.baseline, args.runs)
    print(format_summary(summaries), end="")
    for w in warnings:
        print(f"MISMATCH {w}")
    return 1 if warnings else 0


def cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedadmm", description="FedADMM experiment runner")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="TOML config or a previous run's manifest.json")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key, e.g. experiment.rounds=50")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    cmp = sub.add_parser("compare", help="summarize runs against a baseline")
    cmp.add_argument("--baseline", required=True)
    cmp.add_argument("runs", nargs="*")
    cmp.set_defaults(func=cmd_compare)

    ver = sub.add_parser("verify", help="run oracle and property self-checks")
    ver.add_argument("--suite", choices=("ridge", "mlp", "all"), default="all")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
