"""Command line entry point: ``run``, ``compare`` and ``trace``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .federate import FederateConfig, RunMode, Trainer
from .harness import (
    ConfigError,
    RunConfig,
    compare,
    format_comparison,
    load_config,
    load_runs,
    run_experiment,
    summarize,
)

LOG_ENV = "FEDDRL_LOG_LEVEL"


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def _load(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _modes(arg: str | None, cfg: RunConfig) -> tuple:
    if not arg:
        return cfg.run.modes
    if arg.strip().lower() == "all":
        return tuple(m.value for m in RunMode)
    return tuple(RunMode.parse(m).value for m in _csv_list(arg))


def cmd_run(args) -> int:
    cfg = _load(args.config)
    settings = dataclasses.replace(
        cfg.run,
        modes=_modes(args.mode, cfg),
        seeds=tuple(int(s) for s in _csv_list(args.seeds)) if args.seeds else cfg.run.seeds,
        output_dir=args.out or cfg.run.output_dir,
        trace=args.trace or cfg.run.trace,
    )
    cfg = cfg.replace(run=settings)
    summary = run_experiment(cfg)
    print(json.dumps(summary.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_compare(args) -> int:
    runs = load_runs(args.in_dir)
    summary = summarize(runs, args.final_k)
    rows = compare(summary)
    print(format_comparison(rows))
    out = Path(args.in_dir) / "comparison.json"
    out.write_text(json.dumps([dataclasses.asdict(r) for r in rows], indent=2))
    return 0


def cmd_trace(args) -> int:
    cfg = _load(args.config)
    fed = FederateConfig(rounds=1, steps_per_round=args.steps)
    trainer = Trainer(cfg.env_config(), cfg.drl, cfg.replay, fed, args.mode, args.seed,
                      record_trace=True)
    trainer.run()
    if args.out:
        with open(args.out, "w") as fh:
            trainer.env.trace.write_ndjson(fh)
    else:
        trainer.env.trace.write_ndjson(sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feddrl-oran",
                                description="Federated D3QN link reconfiguration simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate one or more modes")
    run.add_argument("--config", help="INI run configuration (defaults when omitted)")
    run.add_argument("--mode", help="feddrl, idrl, ra, a comma list, or 'all'")
    run.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    run.add_argument("--out", help="output directory")
    run.add_argument("--trace", action="store_true", help="also export the signaling trace")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="compare FedDRL against the baselines")
    cmp_.add_argument("--in", dest="in_dir", required=True, help="directory written by 'run'")
    cmp_.add_argument("--final-k", type=int, default=10, help="rounds averaged at the end")
    cmp_.set_defaults(func=cmd_compare)

    tr = sub.add_parser("trace", help="print the signaling trace of a short run as NDJSON")
    tr.add_argument("--config")
    tr.add_argument("--steps", type=int, required=True)
    tr.add_argument("--mode", default="feddrl")
    tr.add_argument("--seed", type=int, default=1)
    tr.add_argument("--out", help="write to file instead of stdout")
    tr.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
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
