"""Command-line entry point.

Subcommands:
  run <config.json>        run an experiment, write per-run CSVs + summary
  aggregate <dir>          rebuild the summary from existing run CSVs
  validate <config.json>   check a config file and exit
  demo-affine              quick three-way comparison on a contractive map

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import json
import sys

from aamix import backend
from aamix.errors import AccelerationError

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser():
    parser = _Parser(prog="aamix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--seed", type=int, action="append", default=None,
                     help="override the config's seed list (repeatable)")
    run.add_argument("--output-dir", default=None, help="override the output directory")
    run.add_argument("--workers", type=int, default=None, help="parallel seed workers")

    agg = sub.add_parser("aggregate", help="aggregate run CSVs in a directory")
    agg.add_argument("directory")

    val = sub.add_parser("validate", help="validate a config file")
    val.add_argument("config")

    demo = sub.add_parser("demo-affine", help="three-way demo on an affine contraction")
    demo.add_argument("--n", type=int, default=30)
    demo.add_argument("--radius", type=float, default=0.9)
    demo.add_argument("--tol", type=float, default=1e-8)
    return parser


def _cmd_run(args):
    from dataclasses import replace

    from aamix import harness

    config = harness.load_config(args.config)
    if args.seed:
        config = replace(config, run=replace(config.run, seeds=tuple(args.seed)))
    if args.workers:
        config = replace(config, run=replace(config.run, workers=args.workers))
    result = harness.run_experiment(config, output_dir=args.output_dir)
    with open(result.metrics_path, encoding="utf-8") as fh:
        metrics = json.load(fh)
    print(f"wrote {len(result.csv_paths)} run CSVs, summary: {result.summary_path}")
    for method, stats in metrics.items():
        print(
            f"  {method:12s} runs={stats['runs']} "
            f"final_val_median={stats['final_val_loss_median']:.6g} "
            f"mean_iterations={stats['mean_iterations']:.0f}"
        )
    return 0


def _cmd_aggregate(args):
    from aamix import harness

    rows = harness.aggregate(args.directory)
    methods = sorted({row["method"] for row in rows})
    print(f"aggregated {len(rows)} rows for methods {methods} -> summary.csv")
    return 0


def _cmd_validate(args):
    from aamix import harness

    harness.load_config(args.config)
    print(f"{args.config}: OK")
    return 0


def _cmd_demo_affine(args):
    import numpy as np

    from aamix.accelerator import AccelerationConfig, train
    from aamix.models import random_contraction
    from aamix.optimizers import AffineOperator

    problem = random_contraction(args.n, args.radius, seed=0)
    w0 = np.random.default_rng(1).standard_normal(args.n)
    base = AccelerationConfig(
        beta=1.0, p=1, q=1, m=args.n, tol=args.tol, max_iterations=500,
        moving_average=False,
    )
    variants = {
        "plain": base.with_updates(p=501, m=1, t=1),
        "anderson": base,
        "anderson_ma": base.with_updates(moving_average=True, t=3),
    }
    print(f"affine contraction n={args.n} radius={args.radius} backend={backend.active_backend()}")
    for name, cfg in variants.items():
        result = train(AffineOperator(problem), w0, cfg)
        final = result.records[-1].residual_l2
        print(
            f"  {name:12s} iterations_to_tol={len(result.records):4d} "
            f"final_residual={final:.3e}"
        )
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "aggregate": _cmd_aggregate,
        "validate": _cmd_validate,
        "demo-affine": _cmd_demo_affine,
    }
    try:
        return handlers[args.command](args)
    except (AccelerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
