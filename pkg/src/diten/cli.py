"""Command line front end.

Subcommands:
  run          train or evaluate one algorithm over a sweep of cells
  compare      tabulate final-window means and pairwise lifts across runs
  plot-data    emit tidy CSVs for the standard figures
  fl-verify    check the federated convergence bound on random instances
  alloc-check  cross-check the history allocator against a grid oracle

Exit codes: 0 on success, 2 on bad usage or bad config, 3 on a runtime
failure (including a failed verification).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .alloc import cross_check
from .config import ConfigError, apply_profile, default_config, load_config
from .flconv import random_shards, run_rounds, smoothness_bounds, verify_bound
from .harness import (
    ALGORITHMS,
    ExperimentPlan,
    compare_algorithms,
    emit_plot_data,
    run_plan,
)


def _int_list(text: str):
    return tuple(int(part) for part in text.split(","))


def _float_list(text: str):
    return tuple(float(part) for part in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diten", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one algorithm over a cell sweep")
    p_run.add_argument("--config", help="YAML config file")
    p_run.add_argument("--profile", choices=("desk", "paper"),
                       help="episode/slot budget preset")
    p_run.add_argument("--algorithm", default="ppo", choices=ALGORITHMS)
    p_run.add_argument("--servers", type=_int_list, default=None,
                       help="comma-separated server counts")
    p_run.add_argument("--emd", type=_float_list, default=None,
                       help="comma-separated skew levels")
    p_run.add_argument("--seed", type=_int_list, default=(0,),
                       help="comma-separated seeds")
    p_run.add_argument("--episodes", type=int, default=None)
    p_run.add_argument("--slots", type=int, default=None)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, default=1,
                       help="cells run in a process pool of this size")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare finished runs")
    p_cmp.add_argument("runs", nargs="+", help="run directories")
    p_cmp.add_argument("--window", type=int, default=100)
    p_cmp.add_argument("--out", help="write the comparison CSV here")
    p_cmp.set_defaults(func=cmd_compare)

    p_plot = sub.add_parser("plot-data", help="emit tidy CSVs for figures")
    p_plot.add_argument("runs", nargs="+", help="run directories")
    p_plot.add_argument("--window", type=int, default=100)
    p_plot.add_argument("--out", required=True, help="output directory")
    p_plot.set_defaults(func=cmd_plot_data)

    p_fl = sub.add_parser(
        "fl-verify", help="verify the convergence bound on random instances"
    )
    p_fl.add_argument("--instances", type=int, default=100)
    p_fl.add_argument("--rounds", type=int, default=50)
    p_fl.add_argument("--seed", type=int, default=0)
    p_fl.add_argument("--tol", type=float, default=1e-10)
    p_fl.add_argument("--lr-scale", type=float, default=1.0,
                      help="learning rate as a fraction of 1/L")
    p_fl.set_defaults(func=cmd_fl_verify)

    p_alloc = sub.add_parser(
        "alloc-check", help="cross-check the allocator against a grid oracle"
    )
    p_alloc.add_argument("--instances", type=int, default=200)
    p_alloc.add_argument("--seed", type=int, default=0)
    p_alloc.add_argument("--step", type=float, default=0.01)
    p_alloc.add_argument("--obj-tol", type=float, default=1e-4)
    p_alloc.add_argument("--gamma-tol", type=float, default=0.02)
    p_alloc.set_defaults(func=cmd_alloc_check)
    return parser


def _load(args):
    config = load_config(args.config) if args.config else default_config()
    if args.profile:
        config = apply_profile(config, args.profile)
    return config


def cmd_run(args) -> int:
    config = _load(args)
    import dataclasses

    train = config.train
    if args.episodes is not None:
        train = dataclasses.replace(train, episodes=args.episodes)
    if args.slots is not None:
        train = dataclasses.replace(train, slots_per_episode=args.slots)
    from .config import Config

    config = Config(config.scenario, train).validate()
    plan = ExperimentPlan(
        config=config,
        algorithm=args.algorithm,
        server_counts=args.servers or (config.scenario.n_servers,),
        emd_levels=args.emd or (config.scenario.emd_level,),
        seeds=args.seed,
        out_dir=args.out,
    )

    def progress(prefix, episode, row):
        if args.quiet:
            return
        if (episode + 1) % 25 == 0 or episode == 0:
            print(
                f"[{prefix}] episode {episode + 1}/{train.episodes} "
                f"objective={row['mean_objective']:+.4f} "
                f"reward={row['mean_reward']:+.3f}",
                flush=True,
            )

    manifest = run_plan(plan, progress=progress, workers=args.workers)
    print(f"wrote {len(manifest['cells'])} cell(s) to {args.out}")
    return 0


def cmd_compare(args) -> int:
    means, lifts = compare_algorithms(
        args.runs, window=args.window, out_path=args.out
    )
    print(f"final-window mean objective (window={args.window})")
    for tag in sorted(means):
        print(f"  {tag:16s} {means[tag]['aggregate']:+.6f}")
    print("lift = (a - b) / |b|")
    for a, b, lift in lifts:
        print(f"  {a:16s} vs {b:16s} {lift:+.4f}")
    return 0


def cmd_plot_data(args) -> int:
    paths = emit_plot_data(args.runs, args.out, window=args.window)
    for name, path in paths.items():
        print(f"wrote {path}")
    return 0


def cmd_fl_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    failures = 0
    for _ in range(args.instances):
        shards = random_shards(rng)
        smooth, convex = smoothness_bounds(shards)
        lr = args.lr_scale / smooth
        w0 = rng.normal(scale=2.0, size=shards[0].center.size)
        trace = run_rounds(w0, shards, lr, args.rounds)
        rows = verify_bound(trace, tol=args.tol)
        for _, gap, bound, ok in rows:
            worst = max(worst, gap - bound)
            if not ok:
                failures += 1
    print(
        f"{args.instances} instances x {args.rounds} rounds: "
        f"{failures} violations, worst excess {worst:.3e}"
    )
    return 0 if failures == 0 else 3


def cmd_alloc_check(args) -> int:
    report = cross_check(
        n_instances=args.instances,
        seed=args.seed,
        step=args.step,
        obj_tol=args.obj_tol,
        gamma_tol=args.gamma_tol,
    )
    print(
        f"{report['instances']} instances: {report['failures']} failures, "
        f"max objective gap {report['max_objective_gap']:.3e}, "
        f"max allocation gap {report['max_gamma_gap']:.3e}"
    )
    return 0 if report["passed"] else 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except Exception as exc:  # runtime failures map to exit 3
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
