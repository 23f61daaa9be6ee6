"""Command-line entry point: ``python -m manifold_rl {sweep,loadings,play,collect}``."""
from __future__ import annotations

import argparse
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument("--seed", type=int, metavar="N", help="master seed")
    common.add_argument("--dims", metavar="LIST", help="comma list of k values and/or 'raw'")
    common.add_argument("--trials", type=int, metavar="N")
    common.add_argument("--episodes", type=int, metavar="N")
    common.add_argument("--jobs", type=int, metavar="N",
                        help="worker processes (default: $MANIFOLD_RL_JOBS or all cores)")
    common.add_argument("--debug", action="store_true", help="keep per-trial returns")

    parser = argparse.ArgumentParser(prog="manifold-rl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="k-dimension learning sweep")
    sub.add_parser("loadings", parents=[common], help="PCA loadings and spectrum")
    sub.add_parser("collect", parents=[common], help="export demonstrations as CSV")
    play = sub.add_parser("play", parents=[common], help="run and log one episode")
    play.add_argument("--level", type=int, default=0, metavar="SEED", help="level seed")
    play.add_argument("--policy", metavar="PATH", help="Q-table snapshot (greedy play)")
    play.add_argument("--mode", default="small", choices=("small", "large", "fire"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "trials": args.trials, "episodes": args.episodes,
                 "dims": args.dims, "jobs": args.jobs}
    try:
        if args.command == "sweep":
            result = harness.cmd_sweep(args.config, args.out, overrides, debug=args.debug)
            for k in result.dims:
                finals = result.final_means(k)
                print(f"k={harness.dim_label(k):>3}  final mean {finals.mean():9.1f}")
        elif args.command == "loadings":
            basis = harness.cmd_loadings(args.config, args.out, overrides)
            print("eigenvalues:", " ".join(f"{v:.4g}" for v in basis.eigenvalues))
        elif args.command == "collect":
            demos = harness.cmd_collect(args.config, args.out, overrides)
            print(f"{demos.observations.shape[0]} observations from {demos.episodes} episodes")
        else:
            rec = harness.cmd_play(args.config, args.out, args.level, args.policy, args.mode,
                                   overrides)
            print(f"return {rec.total_return:g}  steps {rec.steps}  cause {rec.cause}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
