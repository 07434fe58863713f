"""Command-line entry point.

    lambdafield run --scenario tree --seed 3 --out runs/tree
    lambdafield converge --out runs/curves
    lambdafield fence --scenario fence --out runs/fence

``--scenario`` takes either a path to an INI file or the name of a bundled
scenario. ``run`` exits with 0 when the goal is reached and 2 when the
robot stops for good, collides or runs out of time; any malformed input
exits with 1 and a message naming the offending field.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import run_convergence_experiment, run_fence_experiment, run_scenario
from .planner import LAMBDA_RISK, REACHABILITY
from .scenario import ConfigError, bundled_scenario, load_scenario


def resolve_scenario(spec: str, seed: int | None = None):
    """Load a scenario from a path, falling back to the bundled names."""
    path = Path(spec)
    if not path.is_file() and path.suffix == "" and "/" not in spec:
        path = bundled_scenario(spec)
    sc = load_scenario(path)
    return sc if seed is None else sc.with_seed(seed)


def _seed(raw: str) -> int:
    value = int(raw)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lambdafield", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="closed-loop navigation run")
    run.add_argument("--scenario", required=True, help="INI path or bundled scenario name")
    run.add_argument("--seed", type=_seed, default=None, help="override the scenario seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--mode", choices=(LAMBDA_RISK, REACHABILITY), default=None,
                     help="risk model used by the planner (default: from the scenario)")

    conv = sub.add_parser("converge", help="occupancy convergence and recovery curves")
    conv.add_argument("--out", required=True, help="output directory")
    conv.add_argument("--n-max", type=int, default=200, help="largest measurement count")

    fence = sub.add_parser("fence", help="fence recall time series")
    fence.add_argument("--scenario", default="fence", help="INI path or bundled scenario name")
    fence.add_argument("--seed", type=_seed, default=None, help="override the scenario seed")
    fence.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            sc = resolve_scenario(args.scenario, args.seed)
            res = run_scenario(sc, args.out, mode=args.mode)
            print(f"{sc.name}: {res.status} after {res.time:.1f} s "
                  f"(peak speed in obstacles {res.peak_obstacle_speed:.3f} m/s)")
            return res.exit_code
        if args.command == "converge":
            if args.n_max < 1:
                raise ConfigError("n_max: must be at least 1")
            run_convergence_experiment(args.out, n_max=args.n_max)
            print(f"curves written to {args.out}")
            return 0
        sc = resolve_scenario(args.scenario, args.seed)
        path = run_fence_experiment(sc, args.out)
        print(f"recall written to {path}")
        return 0
    except ValueError as exc:  # ConfigError included
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
