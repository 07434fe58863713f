"""Occupancy curves under a constant hit ratio and the recovery curves after misses.

    python3 scripts/run_convergence.py --out results/convergence --ratios 0.3 0.4 0.6 0.7
"""

import argparse
from pathlib import Path

from lambdafield.baseline import BayesModel
from lambdafield.experiments import run_convergence_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/convergence"))
    p.add_argument("--ratios", type=float, nargs="+", default=[0.4, 0.6])
    p.add_argument("--n-max", type=int, default=200)
    p.add_argument("--p-hit", type=float, default=0.7, help="P(occupied | hit) of the symmetric Bayes model")
    p.add_argument("--misses", type=int, default=50, help="misses before the recovery curve starts")
    args = p.parse_args()
    files = run_convergence_experiment(args.out, tuple(args.ratios), args.n_max,
                                       BayesModel.symmetric(args.p_hit), recovery_misses=args.misses)
    for path in files.values():
        print(path)


if __name__ == "__main__":
    main()
