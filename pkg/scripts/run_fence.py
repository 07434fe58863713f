"""Fence recall time series for several seeds, with a per-phase summary.

    python3 scripts/run_fence.py --out results/fence --seeds 1 2 3
"""

import argparse
from pathlib import Path

import numpy as np

from lambdafield.experiments import run_fence_experiment
from lambdafield.io import read_csv_table
from lambdafield.scenario import bundled_scenario, load_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/fence"))
    p.add_argument("--scenario", default="fence")
    p.add_argument("--seeds", type=int, nargs="+", default=[1])
    args = p.parse_args()
    base = load_scenario(bundled_scenario(args.scenario))
    print("seed,phase,lambda_recall_end,bayes_recall_end,frontal_rows_lambda_lower")
    for seed in args.seeds:
        path = run_fence_experiment(base.with_seed(seed), args.out / f"seed{seed}")
        _, _, rows = read_csv_table(path)
        for phase in ("oblique", "frontal"):
            data = np.array([[float(v) for v in r[2:]] for r in rows if r[1] == phase])
            if not len(data):
                continue
            lower = int(np.sum(data[:, 0] < data[:, 2]))
            print(f"{seed},{phase},{data[-1, 0]:.4f},{data[-1, 2]:.4f},{lower}/{len(data)}")


if __name__ == "__main__":
    main()
