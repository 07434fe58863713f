"""Coverage of the confidence interval on lambda as the number of readings grows.

For each reading count the script draws cells with random hit ratios,
draws the true hit count from the trust model, and reports how often
``[lambda_L, lambda_U]`` contains the intensity of the true counts.

    python3 scripts/run_coverage.py --counts 10 20 50 200 1000
"""

import argparse

import numpy as np

from lambdafield.field import SensorTrust, bounds_from_counts, lambda_from_counts


def coverage(total: int, trust: SensorTrust, n_cells: int, rng, z: float = 1.96, e: float = 0.01) -> float:
    ratio = rng.uniform(0.05, 0.95, n_cells)
    hits = rng.binomial(total, ratio)
    true_hits = rng.binomial(hits, trust.p_hit) + rng.binomial(total - hits, 1 - trust.p_miss)
    lo, hi = bounds_from_counts(hits, total - hits, trust, e, 1000.0, z)
    target = lambda_from_counts(true_hits, total - true_hits, e, 1000.0)
    return float(np.mean((lo <= target) & (target <= hi)))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--counts", type=int, nargs="+", default=[10, 20, 50, 100, 200, 500, 1000])
    p.add_argument("--cells", type=int, default=10_000)
    p.add_argument("--p-hit", type=float, default=0.99)
    p.add_argument("--p-miss", type=float, default=0.9999)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    trust = SensorTrust(args.p_hit, args.p_miss)
    print("readings,coverage")
    for m in args.counts:
        print(f"{m},{coverage(m, trust, args.cells, rng):.4f}")


if __name__ == "__main__":
    main()
