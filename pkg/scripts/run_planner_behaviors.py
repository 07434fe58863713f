"""Closed-loop runs behind the planner comparisons.

Runs the tree world and a sweep of grass variants (risk caps and grass
certainty) for a few seeds, and prints one summary line per run. Every run
keeps its full output directory under ``--out``.

    python3 scripts/run_planner_behaviors.py --out results/planner --seeds 1 2 3
"""

import argparse
from pathlib import Path

from lambdafield.experiments import run_scenario
from lambdafield.risk import MassPdf
from lambdafield.scenario import bundled_scenario, load_scenario

GRASS_VARIANTS = {
    "zero_budget": {"max_expected": 0.0},
    "default": {},
    "upper5": {"max_expected": 5.0, "max_upper": 5.0},
    "upper2": {"max_expected": 5.0, "max_upper": 2.0},
}
ALPHAS = (0.05, 0.01, 0.0)


def variants(seed: int):
    yield "tree", load_scenario(bundled_scenario("tree")).with_seed(seed)
    grass = load_scenario(bundled_scenario("grass")).with_seed(seed)
    for name, caps in GRASS_VARIANTS.items():
        yield f"grass_{name}", grass.with_planner(**caps) if caps else grass
    for a in ALPHAS:
        yield f"grass_alpha{a:g}", grass.with_mass_pdf("grass", MassPdf(1.0, ((0, 1.0 - a),), a))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/planner"))
    p.add_argument("--seeds", type=int, nargs="+", default=[1])
    args = p.parse_args()
    print("seed,run,status,time,obstacle_cells,peak_obstacle_speed,max_entered_lambda")
    for seed in args.seeds:
        for name, sc in variants(seed):
            r = run_scenario(sc, args.out / f"seed{seed}" / name)
            print(f"{seed},{name},{r.status},{r.time:.1f},{r.obstacle_cells_entered},"
                  f"{r.peak_obstacle_speed:.3f},{r.max_entered_lambda:.3f}")


if __name__ == "__main__":
    main()
