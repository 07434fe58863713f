"""Experiment drivers: closed-loop scenario runs, convergence curves, fence recall.

Every driver writes plain CSV files (headers plus a ``# scenario_hash=``
comment line) and, for runs, PGM snapshots of both maps. Given the same
inputs and seed the outputs are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import (
    BayesGrid,
    BayesModel,
    bayes_occupancy,
    lambda_occupancy,
    recall,
    time_reachability,
)
from .field import LambdaGrid, split_beams
from .io import write_grid_csv, write_pgm, write_rows
from .planner import REACHABILITY, Planner, evaluate, sweep_cells
from .raster import quad_cells
from .risk import FieldSnapshot
from .scenario import Scenario, _digest
from .sim import Command, RobotState, front_segment, scan, step, swept_collision, visible_labels

GOAL, STOPPED, COLLISION, TIMEOUT = "goal", "stopped", "collision", "timeout"
EXIT_CODES = {GOAL: 0, STOPPED: 2, COLLISION: 2, TIMEOUT: 2}

PLANNER_COLUMNS = ("t", "speed", "curvature", "expected", "lower", "upper", "feasible_count")
RISK_COLUMNS = ("scenario_id", "t", "expected", "lower", "upper", "p_coll")
TRAJECTORY_COLUMNS = ("t", "x", "y", "heading", "speed", "entered_cells", "entered_max_lambda", "in_obstacle")


@dataclass
class RunResult:
    status: str
    time: float
    scans: int
    max_entered_lambda: float = 0.0
    peak_obstacle_speed: float = 0.0
    obstacle_cells_entered: int = 0
    files: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]


class Mapper:
    """Both maps, fed with identical evidence from the simulated sensors."""

    def __init__(self, scenario: Scenario, robot: RobotState):
        self.scenario = scenario
        self.grid = LambdaGrid(scenario.grid, center=robot.position)
        self.bayes = BayesGrid.like(self.grid, scenario.bayes)
        self.camera_labels = [n for n in scenario.mass_pdfs if n in scenario.world.labels]

    def sense(self, robot: RobotState, scan_index: int) -> None:
        sc = self.scenario
        data = scan(sc.world, robot, sc.lidar, sc.lidar.scan_rng(scan_index))
        split = split_beams(data.origins, data.endpoints, data.hits, data.error_area, self.grid.cell_size)
        self.grid.integrate_beams(data.origins, data.endpoints, data.hits, data.error_area, data.normals, split=split)
        self.bayes.integrate_beams(data.origins, data.endpoints, data.hits, data.error_area, split=split)
        if self.camera_labels:
            cells, names = visible_labels(sc.world, robot, self.camera_labels, sc.camera_range, sc.camera_fov)
            if len(names):
                self.grid.set_labels(cells, [sc.world.label_id(n) for n in names])

    def recenter(self, displacement) -> None:
        self.grid.recenter(displacement)
        self.bayes.recenter(displacement)


def _entered_cells(before: RobotState, after: RobotState, cell_size: float) -> np.ndarray:
    a = front_segment(before.position, before.heading, before.width)
    b = front_segment(after.position, after.heading, after.width)
    if np.allclose(a, b):
        return np.zeros((0, 2), dtype=np.int64)
    _, cells = quad_cells(np.array([[a[0], a[1], b[1], b[0]]]), cell_size)
    return cells


def run_scenario(scenario: Scenario, out_dir, mode: str | None = None) -> RunResult:
    """Closed-loop run: scan, map, plan every command duration, move; write artifacts.

    Besides the periodic replanning, the executing command is re-evaluated
    on every scan and replaced as soon as the new evidence makes it exceed
    the thresholds.
    """
    sc = scenario if mode is None else scenario.with_planner(mode=mode)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = sc.planner
    world = sc.world
    robot = sc.robot.copy()
    mapper = Mapper(sc, robot)
    planner = Planner(cfg, sc.label_pdfs(), sc.trust)
    S = sc.grid.cell_size
    dt = 1.0 / sc.lidar.scan_rate
    n_total = int(round(sc.duration * sc.lidar.scan_rate))
    replan_every = max(1, int(round(cfg.duration * sc.lidar.scan_rate)))
    goal = np.asarray(cfg.goal, dtype=float)
    obstacle_ids = [i for i, n in enumerate(world.labels) if n != "free"]

    plan_rows, risk_rows, traj_rows = [], [], []
    cmd = Command(0.0, 0.0, cfg.duration)
    last_plan = None
    stop_streak = 0
    status = TIMEOUT
    k = 0
    res = RunResult(TIMEOUT, 0.0, 0)
    while True:
        t = k * dt
        mapper.sense(robot, k)
        if np.hypot(*(robot.position - goal)) <= cfg.goal_tolerance:
            status = GOAL
            break
        snap = FieldSnapshot(mapper.grid, sc.trust)
        bayes = mapper.bayes if cfg.mode == REACHABILITY else None
        current = sweep_cells(robot, cmd, cfg.horizon, S)
        ev = evaluate(current, snap, cfg, robot, cmd, planner.mass_pdfs, bayes)
        due = last_plan is None or k - last_plan >= replan_every
        # a stop in progress is not replaced early: it is already the fallback
        if due or (not ev.feasible and not cmd.is_stop):
            result = planner.plan(robot, snap, np.random.default_rng([sc.seed, 1, k]), bayes=bayes)
            cmd = result.command
            last_plan = k
            ev = result.evaluation or result.evaluations[0]
            plan_rows.append([t, cmd.target_speed, cmd.curvature, ev.expected, ev.lower, ev.upper,
                              result.feasible_count])
            if due:
                stop_streak = stop_streak + 1 if cmd.is_stop and robot.speed == 0.0 else 0
            if stop_streak >= sc.stop_patience:
                status = STOPPED
                break
        risk_rows.append([sc.name, t, ev.expected, ev.lower, ev.upper, 1.0 - ev.reachability
                          if cfg.mode == REACHABILITY else _p_coll(current, snap, ev)])
        if k >= n_total:
            break
        new = step(robot, cmd, dt)
        entered = _entered_cells(robot, new, S)
        lam_max, in_obs = 0.0, False
        if entered.shape[0]:
            lam = mapper.grid.lookup(mapper.grid.lambdas(), entered, outside=0.0)
            lam_max = float(lam.max())
            in_obs = bool(np.isin(world.label_at(entered), obstacle_ids).any())
        res.max_entered_lambda = max(res.max_entered_lambda, lam_max)
        if in_obs:
            res.peak_obstacle_speed = max(res.peak_obstacle_speed, new.speed)
            res.obstacle_cells_entered += int(np.isin(world.label_at(entered), obstacle_ids).sum())
        traj_rows.append([t + dt, new.position[0], new.position[1], new.heading, new.speed,
                          entered.shape[0], lam_max, int(in_obs)])
        if swept_collision(world, robot, new):
            robot = new
            status = COLLISION
            k += 1
            break
        mapper.recenter(new.position - robot.position)
        robot = new
        k += 1
    res.status = status
    res.time = k * dt
    res.scans = k + 1
    h = sc.digest
    files = {
        "lambda_pgm": out / "lambda_grid.pgm",
        "lambda_csv": out / "lambda_grid.csv",
        "bayes_pgm": out / "bayes_grid.pgm",
        "bayes_csv": out / "bayes_grid.csv",
        "planner_log": out / "planner_log.csv",
        "risk_trace": out / "risk_trace.csv",
        "trajectory": out / "trajectory.csv",
        "summary": out / "summary.csv",
    }
    write_pgm(files["lambda_pgm"], mapper.grid)
    write_grid_csv(files["lambda_csv"], mapper.grid, h, sc.trust)
    write_pgm(files["bayes_pgm"], mapper.bayes)
    write_grid_csv(files["bayes_csv"], mapper.bayes, h)
    write_rows(files["planner_log"], h, PLANNER_COLUMNS, plan_rows)
    write_rows(files["risk_trace"], h, RISK_COLUMNS, risk_rows)
    write_rows(files["trajectory"], h, TRAJECTORY_COLUMNS, traj_rows)
    write_rows(files["summary"], h, ("key", "value"), [
        ["status", res.status], ["exit_code", res.exit_code], ["time", res.time], ["scans", res.scans],
        ["max_entered_lambda", res.max_entered_lambda], ["peak_obstacle_speed", res.peak_obstacle_speed],
        ["obstacle_cells_entered", res.obstacle_cells_entered],
    ])
    res.files = files
    return res


def _p_coll(trace, snap, ev) -> float:
    cells, _ = trace.flat()
    if len(cells) == 0:
        return 0.0
    return float(-np.expm1(-snap.cell_area * np.sum(snap.intensities(cells, "point"))))


# --------------------------------------------------------------------------
# convergence and recovery curves


def run_convergence_experiment(out_dir, ratios=(0.4, 0.6), n_max: int = 200,
                               model: BayesModel = BayesModel(), cell_area: float = 0.01,
                               error_area: float = 0.01, recovery_misses: int = 50,
                               recovery_hits: float = 100.0, recovery_step: float = 0.01) -> dict:
    """Occupancy curves under a constant hit ratio, recovery curves, and the R_t demo.

    Counters follow their expectations (``h = r N``, ``m = (1 - r) N``), which
    is what a fraction ``r`` of hits means for the order-free closed forms.
    Bayesian curves are unclamped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _digest("converge", repr((tuple(ratios), n_max, model, cell_area, error_area,
                                  recovery_misses, recovery_hits, recovery_step)))
    rows = []
    n = np.arange(1, n_max + 1, dtype=float)
    for r in ratios:
        hits, misses = r * n, (1.0 - r) * n
        with np.errstate(divide="ignore"):
            lam = lambda_occupancy(hits, misses, cell_area, error_area)
        bay = bayes_occupancy(hits, misses, model)
        rows.extend([r, int(k), float(a), float(b)] for k, a, b in zip(n, lam, bay))
    files = {"convergence": out / "convergence.csv", "recovery": out / "recovery.csv",
             "time_reachability": out / "time_reachability.csv"}
    write_rows(files["convergence"], h, ("r", "n", "lambda_prob", "bayes_prob"), rows)

    k = np.round(np.arange(0.0, recovery_hits + recovery_step / 2, recovery_step), 10)
    lam = lambda_occupancy(k, recovery_misses, cell_area, error_area)
    bay = bayes_occupancy(k, recovery_misses, model)
    write_rows(files["recovery"], h, ("hits", "lambda_prob", "bayes_prob"),
               [[float(a), float(b), float(c)] for a, b, c in zip(k, lam, bay)])

    speeds = np.round(np.arange(0.1, 1.0 + 1e-9, 0.1), 10)
    write_rows(files["time_reachability"], h, ("speed", "r_t"),
               [[float(v), time_reachability(0.1, 1.0, float(v))] for v in speeds])
    return files


# --------------------------------------------------------------------------
# fence recall


def fence_patches(world, label: str = "fence", size: int = 3) -> list:
    """Fence cells grouped into runs of ``size`` along the fence, in lattice order."""
    cells = world.cells_with_label(label)
    if cells.shape[0] == 0:
        raise ValueError(f"world has no {label!r} cells")
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    cells = [tuple(int(v) for v in c) for c in cells[order]]
    return [cells[i : i + size] for i in range(0, len(cells) - size + 1, size)]


def run_fence_experiment(scenario: Scenario, out_dir) -> Path:
    """Recall time series of both maps for a static robot watching a fence.

    The robot first looks along the fence from the oblique pose, then from
    the frontal pose. One row is written before the first scan and one after
    every scan.
    """
    setup = scenario.fence
    if setup is None:
        raise ValueError("scenario has no [fence] section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = scenario.world
    patches = fence_patches(world, setup.label, setup.patch_size)
    oblique = _pose(scenario.robot, setup.oblique)
    frontal = _pose(scenario.robot, setup.frontal)
    mapper = Mapper(scenario, oblique)
    rate = scenario.lidar.scan_rate
    n_oblique = int(round(setup.oblique_time * rate))
    n_total = n_oblique + int(round(setup.frontal_time * rate))

    def row(t, phase):
        lm, ls = recall(mapper.grid, patches, "lambda")
        bm, bs = recall(mapper.bayes, patches, "bayes")
        return [t, phase, lm, ls, bm, bs]

    rows = [row(0.0, "start")]
    robot = oblique
    for k in range(n_total):
        if k == n_oblique:
            mapper.recenter(frontal.position - robot.position)
            robot = frontal
        mapper.sense(robot, k)
        rows.append(row((k + 1) / rate, "oblique" if k < n_oblique else "frontal"))
    path = out / "fence_recall.csv"
    write_rows(path, scenario.digest, ("t", "phase", "lambda_mean", "lambda_std", "bayes_mean", "bayes_std"), rows)
    return path


def _pose(robot: RobotState, pose) -> RobotState:
    x, y, heading_deg = pose
    r = robot.copy()
    r.position = np.array([x, y], dtype=float)
    r.heading = math.radians(heading_deg)
    r.speed = 0.0
    return r
