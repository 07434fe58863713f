"""Risk-bounded sampling planner.

Every cycle the planner samples feasible constant-curvature commands, sweeps
the robot front along each one for the evaluation horizon, scores the swept
cells and keeps the command that ends closest to the goal among those whose
risks stay under the thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baseline import BayesGrid, reachability
from .field import SensorTrust
from .raster import quad_cells
from .risk import FieldSnapshot, MassPdf, PathTrace, expected_mass_risk
from .sim import Command, RobotState, slew

LAMBDA_RISK = "lambda"
REACHABILITY = "reachability"


@dataclass(frozen=True)
class PlannerConfig:
    samples: int = 300
    duration: float = 3.0
    horizon: float = 8.0
    max_expected: float = 0.0
    max_upper: float = 5.0
    epsilon: float = 0.1
    goal: tuple[float, float] = (0.0, 0.0)
    mode: str = LAMBDA_RISK
    kappa_max: float = 1.0
    m_max: float = 1.0
    goal_tolerance: float = 0.3

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.horizon < self.duration:
            raise ValueError("horizon must be at least the command duration")
        if self.max_expected < 0 or self.max_upper < 0:
            raise ValueError("risk thresholds must be nonnegative")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.mode not in (LAMBDA_RISK, REACHABILITY):
            raise ValueError(f"unknown planner mode {self.mode!r}")
        if self.kappa_max < 0:
            raise ValueError("kappa_max must be nonnegative")


@dataclass
class Evaluation:
    expected: float
    lower: float
    upper: float
    distance: float
    reachability: float = 1.0
    feasible: bool = False


# --------------------------------------------------------------------------
# sampling


def sample_commands(robot: RobotState, config: PlannerConfig, rng: np.random.Generator) -> list[Command]:
    """The stop command plus ``samples - 1`` reachable (speed, curvature) pairs."""
    reach = robot.a_max * config.duration
    lo = max(0.0, robot.speed - reach)
    hi = min(robot.v_max, robot.speed + reach)
    n = config.samples - 1
    speeds = rng.uniform(lo, hi, n)
    curv = rng.uniform(-config.kappa_max, config.kappa_max, n)
    out = [Command(0.0, 0.0, config.duration)]
    out.extend(Command(float(v), float(k), config.duration) for v, k in zip(speeds, curv))
    return out


# --------------------------------------------------------------------------
# kinematics along a command


def travel_distance(v0: float, target: float, a_max: float, t: float) -> float:
    """Distance covered in ``t`` seconds while slewing from ``v0`` to ``target``."""
    return slew(v0, target, a_max, t)[1]


def speed_at(v0: float, target: float, a_max: float, s: np.ndarray) -> np.ndarray:
    """Speed after covering abscissa ``s`` under a constant-acceleration slew."""
    s = np.asarray(s, dtype=float)
    if target >= v0:
        return np.minimum(target, np.sqrt(v0 * v0 + 2.0 * a_max * s))
    return np.maximum(target, np.sqrt(np.maximum(v0 * v0 - 2.0 * a_max * s, 0.0)))


def poses_along(robot: RobotState, curvature: float, s: np.ndarray):
    """Front-centre positions ``(k, 2)`` and headings ``(k,)`` at abscissae ``s``."""
    s = np.asarray(s, dtype=float)
    th0 = robot.heading
    turn = curvature * s
    small = np.abs(turn) < 1e-9
    safe_k = curvature if curvature != 0.0 else 1.0
    dx = np.where(small, s * (np.cos(th0) - 0.5 * turn * np.sin(th0)),
                  (np.sin(th0 + turn) - np.sin(th0)) / safe_k)
    dy = np.where(small, s * (np.sin(th0) + 0.5 * turn * np.cos(th0)),
                  (np.cos(th0) - np.cos(th0 + turn)) / safe_k)
    pos = robot.position[None, :] + np.stack([dx, dy], axis=1)
    return pos, th0 + turn


def end_pose(robot: RobotState, command: Command) -> np.ndarray:
    d = travel_distance(robot.speed, min(command.target_speed, robot.v_max), robot.a_max, command.duration)
    pos, _ = poses_along(robot, command.curvature, np.array([d]))
    return pos[0]


# --------------------------------------------------------------------------
# sweeping


def _step_abscissae(length: float, max_step: float) -> np.ndarray:
    if length <= 0:
        return np.zeros(0)
    n = max(1, int(math.ceil(length / max_step - 1e-12)))
    return np.linspace(0.0, length, n + 1)


def sweep_many(robot: RobotState, commands: Sequence[Command], horizon: float, cell_size: float) -> list[PathTrace]:
    """Swept front cells for every command, as one vectorised rasterisation.

    Each step of at most half a cell moves the front segment forward; the
    quadrilateral between consecutive front positions is rasterised and the
    cells not seen before form that step's group, keyed by the abscissa at
    the start of the step.
    """
    half_w = robot.width / 2
    quads, owners, starts, meta = [], [], [], []
    for ci, cmd in enumerate(commands):
        target = min(max(cmd.target_speed, 0.0), robot.v_max)
        length = travel_distance(robot.speed, target, robot.a_max, horizon)
        s = _step_abscissae(length, cell_size / 2)
        meta.append((s, target))
        if s.shape[0] < 2:
            continue
        pos, th = poses_along(robot, cmd.curvature, s)
        side = np.stack([-np.sin(th), np.cos(th)], axis=1) * half_w
        left, right = pos + side, pos - side
        q = np.stack([left[:-1], right[:-1], right[1:], left[1:]], axis=1)
        quads.append(q)
        owners.append(np.full(q.shape[0], ci))
        starts.append(np.arange(q.shape[0]))
    traces = [None] * len(commands)
    if quads:
        all_q = np.concatenate(quads)
        owner = np.concatenate(owners)
        step_idx = np.concatenate(starts)
        qi, cells = quad_cells(all_q, cell_size)
        if cells.shape[0] == 0:
            return [PathTrace.empty(robot.width) for _ in commands]
        cmd_of = owner[qi]
        # first time each (command, cell) appears; quad order is traversal order
        ox = cells[:, 0] - cells[:, 0].min()
        oy = cells[:, 1] - cells[:, 1].min()
        span = int(max(ox.max(initial=0), oy.max(initial=0))) + 1
        key = (cmd_of.astype(np.int64) * span + ox) * span + oy
        _, first = np.unique(key, return_index=True)
        keep = np.zeros(key.shape[0], dtype=bool)
        keep[first] = True
        qi, cells, cmd_of = qi[keep], cells[keep], cmd_of[keep]
        step_of = step_idx[qi]
        bounds = np.searchsorted(cmd_of, np.arange(len(commands) + 1))
        for ci in range(len(commands)):
            a, b = bounds[ci], bounds[ci + 1]
            if a == b:
                continue
            traces[ci] = _trace_from(robot, commands[ci], meta[ci], step_of[a:b], cells[a:b])
    return [t if t is not None else PathTrace.empty(robot.width) for t in traces]


def _trace_from(robot, cmd, meta, steps, cells) -> PathTrace:
    s, target = meta
    uniq, start = np.unique(steps, return_index=True)
    groups = np.split(cells, start[1:])
    absc = s[uniq]
    speed = speed_at(robot.speed, target, robot.a_max, absc)
    heading = robot.heading + cmd.curvature * absc
    return PathTrace(absc, groups, robot.width, speed, heading)


def sweep_cells(robot: RobotState, command: Command, horizon: float, cell_size: float) -> PathTrace:
    if horizon < command.duration:
        raise ValueError("horizon must be at least the command duration")
    return sweep_many(robot, [command], horizon, cell_size)[0]


# --------------------------------------------------------------------------
# evaluation and selection


def evaluate(trace: PathTrace, snapshot, config: PlannerConfig, robot: RobotState, command: Command,
             mass_pdfs: Mapping[int, MassPdf] | None = None, bayes: BayesGrid | None = None) -> Evaluation:
    """Score one candidate; the distance is taken at the end of the command."""
    distance = float(np.hypot(*(end_pose(robot, command) - np.asarray(config.goal))))
    if config.mode == REACHABILITY:
        if bayes is None:
            raise ValueError("reachability mode needs a Bayesian grid")
        cells, _ = trace.flat()
        occ = bayes.lookup(bayes.occupancy(), cells, outside=0.5) if len(cells) else np.zeros(0)
        r = reachability(occ, bayes.cell_size**2)
        ev = Evaluation(1.0 - r, 1.0 - r, 1.0 - r, distance, r)
        ev.feasible = r >= 1.0 - config.epsilon
        return ev
    rep = expected_mass_risk(trace, snapshot, robot.mass, config.m_max, mass_pdfs)
    ev = Evaluation(rep.expected, rep.expected_lower, rep.expected_upper, distance)
    ev.feasible = rep.expected <= config.max_expected and rep.expected_upper <= config.max_upper
    return ev


def select(commands: Sequence[Command], evaluations: Sequence[Evaluation], config: PlannerConfig):
    """Closest-to-goal feasible command; ties by risk then speed. ``STOP`` if none."""
    best = None
    best_key = None
    for cmd, ev in zip(commands, evaluations):
        if not ev.feasible:
            continue
        key = (ev.distance, ev.expected, cmd.target_speed)
        if best_key is None or key < best_key:
            best, best_key = cmd, key
    if best is None:
        return Command(0.0, 0.0, config.duration), None
    return best, evaluations[list(commands).index(best)]


@dataclass
class PlanResult:
    command: Command
    evaluation: Evaluation | None
    feasible_count: int
    candidates: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    traces: list = field(default_factory=list)


class Planner:
    def __init__(self, config: PlannerConfig, mass_pdfs: Mapping[int, MassPdf] | None = None,
                 trust: SensorTrust | None = None):
        self.config = config
        self.mass_pdfs = dict(mass_pdfs or {})
        self.trust = trust or SensorTrust()

    def plan(self, robot: RobotState, grid, rng: np.random.Generator, bayes: BayesGrid | None = None) -> PlanResult:
        cfg = self.config
        snapshot = grid if isinstance(grid, FieldSnapshot) else FieldSnapshot(grid, self.trust)
        commands = sample_commands(robot, cfg, rng)
        traces = sweep_many(robot, commands, cfg.horizon, _cell_size(grid, bayes))
        evals = [evaluate(t, snapshot, cfg, robot, c, self.mass_pdfs, bayes) for t, c in zip(traces, commands)]
        cmd, ev = select(commands, evals, cfg)
        return PlanResult(cmd, ev, sum(e.feasible for e in evals), commands, evals, traces)


def _cell_size(grid, bayes):
    if isinstance(grid, FieldSnapshot):
        return math.sqrt(grid.cell_area)
    if grid is not None:
        return grid.cell_size
    return bayes.cell_size
