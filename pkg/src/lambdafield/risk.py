"""Path risk over a Lambda Field.

A path is a sequence of cell groups discovered by the robot front. The
probability that the first (stopping) collision happens in the i-th cell is
``K_i = exp(-Lambda_{0:i-1}) * (1 - exp(-da * lambda_i * w_i))`` and a risk
expectation is ``sum_i K_i * r_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .field import LambdaGrid, SensorTrust

PLAIN = "plain"
MASS_WEIGHTED = "mass-weighted"


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class MassPdf:
    """Obstacle mass distribution: Dirac atoms at ``k * delta_m`` plus an infinite atom."""

    delta_m: float = 1.0
    atoms: tuple[tuple[int, float], ...] = ()
    alpha_inf: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((int(k), float(a)) for k, a in self.atoms))
        if not self.delta_m > 0:
            raise ValueError(f"delta_m must be positive, got {self.delta_m}")
        if self.alpha_inf < 0 or any(a < 0 for _, a in self.atoms):
            raise ValueError("mass probabilities must be nonnegative")
        if any(k < 0 for k, _ in self.atoms):
            raise ValueError("mass atom indices must be nonnegative")
        total = self.alpha_inf + sum(a for _, a in self.atoms)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mass probabilities sum to {total}, expected 1")

    @classmethod
    def worst_case(cls) -> "MassPdf":
        return cls(alpha_inf=1.0)

    @property
    def masses(self) -> np.ndarray:
        return np.array([k * self.delta_m for k, _ in self.atoms], dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([a for _, a in self.atoms], dtype=float)


def stopping_probability(pdf: MassPdf, m_max: float) -> float:
    """Probability that a collision stops the robot (mass strictly above ``m_max``)."""
    heavy = sum(a for k, a in pdf.atoms if k * pdf.delta_m > m_max)
    return min(1.0, pdf.alpha_inf + heavy)


def mass_momentum_factor(pdf: MassPdf, robot_mass: float, m_max: float, conditional: bool = True) -> float:
    """Coefficient ``c`` such that the mass risk of one cell is ``c * v_n``.

    With ``conditional`` the mass distribution is conditioned on the
    collision being a stopping one; otherwise every atom contributes with
    its unconditional weight.
    """
    c = 0.0
    for k, a in pdf.atoms:
        m = k * pdf.delta_m
        if conditional and not m > m_max:
            continue
        c += a * (robot_mass * m / (robot_mass + m))
    c += pdf.alpha_inf * robot_mass
    if conditional:
        p_stop = stopping_probability(pdf, m_max)
        return c / p_stop if p_stop > 0 else 0.0
    return c


@dataclass
class PathTrace:
    """Cells discovered by the robot front along a path.

    ``cells[g]`` is an ``(k, 2)`` array of global cell indices entered when
    the front reaches abscissa ``abscissa[g]``; ``speed`` and ``heading``
    give the robot state there.
    """

    abscissa: np.ndarray
    cells: list
    width: float
    speed: np.ndarray
    heading: np.ndarray

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float).reshape(-1)
        self.speed = np.asarray(self.speed, dtype=float).reshape(-1)
        self.heading = np.asarray(self.heading, dtype=float).reshape(-1)
        self.cells = [np.asarray(c, dtype=np.int64).reshape(-1, 2) for c in self.cells]
        g = self.abscissa.shape[0]
        if not (len(self.cells) == g == self.speed.shape[0] == self.heading.shape[0]):
            raise ValueError("trace groups, speeds and headings must have equal length")
        if g > 1 and np.any(np.diff(self.abscissa) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")

    @classmethod
    def empty(cls, width: float = 1.0) -> "PathTrace":
        return cls(np.zeros(0), [], width, np.zeros(0), np.zeros(0))

    @property
    def areas(self) -> np.ndarray:
        return self.width * self.abscissa

    def __len__(self) -> int:
        return len(self.cells)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All cells in traversal order and the group index of each."""
        if not self.cells:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        sizes = [c.shape[0] for c in self.cells]
        group = np.repeat(np.arange(len(sizes)), sizes)
        return np.concatenate(self.cells), group

    def is_duplicate_free(self) -> bool:
        cells, _ = self.flat()
        return np.unique(cells, axis=0).shape[0] == cells.shape[0]


@dataclass
class RiskReport:
    expected: float
    expected_lower: float
    expected_upper: float
    collision_probability: float

    def to_row(self, scenario_id: str, t: float) -> list:
        return [scenario_id, t, self.expected, self.expected_lower, self.expected_upper,
                self.collision_probability]


# --------------------------------------------------------------------------
# snapshot of the per-cell quantities risk needs


class FieldSnapshot:
    """Read-only view of a grid: point intensities, bounds, normals and labels.

    Cells outside the grid count as unmeasured: ``lambda = lambda_L = 0``,
    ``lambda_U = lambda_max``, unknown normal and worst-case mass.
    """

    def __init__(self, grid: LambdaGrid, trust: SensorTrust | None = None):
        self.trust = trust or SensorTrust()
        self.cell_area = grid.config.cell_area
        self.lambda_max = grid.config.lambda_max
        self.anchor = grid.anchor.copy()
        self.shape = grid.hits.shape
        self.lam = grid.lambdas()
        self.lam_lo, self.lam_hi = grid.bounds(self.trust)
        self.normal = grid.normals()
        self.label = grid.mass_label.copy()

    def _take(self, arr, cells, outside):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        ix = cells[:, 0] - self.anchor[0]
        iy = cells[:, 1] - self.anchor[1]
        inside = (ix >= 0) & (ix < self.shape[1]) & (iy >= 0) & (iy < self.shape[0])
        out = np.full(ix.shape, outside, dtype=arr.dtype)
        out[inside] = arr[iy[inside], ix[inside]]
        return out

    def intensities(self, cells, which: str = "point") -> np.ndarray:
        if which == "point":
            return self._take(self.lam, cells, 0.0)
        if which == "lower":
            return self._take(self.lam_lo, cells, 0.0)
        if which == "upper":
            return self._take(self.lam_hi, cells, self.lambda_max)
        raise ValueError(f"unknown intensity estimate {which!r}")

    def normals(self, cells) -> np.ndarray:
        return self._take(self.normal, cells, np.nan)

    def labels(self, cells) -> np.ndarray:
        return self._take(self.label, cells, -1)


def as_snapshot(grid, trust: SensorTrust | None = None) -> FieldSnapshot:
    if isinstance(grid, FieldSnapshot):
        return grid
    return FieldSnapshot(grid, trust)


# --------------------------------------------------------------------------
# path coefficients and expectations


def first_event_weights(exponents: np.ndarray) -> np.ndarray:
    """``K_i`` from the per-cell exponents ``da * lambda_i * w_i``."""
    mu = np.asarray(exponents, dtype=float)
    before = np.concatenate([[0.0], np.cumsum(mu)[:-1]])
    return np.exp(-before) * -np.expm1(-mu)


def _expectation(k: np.ndarray, r: np.ndarray) -> float:
    return float(np.sum(k * r))


def _stop_weights(labels: np.ndarray, pdfs: Mapping[int, MassPdf] | None, m_max: float) -> np.ndarray:
    pdfs = pdfs or {}
    w = np.ones(labels.shape)
    for label, pdf in pdfs.items():
        sel = labels == label
        if sel.any():
            w[sel] = stopping_probability(pdf, m_max)
    return w


def path_coefficients(
    trace: PathTrace,
    grid,
    intensity_mode: str = PLAIN,
    *,
    which: str = "point",
    mass_pdfs: Mapping[int, MassPdf] | None = None,
    m_max: float = 0.0,
) -> np.ndarray:
    """First-collision probabilities ``K_i`` for every cell of ``trace``.

    In mass-weighted mode only collisions that stop the robot are counted:
    each intensity is thinned by the cell's stopping probability.
    """
    snap = as_snapshot(grid)
    cells, _ = trace.flat()
    lam = snap.intensities(cells, which)
    mu = snap.cell_area * lam
    if intensity_mode == MASS_WEIGHTED:
        mu = mu * _stop_weights(snap.labels(cells), mass_pdfs, m_max)
    elif intensity_mode != PLAIN:
        raise ValueError(f"unknown intensity mode {intensity_mode!r}")
    return first_event_weights(mu)


class RiskFunction:
    """Risk of a collision in a given cell at crossed area ``a``."""

    def __call__(self, a: float, cell, mass: float = math.inf) -> float:
        raise NotImplementedError

    def per_cell(self, trace: PathTrace, snap: FieldSnapshot) -> np.ndarray:
        cells, group = trace.flat()
        areas = trace.areas
        return np.array([self(areas[g], tuple(c)) for c, g in zip(cells, group)], dtype=float)


class ConstantRisk(RiskFunction):
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, a, cell, mass=math.inf):
        return self.value

    def per_cell(self, trace, snap):
        return np.full(trace.flat()[0].shape[0], self.value)


class MomentumRisk(RiskFunction):
    """Momentum lost at impact, using the velocity component along the obstacle normal."""

    def __init__(self, trace: PathTrace, grid, robot_mass: float):
        self.robot_mass = float(robot_mass)
        self.trace = trace
        snap = as_snapshot(grid)
        cells, group = trace.flat()
        self._index = {tuple(c): i for i, c in enumerate(cells.tolist())}
        self.normal_speed = normal_speeds(trace, snap)

    def __call__(self, a, cell, mass=math.inf):
        vn = self.normal_speed[self._index[tuple(cell)]]
        if math.isinf(mass):
            return self.robot_mass * vn
        return self.robot_mass * mass * vn / (self.robot_mass + mass)

    def per_cell(self, trace, snap):
        return self.robot_mass * self.normal_speed


def normal_speeds(trace: PathTrace, snap: FieldSnapshot) -> np.ndarray:
    """``|v cos(heading - normal)|`` per cell; unknown normals count as head-on."""
    cells, group = trace.flat()
    v = trace.speed[group]
    theta = trace.heading[group] - snap.normals(cells)
    cos = np.where(np.isnan(theta), 1.0, np.cos(theta))
    return np.abs(v * cos)


def momentum_risk(trace: PathTrace, grid, robot_mass: float) -> MomentumRisk:
    return MomentumRisk(trace, grid, robot_mass)


def _report(k_of, r: np.ndarray, mu_point: np.ndarray) -> RiskReport:
    return RiskReport(
        expected=_expectation(k_of("point"), r),
        expected_lower=_expectation(k_of("lower"), r),
        expected_upper=_expectation(k_of("upper"), r),
        collision_probability=float(-np.expm1(-np.sum(mu_point))),
    )


def expected_risk(trace: PathTrace, grid, r: RiskFunction, trust: SensorTrust | None = None) -> RiskReport:
    """Expected risk of ``r`` at the first collision, with point and bound intensities."""
    snap = as_snapshot(grid, trust)
    cells, _ = trace.flat()
    values = r.per_cell(trace, snap)

    def k_of(which):
        return first_event_weights(snap.cell_area * snap.intensities(cells, which))

    return _report(k_of, values, snap.cell_area * snap.intensities(cells, "point"))


def expected_mass_risk(
    trace: PathTrace,
    grid,
    robot_mass: float,
    m_max: float,
    mass_pdfs: Mapping[int, MassPdf] | None = None,
    trust: SensorTrust | None = None,
    conditional: bool = True,
) -> RiskReport:
    """Momentum lost at the first collision that stops the robot.

    ``mass_pdfs`` maps cell labels to mass distributions; unlabeled cells
    (and labels without an entry) are treated as immovable. The default
    ``conditional=True`` weights the masses by their distribution given that
    the collision stops the robot, which is what a first-stopping-collision
    simulation measures. ``conditional=False`` weights every atom by its
    unconditional probability instead.
    """
    if trace.speed.shape[0] != len(trace.cells):
        raise ValueError("trace has no velocity profile")
    snap = as_snapshot(grid, trust)
    cells, _ = trace.flat()
    labels = snap.labels(cells)
    pdfs = mass_pdfs or {}
    stop = np.ones(labels.shape)
    factor = np.full(labels.shape, mass_momentum_factor(MassPdf.worst_case(), robot_mass, m_max, conditional))
    for label, pdf in pdfs.items():
        sel = labels == label
        if sel.any():
            stop[sel] = stopping_probability(pdf, m_max)
            factor[sel] = mass_momentum_factor(pdf, robot_mass, m_max, conditional)
    values = factor * normal_speeds(trace, snap)

    def k_of(which):
        return first_event_weights(snap.cell_area * snap.intensities(cells, which) * stop)

    return _report(k_of, values, snap.cell_area * snap.intensities(cells, "point") * stop)
