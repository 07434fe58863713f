"""Log-odds occupancy grid and the analyses that compare it with the Lambda Field.

The Bayesian grid receives exactly the same per-cell evidence as the Lambda
Field (misses on crossed cells, hits on the error region), so differences
come from the representation alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .field import RobotCenteredGrid, split_beams

DEFAULT_CLAMP = 10.0


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def occupancy_from_log_odds(log_odds):
    """``1 - 1 / (1 + exp(l))``, without overflow and accurate for tiny occupancies."""
    ell = np.asarray(log_odds, dtype=float)
    t = np.exp(-np.abs(ell))
    out = np.where(ell >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BayesModel:
    """Inverse sensor model in log-odds form.

    ``l_o`` is added on a hit and ``l_f`` on a miss; updates are clamped to
    ``[-clamp, clamp]``.
    """

    l_o: float = logit(0.7)
    l_f: float = -logit(0.7)
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        if not self.clamp > 0:
            raise ValueError(f"clamp must be positive, got {self.clamp}")

    @classmethod
    def from_probabilities(cls, p_occ_given_hit: float, p_occ_given_miss: float, clamp=DEFAULT_CLAMP):
        return cls(logit(p_occ_given_hit), logit(p_occ_given_miss), clamp)

    @classmethod
    def symmetric(cls, p_occ_given_hit: float = 0.7, clamp=DEFAULT_CLAMP):
        lo = logit(p_occ_given_hit)
        return cls(lo, -lo, clamp)

    @property
    def informative(self) -> bool:
        return self.l_o > 0 > self.l_f


@dataclass
class BayesCell:
    log_odds: float = 0.0

    @property
    def occupancy(self) -> float:
        return occupancy_from_log_odds(self.log_odds)


def bayes_update(cell: BayesCell, hit: bool, model: BayesModel) -> BayesCell:
    step = model.l_o if hit else model.l_f
    cell.log_odds = min(max(cell.log_odds + step, -model.clamp), model.clamp)
    return cell


def limit_class(r: float, model: BayesModel) -> float:
    """Limit of the occupancy when a fraction ``r`` of readings are hits.

    The log odds grow like ``N * (r l_o + (1 - r) l_f)``: a positive drift
    sends the occupancy to 1, a negative one to 0, and a null drift keeps
    it at 1/2.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"fill ratio must lie in [0, 1], got {r}")
    drift = r * model.l_o + (1.0 - r) * model.l_f
    scale = abs(model.l_o) + abs(model.l_f)
    if abs(drift) <= 1e-12 * scale:
        return 0.5
    return 1.0 if drift > 0 else 0.0


def bayes_occupancy(hits, misses, model: BayesModel):
    """Unclamped occupancy after ``hits`` and ``misses`` readings (order-free)."""
    return occupancy_from_log_odds(np.asarray(hits) * model.l_o + np.asarray(misses) * model.l_f)


def lambda_occupancy(hits, misses, cell_area: float, error_area: float):
    """Collision probability of one cell from its counters: ``1 - (1 + h/m)^(-da/e)``."""
    h = np.asarray(hits, dtype=float)
    m = np.asarray(misses, dtype=float)
    out = -np.expm1(-(cell_area / error_area) * np.log1p(h / m))
    return out if out.ndim else float(out)


def recovery_slope_bayes(m: float, model: BayesModel) -> float:
    """d occupancy / d hits at zero hits, after ``m`` misses."""
    return model.l_o / (2.0 * (math.cosh(m * model.l_f) + 1.0))


def recovery_slope_lambda(m: float, cell_area: float, error_area: float) -> float:
    """d collision probability / d hits at zero hits, after ``m`` misses."""
    if m <= 0:
        raise ValueError("the slope needs at least one miss")
    return (cell_area / error_area) / m


# --------------------------------------------------------------------------
# conversions and path metrics


def occupancy_to_lambda(p, lambda_max: float = 1000.0):
    """Intensity of a unit-area cell with occupancy ``p`` (``-ln(1 - p)``), capped."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("occupancy must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        lam = np.minimum(-np.log1p(-p), lambda_max)
    return lam if lam.ndim else float(lam)


def lambda_to_occupancy(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("intensity must be nonnegative")
    p = -np.expm1(-lam)
    return p if p.ndim else float(p)


def reachability(occupancies, areas) -> float:
    """Width-aware reachability ``prod_i (1 - p_i)^(a_i)`` of a swept area."""
    p = np.asarray(occupancies, dtype=float)
    a = np.broadcast_to(np.asarray(areas, dtype=float), p.shape)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("occupancy must lie in [0, 1]")
    if np.any((p >= 1.0) & (a > 0)):
        return 0.0
    return float(np.exp(np.sum(a * np.log1p(-p))))


def time_reachability(p: float, length: float, speed: float) -> float:
    """Time-parametrized reachability ``(1 - p)^(l / v)`` of a homogeneous straight path.

    Kept only to show why it is unsuitable: it grows with the speed.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    return (1.0 - p) ** (length / speed)


def naive_joint_occupancy(occupancies) -> float:
    """Probability that at least one cell is occupied, cells treated as independent."""
    return float(1.0 - np.prod(1.0 - np.asarray(occupancies, dtype=float)))


def recall(grid, patches: Sequence[Iterable[tuple[int, int]]], flavor: str = "lambda"):
    """Mean and standard deviation over patches of the no-collision probability.

    ``grid`` is a :class:`BayesGrid` for ``flavor="bayes"`` and a Lambda
    Field for ``flavor="lambda"``. Lower means better detected.
    """
    if len(patches) == 0:
        raise ValueError("recall needs at least one patch")
    values = []
    if flavor == "bayes":
        occ = grid.occupancy()
        for patch in patches:
            p = grid.lookup(occ, list(patch), outside=0.5)
            values.append(float(np.prod(1.0 - p)))
    elif flavor == "lambda":
        lam = grid.lambdas()
        da = grid.config.cell_area
        for patch in patches:
            lp = grid.lookup(lam, list(patch), outside=0.0)
            values.append(math.exp(-da * float(np.sum(lp))))
    else:
        raise ValueError(f"unknown recall flavor {flavor!r}")
    v = np.asarray(values)
    return float(v.mean()), float(v.std())


# --------------------------------------------------------------------------
# the grid


class BayesGrid(RobotCenteredGrid):
    """Robot-centred log-odds occupancy grid on the same lattice as the Lambda Field."""

    def __init__(self, cell_size: float, width: int, height: int, model: BayesModel = BayesModel(),
                 center=None, error_area: float = 0.01):
        super().__init__(cell_size, width, height, center)
        self.model = model
        self.error_area = error_area
        self.log_odds = np.zeros((self.height, self.width))

    @classmethod
    def like(cls, lambda_grid, model: BayesModel = BayesModel()) -> "BayesGrid":
        cfg = lambda_grid.config
        g = cls(cfg.cell_size, cfg.width, cfg.height, model, error_area=cfg.default_error_area)
        g.anchor = lambda_grid.anchor.copy()
        g.global_offset = lambda_grid.global_offset.copy()
        return g

    def _arrays(self):
        return {"log_odds": (self.log_odds, 0.0)}

    def occupancy(self) -> np.ndarray:
        return occupancy_from_log_odds(self.log_odds)

    def cell(self, global_cell) -> BayesCell:
        ix, iy, inside = self.to_local([global_cell])
        if not inside[0]:
            return BayesCell()
        return BayesCell(float(self.log_odds[iy[0], ix[0]]))

    def lookup(self, values: np.ndarray, cells, outside):
        ix, iy, inside = self.to_local(cells)
        out = np.full(ix.shape, outside, dtype=values.dtype)
        out[inside] = values[iy[inside], ix[inside]]
        return out

    def update_cells(self, cells, hit: bool) -> None:
        """One reading per listed cell (duplicates apply repeatedly)."""
        if len(cells) == 0:
            return
        ix, iy, inside = self.to_local(cells)
        step = self.model.l_o if hit else self.model.l_f
        c = self.model.clamp
        for i, j in zip(iy[inside], ix[inside]):
            self.log_odds[i, j] = min(max(self.log_odds[i, j] + step, -c), c)

    def integrate_beams(self, origins, endpoints, hits, error_areas=None, split=None) -> None:
        """Apply a batch of beams: misses first, then hits, each clamped per reading."""
        if error_areas is None:
            error_areas = self.error_area
        if split is None:
            split = split_beams(origins, endpoints, hits, error_areas, self.cell_size)
        _, miss_cells, _, hit_cells = split
        self._apply(miss_cells, self.model.l_f)
        self._apply(hit_cells, self.model.l_o)

    def _apply(self, cells, step) -> None:
        if len(cells) == 0:
            return
        ix, iy, inside = self.to_local(cells)
        flat = iy[inside] * self.width + ix[inside]
        counts = np.bincount(flat, minlength=self.width * self.height).reshape(self.log_odds.shape)
        touched = counts > 0
        # repeated same-sign steps with clamping collapse to a single clamp
        c = self.model.clamp
        self.log_odds[touched] = np.clip(self.log_odds[touched] + counts[touched] * step, -c, c)
