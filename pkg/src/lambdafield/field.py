"""Lambda Field storage, estimation and queries.

The field is a robot-centred, unrotated grid of per-cell collision
intensities (1/m^2). Each cell keeps hit/miss counters from which the
intensity and its confidence bounds are computed on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .raster import traverse_many

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class GridConfig:
    cell_size: float = 0.1
    width: int = 200
    height: int = 200
    lambda_max: float = 1000.0
    z_score: float = 1.96
    default_error_area: float = 0.01
    error_mode: str = HOMOGENEOUS

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not self.lambda_max > 0:
            raise ValueError(f"lambda_max must be positive, got {self.lambda_max}")
        if not self.default_error_area > 0:
            raise ValueError(f"default_error_area must be positive, got {self.default_error_area}")
        if self.error_mode not in (HOMOGENEOUS, HETEROGENEOUS):
            raise ValueError(f"unknown error_mode {self.error_mode!r}")

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size


@dataclass(frozen=True)
class SensorTrust:
    """Probabilities that a 'hit' / 'miss' reading is right."""

    p_hit: float = 0.99
    p_miss: float = 0.9999

    def __post_init__(self):
        for name in ("p_hit", "p_miss"):
            p = getattr(self, name)
            if not 0.0 < p <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {p}")


@dataclass
class CellState:
    hits: float = 0.0
    misses: float = 0.0
    inv_error_sum: float = 0.0
    normal_cos_sum: float = 0.0
    normal_sin_sum: float = 0.0
    normal_count: int = 0
    mass_label: int = -1


@dataclass
class Beam:
    """A single range reading.

    ``error_cells`` lists the global cells of the error region for hits. In
    probabilistic mode ``membership`` maps candidate cells to the probability
    that the obstacle lies in them, and ``error_cells`` is ignored.
    """

    origin: tuple[float, float]
    endpoint: tuple[float, float]
    hit: bool
    error_area: float = 0.01
    error_cells: Sequence[tuple[int, int]] = ()
    membership: Mapping[tuple[int, int], float] | None = None
    normal: float | None = None


# --------------------------------------------------------------------------
# closed-form estimators (scalar or array)


def lambda_from_counts(hits, misses, error_area, lambda_max):
    """``min(lambda_max, ln(1 + h/m) / e)``; 0 without hits, cap without misses.

    Evaluated as the rate ``h / (e m)`` times the factor ``ln(1 + x) / x``
    (clipped to 1), so rounding can never push the closed form above the
    heterogeneous-region estimate ``sum(1/e_k) / m`` computed from the same
    counters.
    """
    h = np.asarray(hits, dtype=float)
    m = np.asarray(misses, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = h / m
        rate = (h / error_area) / m
        factor = np.where(x > 0, np.minimum(np.log1p(x) / x, 1.0), 1.0)
        lam = np.where(np.isfinite(rate) & np.isfinite(x), rate * factor, np.log1p(x) / error_area)
    lam = np.where(m > 0, lam, lambda_max)
    lam = np.where(h > 0, lam, 0.0)
    lam = np.minimum(lam, lambda_max)
    return lam if lam.ndim else float(lam)


def lambda_of(cell: CellState, config: GridConfig) -> float:
    return lambda_from_counts(cell.hits, cell.misses, config.default_error_area, config.lambda_max)


def lambda_heterogeneous_from(inv_error_sum, misses, lambda_max):
    s = np.asarray(inv_error_sum, dtype=float)
    m = np.asarray(misses, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lam = s / m
    lam = np.where(m > 0, lam, lambda_max)
    lam = np.where(s > 0, lam, 0.0)
    lam = np.minimum(lam, lambda_max)
    return lam if lam.ndim else float(lam)


def lambda_heterogeneous(cell: CellState, lambda_max: float = 1000.0) -> float:
    """Intensity when each hit carried its own error area (sum of 1/e_k over misses)."""
    return lambda_heterogeneous_from(cell.inv_error_sum, cell.misses, lambda_max)


def _lambda_from_fraction(k, total, error_area, lambda_max):
    # ln(K/(M-K) + 1) = -ln(1 - K/M)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = -np.log1p(-k / total) / error_area
    lam = np.where(k >= total, lambda_max, lam)
    return np.minimum(lam, lambda_max)


def bounds_from_counts(hits, misses, trust: SensorTrust, error_area, lambda_max, z=1.96):
    """Gaussian-approximated interval on the true hit count, mapped to lambda.

    Never-measured cells get ``(0, lambda_max)``.
    """
    h = np.asarray(hits, dtype=float)
    m = np.asarray(misses, dtype=float)
    total = h + m
    ph, pm = trust.p_hit, trust.p_miss
    mu = h * ph + m * (1.0 - pm)
    sigma = np.sqrt(h * ph * (1.0 - ph) + m * pm * (1.0 - pm))
    k_lo = np.maximum(mu - z * sigma, 0.0)
    k_hi = np.minimum(mu + z * sigma, total)
    measured = total > 0
    safe_total = np.where(measured, total, 1.0)
    lo = np.where(measured, _lambda_from_fraction(k_lo, safe_total, error_area, lambda_max), 0.0)
    hi = np.where(measured, _lambda_from_fraction(k_hi, safe_total, error_area, lambda_max), lambda_max)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def confidence_bounds(cell: CellState, trust: SensorTrust, config: GridConfig) -> tuple[float, float]:
    return bounds_from_counts(
        cell.hits, cell.misses, trust, config.default_error_area, config.lambda_max, config.z_score
    )


def collision_probability_from(lambdas, areas) -> float:
    """``1 - exp(-sum(area_i * lambda_i))``."""
    exponent = float(np.dot(np.asarray(areas, dtype=float), np.asarray(lambdas, dtype=float)))
    return -math.expm1(-exponent)


def update_normal(cell: CellState, theta: float) -> None:
    if not math.isfinite(theta):
        raise ValueError(f"normal angle must be finite, got {theta}")
    cell.normal_cos_sum += math.cos(theta)
    cell.normal_sin_sum += math.sin(theta)
    cell.normal_count += 1


def normal_from_sums(cos_sum: float, sin_sum: float, count: int) -> float | None:
    """Mean direction with the quadrant fix on the cosine sum; None if unknown."""
    if count == 0 or (cos_sum == 0.0 and sin_sum == 0.0):
        return None
    if cos_sum == 0.0:
        return math.copysign(math.pi / 2, sin_sum)
    angle = math.atan(sin_sum / cos_sum)
    if cos_sum < 0:
        angle += math.pi
    return angle


def normal_of(cell: CellState) -> float | None:
    return normal_from_sums(cell.normal_cos_sum, cell.normal_sin_sum, cell.normal_count)


def normals_from_sums(cos_sum: np.ndarray, sin_sum: np.ndarray, count: np.ndarray) -> np.ndarray:
    """Vectorised :func:`normal_from_sums`; NaN marks an unknown normal."""
    with np.errstate(divide="ignore", invalid="ignore"):
        angle = np.arctan(sin_sum / cos_sum)
    angle = np.where(cos_sum < 0, angle + np.pi, angle)
    angle = np.where(cos_sum == 0, np.copysign(np.pi / 2, sin_sum), angle)
    unknown = (count == 0) | ((cos_sum == 0) & (sin_sum == 0))
    return np.where(unknown, np.nan, angle)


def _block_start(coord, n):
    """First index of an ``n``-cell block centred on ``coord`` (cell units).

    The block always contains ``floor(coord)``: odd blocks are centred on
    that cell, even blocks on the lattice line nearest to the point.
    """
    odd = n % 2 == 1
    return np.where(odd, np.floor(coord) - (n - 1) // 2, np.floor(coord + 0.5) - n // 2).astype(np.int64)


def error_region(hit_point, error_area: float, cell_size: float) -> list[tuple[int, int]]:
    """Square block of cells of total area ~``error_area`` around the hit."""
    n = max(1, int(round(math.sqrt(error_area) / cell_size)))
    x0 = int(_block_start(hit_point[0] / cell_size, n))
    y0 = int(_block_start(hit_point[1] / cell_size, n))
    return [(x0 + i, y0 + j) for j in range(n) for i in range(n)]


# --------------------------------------------------------------------------
# robot-centred grid geometry


class RobotCenteredGrid:
    """Geometry and recentring shared by the Lambda Field and the Bayesian grid.

    ``anchor`` is the global lattice index of local cell (0, 0). Local arrays
    are indexed ``[iy, ix]``.
    """

    def __init__(self, cell_size: float, width: int, height: int, center=None):
        self.cell_size = float(cell_size)
        self.width = int(width)
        self.height = int(height)
        if center is None:
            # centre of lattice cell (0, 0): the offset starts at zero
            center = (0.5 * self.cell_size, 0.5 * self.cell_size)
        cx, cy = float(center[0]), float(center[1])
        self._half = np.array([self.width // 2, self.height // 2], dtype=np.int64)
        self.anchor = np.array(
            [math.floor(cx / self.cell_size), math.floor(cy / self.cell_size)], dtype=np.int64
        ) - self._half
        self.global_offset = np.array([cx, cy]) - self.origin

    @property
    def origin(self) -> np.ndarray:
        """World position of the centre of the grid's centre cell."""
        return (self.anchor + self._half + 0.5) * self.cell_size

    @property
    def robot_position(self) -> np.ndarray:
        return self.origin + self.global_offset

    def _arrays(self) -> dict[str, tuple[np.ndarray, float]]:
        raise NotImplementedError

    def recenter(self, displacement) -> tuple[int, int]:
        """Follow the robot by ``displacement`` (m); returns the whole-cell shift."""
        acc = self.global_offset + np.asarray(displacement, dtype=float)
        shift = np.floor(acc / self.cell_size + 0.5).astype(np.int64)
        self.global_offset = acc - shift * self.cell_size
        sx, sy = int(shift[0]), int(shift[1])
        if sx or sy:
            for name, (arr, fill) in self._arrays().items():
                setattr(self, name, _shifted(arr, sx, sy, fill))
            self.anchor = self.anchor + shift
        return sx, sy

    def to_local(self, cells) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Global ``(k, 2)`` cells -> ``(ix, iy, inside)`` local indices."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        ix = cells[:, 0] - self.anchor[0]
        iy = cells[:, 1] - self.anchor[1]
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        return ix, iy, inside

    def to_global(self, ix, iy) -> tuple[int, int]:
        return int(ix + self.anchor[0]), int(iy + self.anchor[1])

    def cell_of(self, point) -> tuple[int, int]:
        """Global lattice cell containing a world point."""
        return (math.floor(point[0] / self.cell_size), math.floor(point[1] / self.cell_size))


def _shifted(arr: np.ndarray, sx: int, sy: int, fill) -> np.ndarray:
    out = np.full_like(arr, fill)
    h, w = arr.shape
    if abs(sx) >= w or abs(sy) >= h:
        return out
    src_x = slice(max(sx, 0), w + min(sx, 0))
    dst_x = slice(max(-sx, 0), w + min(-sx, 0))
    src_y = slice(max(sy, 0), h + min(sy, 0))
    dst_y = slice(max(-sy, 0), h + min(-sy, 0))
    out[dst_y, dst_x] = arr[src_y, src_x]
    return out


def split_beams(origins, endpoints, hits, error_areas, cell_size):
    """Cells receiving a miss and cells forming the error region, per beam.

    Returns ``(miss_beam, miss_cells, hit_beam, hit_cells)`` where the
    ``*_beam`` arrays give the index of the beam each cell came from.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 2)
    endpoints = np.asarray(endpoints, dtype=float).reshape(-1, 2)
    hits = np.asarray(hits, dtype=bool).reshape(-1)
    error_areas = np.broadcast_to(np.asarray(error_areas, dtype=float), hits.shape)
    if np.any(np.all(origins == endpoints, axis=1)):
        raise ValueError("degenerate beam: origin equals endpoint")
    cells, _, valid = traverse_many(origins, endpoints, cell_size)

    # error region: n x n block around the endpoint
    n = np.maximum(1, np.rint(np.sqrt(error_areas) / cell_size)).astype(np.int64)
    ex = _block_start(endpoints[:, 0] / cell_size, n)
    ey = _block_start(endpoints[:, 1] / cell_size, n)

    if cells.shape[1]:
        in_region = (
            hits[:, None]
            & (cells[..., 0] >= ex[:, None])
            & (cells[..., 0] < (ex + n)[:, None])
            & (cells[..., 1] >= ey[:, None])
            & (cells[..., 1] < (ey + n)[:, None])
        )
        before = np.cumsum(in_region & valid, axis=1) == 0
        miss_mask = valid & before
        mb, ms = np.nonzero(miss_mask)
        miss_cells = cells[mb, ms]
    else:
        mb = np.zeros(0, dtype=np.int64)
        miss_cells = np.zeros((0, 2), dtype=np.int64)

    hit_idx = np.nonzero(hits)[0]
    hb_parts, hc_parts = [], []
    for size in np.unique(n[hit_idx]) if hit_idx.size else []:
        sel = hit_idx[n[hit_idx] == size]
        gy, gx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        block = np.stack([gx.ravel(), gy.ravel()], axis=1)
        base = np.stack([ex[sel], ey[sel]], axis=1)
        hb_parts.append(np.repeat(sel, block.shape[0]))
        hc_parts.append((base[:, None, :] + block[None, :, :]).reshape(-1, 2))
    if hb_parts:
        hb = np.concatenate(hb_parts)
        hc = np.concatenate(hc_parts)
        order = np.argsort(hb, kind="stable")
        hb, hc = hb[order], hc[order]
    else:
        hb = np.zeros(0, dtype=np.int64)
        hc = np.zeros((0, 2), dtype=np.int64)
    return mb, miss_cells, hb, hc


class LambdaGrid(RobotCenteredGrid):
    """Dense robot-centred Lambda Field."""

    def __init__(self, config: GridConfig = GridConfig(), center=None):
        super().__init__(config.cell_size, config.width, config.height, center)
        self.config = config
        shape = (config.height, config.width)
        self.hits = np.zeros(shape)
        self.misses = np.zeros(shape)
        self.inv_error_sum = np.zeros(shape)
        self.normal_cos = np.zeros(shape)
        self.normal_sin = np.zeros(shape)
        self.normal_count = np.zeros(shape, dtype=np.int64)
        self.mass_label = np.full(shape, -1, dtype=np.int64)

    def _arrays(self):
        return {
            "hits": (self.hits, 0.0),
            "misses": (self.misses, 0.0),
            "inv_error_sum": (self.inv_error_sum, 0.0),
            "normal_cos": (self.normal_cos, 0.0),
            "normal_sin": (self.normal_sin, 0.0),
            "normal_count": (self.normal_count, 0),
            "mass_label": (self.mass_label, -1),
        }

    # ---- per-cell access

    def cell(self, global_cell) -> CellState:
        ix, iy, inside = self.to_local([global_cell])
        if not inside[0]:
            return CellState()
        i, j = iy[0], ix[0]
        return CellState(
            hits=float(self.hits[i, j]),
            misses=float(self.misses[i, j]),
            inv_error_sum=float(self.inv_error_sum[i, j]),
            normal_cos_sum=float(self.normal_cos[i, j]),
            normal_sin_sum=float(self.normal_sin[i, j]),
            normal_count=int(self.normal_count[i, j]),
            mass_label=int(self.mass_label[i, j]),
        )

    def set_cell(self, global_cell, state: CellState) -> None:
        ix, iy, inside = self.to_local([global_cell])
        if not inside[0]:
            raise IndexError(f"cell {global_cell} is outside the grid")
        i, j = iy[0], ix[0]
        self.hits[i, j] = state.hits
        self.misses[i, j] = state.misses
        self.inv_error_sum[i, j] = state.inv_error_sum
        self.normal_cos[i, j] = state.normal_cos_sum
        self.normal_sin[i, j] = state.normal_sin_sum
        self.normal_count[i, j] = state.normal_count
        self.mass_label[i, j] = state.mass_label

    # ---- whole-grid estimates

    def lambdas(self) -> np.ndarray:
        c = self.config
        if c.error_mode == HETEROGENEOUS:
            return lambda_heterogeneous_from(self.inv_error_sum, self.misses, c.lambda_max)
        return lambda_from_counts(self.hits, self.misses, c.default_error_area, c.lambda_max)

    def bounds(self, trust: SensorTrust) -> tuple[np.ndarray, np.ndarray]:
        c = self.config
        return bounds_from_counts(
            self.hits, self.misses, trust, c.default_error_area, c.lambda_max, c.z_score
        )

    def normals(self) -> np.ndarray:
        return normals_from_sums(self.normal_cos, self.normal_sin, self.normal_count)

    def collision_probability(self, cells: Iterable[tuple[int, int]]) -> float:
        """Probability of at least one collision when crossing ``cells``."""
        cells = np.asarray(list(cells), dtype=np.int64).reshape(-1, 2)
        lam = self.lookup(self.lambdas(), cells, outside=0.0)
        return collision_probability_from(lam, np.full(lam.shape, self.config.cell_area))

    def lookup(self, values: np.ndarray, cells, outside):
        ix, iy, inside = self.to_local(cells)
        out = np.full(ix.shape, outside, dtype=values.dtype)
        out[inside] = values[iy[inside], ix[inside]]
        return out

    # ---- integration

    def integrate_beam(self, beam: Beam) -> None:
        if beam.membership is not None:
            self.integrate_beam_probabilistic(beam)
            return
        if tuple(beam.origin) == tuple(beam.endpoint):
            raise ValueError("degenerate beam: origin equals endpoint")
        error_cells = list(beam.error_cells)
        if beam.hit and not error_cells:
            error_cells = error_region(beam.endpoint, beam.error_area, self.cell_size)
        if beam.hit and self.cell_of(beam.endpoint) not in error_cells:
            raise ValueError("error region must contain the endpoint cell")
        region = set(error_cells) if beam.hit else set()
        crossed = traverse_cells(beam.origin, beam.endpoint, self.cell_size)
        misses = []
        for c in crossed:
            if c in region:
                break
            misses.append(c)
        self._add(self.misses, misses, 1.0)
        if beam.hit:
            self._add(self.hits, error_cells, 1.0)
            self._add(self.inv_error_sum, error_cells, 1.0 / beam.error_area)
            if beam.normal is not None:
                self._add_normal(self.cell_of(beam.endpoint), beam.normal)

    def integrate_beam_probabilistic(self, beam: Beam) -> None:
        """Soft error region: candidate cells get ``h += q`` and ``m += 1 - q``."""
        q = dict(beam.membership or {})
        for p in q.values():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"membership probability {p} outside [0, 1]")
        if beam.hit and not any(p > 0 for p in q.values()):
            raise ValueError("a hit must lie somewhere: all membership probabilities are 0")
        if tuple(beam.origin) == tuple(beam.endpoint):
            raise ValueError("degenerate beam: origin equals endpoint")
        crossed = traverse_cells(beam.origin, beam.endpoint, self.cell_size)
        misses = []
        for c in crossed:
            if c in q:
                break
            misses.append(c)
        self._add(self.misses, misses, 1.0)
        cells = list(q)
        weights = np.array([q[c] for c in cells], dtype=float)
        self._add(self.hits, cells, weights)
        self._add(self.misses, cells, 1.0 - weights)
        self._add(self.inv_error_sum, cells, weights / beam.error_area)

    def integrate_beams(self, origins, endpoints, hits, error_areas=None, normals=None, split=None) -> None:
        """Vectorised deterministic-region integration of a batch of beams.

        ``split`` may carry a precomputed :func:`split_beams` result for the
        same beams, so that several grids can share one traversal.
        """
        if error_areas is None:
            error_areas = self.config.default_error_area
        hits = np.asarray(hits, dtype=bool).reshape(-1)
        error_areas = np.broadcast_to(np.asarray(error_areas, dtype=float), hits.shape)
        if split is None:
            split = split_beams(origins, endpoints, hits, error_areas, self.cell_size)
        mb, miss_cells, hb, hit_cells = split
        self._add(self.misses, miss_cells, 1.0)
        self._add(self.hits, hit_cells, 1.0)
        self._add(self.inv_error_sum, hit_cells, 1.0 / error_areas[hb])
        if normals is not None:
            normals = np.asarray(normals, dtype=float).reshape(-1)
            endpoints = np.asarray(endpoints, dtype=float).reshape(-1, 2)
            sel = hits & np.isfinite(normals)
            if sel.any():
                cells = np.floor(endpoints[sel] / self.cell_size).astype(np.int64)
                ix, iy, inside = self.to_local(cells)
                th = normals[sel][inside]
                np.add.at(self.normal_cos, (iy[inside], ix[inside]), np.cos(th))
                np.add.at(self.normal_sin, (iy[inside], ix[inside]), np.sin(th))
                np.add.at(self.normal_count, (iy[inside], ix[inside]), 1)

    def _add(self, arr, cells, value) -> None:
        if len(cells) == 0:
            return
        ix, iy, inside = self.to_local(cells)
        v = np.broadcast_to(np.asarray(value, dtype=float), ix.shape)[inside]
        flat = iy[inside] * self.width + ix[inside]
        arr += np.bincount(flat, weights=v, minlength=arr.size).reshape(arr.shape)

    def _add_normal(self, global_cell, theta: float) -> None:
        ix, iy, inside = self.to_local([global_cell])
        if inside[0]:
            self.normal_cos[iy[0], ix[0]] += math.cos(theta)
            self.normal_sin[iy[0], ix[0]] += math.sin(theta)
            self.normal_count[iy[0], ix[0]] += 1

    def set_labels(self, cells, labels) -> None:
        ix, iy, inside = self.to_local(cells)
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), ix.shape)
        self.mass_label[iy[inside], ix[inside]] = labels[inside]

    def snapshot(self) -> "LambdaGrid":
        other = LambdaGrid.__new__(LambdaGrid)
        other.__dict__.update(self.__dict__)
        for name in self._arrays():
            setattr(other, name, getattr(self, name).copy())
        other.anchor = self.anchor.copy()
        other.global_offset = self.global_offset.copy()
        return other


def traverse_cells(p0, p1, cell_size: float) -> list[tuple[int, int]]:
    from .raster import supercover

    return supercover(p0, p1, cell_size)


def collision_probability(grid: LambdaGrid, cells) -> float:
    return grid.collision_probability(cells)


def integrate_beam(grid: LambdaGrid, beam: Beam) -> LambdaGrid:
    grid.integrate_beam(beam)
    return grid


def integrate_beam_probabilistic(grid: LambdaGrid, beam: Beam) -> LambdaGrid:
    grid.integrate_beam_probabilistic(beam)
    return grid


def recenter(grid: RobotCenteredGrid, displacement) -> RobotCenteredGrid:
    grid.recenter(displacement)
    return grid
