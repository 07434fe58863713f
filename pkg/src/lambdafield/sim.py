"""Deterministic 2D world, lidar and robot kinematics.

Worlds live on the same lattice as the maps: world cell ``(ix, iy)`` covers
``[ix*S, (ix+1)*S) x [iy*S, (iy+1)*S)``. Everything outside the declared map
is free space. The mapper only ever sees the world through beams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .field import Beam, SensorTrust
from .raster import quad_cells, traverse_many

# code -> (fill ratio, label, normal or None)
DEFAULT_CODES = {
    ".": (0.0, "free", None),
    "#": (1.0, "wall", None),
    "g": (0.3, "grass", None),
    "b": (0.6, "bush", None),
    "t": (1.0, "tree", None),
    "f": (0.5, "fence", None),
}

# labels the robot can drive through
PASSABLE = frozenset({"free", "grass"})


class WorldFormatError(ValueError):
    pass


@dataclass
class World:
    """Ground truth: per-cell fill ratio, label and optional surface normal.

    Arrays are indexed ``[iy, ix]`` with ``iy = 0`` the bottom row. ``labels``
    lists label names; ``label`` stores indices into it.
    """

    cell_size: float
    fill: np.ndarray
    label: np.ndarray
    normal: np.ndarray
    labels: list

    def __post_init__(self):
        if np.any((self.fill < 0) | (self.fill > 1)):
            raise WorldFormatError("fill ratios must lie in [0, 1]")
        free = self.labels.index("free") if "free" in self.labels else -1
        if free >= 0 and np.any(self.fill[self.label == free] != 0):
            raise WorldFormatError("free cells must have fill ratio 0")

    @property
    def height(self) -> int:
        return self.fill.shape[0]

    @property
    def width(self) -> int:
        return self.fill.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.cell_size, self.height * self.cell_size

    def _gather(self, arr, cells, outside):
        cells = np.asarray(cells, dtype=np.int64)
        ix = cells[..., 0]
        iy = cells[..., 1]
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        out = np.full(ix.shape, outside, dtype=arr.dtype)
        out[inside] = arr[iy[inside], ix[inside]]
        return out

    def fill_at(self, cells) -> np.ndarray:
        return self._gather(self.fill, cells, 0.0)

    def normal_at(self, cells) -> np.ndarray:
        return self._gather(self.normal, cells, np.nan)

    def label_at(self, cells) -> np.ndarray:
        return self._gather(self.label, cells, self.labels.index("free") if "free" in self.labels else -1)

    def label_id(self, name: str) -> int:
        return self.labels.index(name)

    def solid_mask(self) -> np.ndarray:
        passable = [i for i, n in enumerate(self.labels) if n in PASSABLE]
        return ~np.isin(self.label, passable) & (self.fill > 0)

    def cells_with_label(self, name: str) -> np.ndarray:
        """Global indices ``(k, 2)`` of every cell carrying ``name``."""
        if name not in self.labels:
            return np.zeros((0, 2), dtype=np.int64)
        iy, ix = np.nonzero(self.label == self.labels.index(name))
        return np.stack([ix, iy], axis=1).astype(np.int64)


def parse_world(text: str, codes: dict | None = None, cell_size: float = 0.1) -> World:
    """Parse a world file.

    Header lines (before a line reading ``map``) are ``cell_size <S>`` or
    ``code <c> <fill> <label> [normal_rad]``; lines starting with ``;`` are
    comments. Every line after ``map`` is one map row, the first being the
    top of the world.
    """
    table = dict(DEFAULT_CODES)
    table.update(codes or {})
    lines = text.splitlines()
    try:
        start = next(i for i, ln in enumerate(lines) if ln.strip() == "map")
    except StopIteration:
        raise WorldFormatError("world file has no 'map' line") from None
    for n, raw in enumerate(lines[:start], 1):
        ln = raw.strip()
        if not ln or ln.startswith(";"):
            continue
        parts = ln.split()
        if parts[0] == "cell_size" and len(parts) == 2:
            cell_size = float(parts[1])
        elif parts[0] == "code" and len(parts) in (4, 5):
            c = parts[1]
            if len(c) != 1:
                raise WorldFormatError(f"line {n}: cell code must be one character, got {c!r}")
            normal = float(parts[4]) if len(parts) == 5 else None
            table[c] = (float(parts[2]), parts[3], normal)
        else:
            raise WorldFormatError(f"line {n}: cannot parse header line {raw!r}")
    rows = [ln.rstrip("\n") for ln in lines[start + 1 :] if ln.strip()]
    if not rows:
        raise WorldFormatError("world map is empty")
    width = max(len(r) for r in rows)
    height = len(rows)
    labels = ["free"]
    for fill_ratio, label, _ in table.values():
        if label not in labels:
            labels.append(label)
    fill = np.zeros((height, width))
    label = np.zeros((height, width), dtype=np.int64)
    normal = np.full((height, width), np.nan)
    for r, row in enumerate(rows):
        iy = height - 1 - r
        for ix, ch in enumerate(row.ljust(width, ".")):
            if ch not in table:
                raise WorldFormatError(f"map row {r + 1}: unknown cell code {ch!r}")
            f, name, nrm = table[ch]
            fill[iy, ix] = f
            label[iy, ix] = labels.index(name)
            if nrm is not None:
                normal[iy, ix] = nrm
    return World(cell_size, fill, label, normal, labels)


def load_world(path, codes: dict | None = None) -> World:
    return parse_world(Path(path).read_text(), codes)


# --------------------------------------------------------------------------
# robot


@dataclass
class RobotState:
    """Robot pose; ``position`` is the centre of the front edge."""

    position: np.ndarray
    heading: float = 0.0
    speed: float = 0.0
    mass: float = 50.0
    width: float = 0.6
    v_max: float = 0.5
    a_max: float = 0.05

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).copy()
        if not self.width > 0:
            raise ValueError("robot width must be positive")
        if not 0.0 <= self.speed <= self.v_max + 1e-12:
            raise ValueError(f"speed {self.speed} outside [0, {self.v_max}]")

    def copy(self) -> "RobotState":
        return replace(self, position=self.position.copy())


@dataclass(frozen=True)
class Command:
    target_speed: float
    curvature: float
    duration: float = 3.0

    @property
    def is_stop(self) -> bool:
        return self.target_speed == 0.0


STOP = Command(0.0, 0.0)


def arc_displacement(heading: float, curvature: float, distance: float) -> tuple[float, float]:
    """Displacement after ``distance`` along a constant-curvature arc."""
    if abs(curvature * distance) < 1e-9:
        # second-order expansion avoids cancellation on nearly straight arcs
        turn = curvature * distance
        return (distance * (math.cos(heading) - 0.5 * turn * math.sin(heading)),
                distance * (math.sin(heading) + 0.5 * turn * math.cos(heading)))
    return ((math.sin(heading + curvature * distance) - math.sin(heading)) / curvature,
            (math.cos(heading) - math.cos(heading + curvature * distance)) / curvature)


def slew(speed: float, target: float, a_max: float, dt: float) -> tuple[float, float]:
    """New speed and distance travelled while slewing toward ``target`` for ``dt``."""
    gap = target - speed
    t_reach = abs(gap) / a_max if a_max > 0 else math.inf
    if t_reach >= dt:
        new = speed + math.copysign(a_max * dt, gap) if gap else speed
        return new, 0.5 * (speed + new) * dt
    return target, 0.5 * (speed + target) * t_reach + target * (dt - t_reach)


def step(robot: RobotState, command: Command, dt: float) -> RobotState:
    """Advance the robot by ``dt`` seconds under ``command``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    target = min(max(command.target_speed, 0.0), robot.v_max)
    speed, dist = slew(robot.speed, target, robot.a_max, dt)
    dx, dy = arc_displacement(robot.heading, command.curvature, dist)
    out = robot.copy()
    out.position = robot.position + (dx, dy)
    out.heading = robot.heading + command.curvature * dist
    out.speed = min(max(speed, 0.0), robot.v_max)
    return out


def front_segment(position, heading: float, width: float) -> np.ndarray:
    """Endpoints ``(2, 2)`` of the robot front, left then right."""
    n = np.array([-math.sin(heading), math.cos(heading)]) * (width / 2)
    p = np.asarray(position, dtype=float)
    return np.stack([p + n, p - n])


def swept_collision(world: World, before: RobotState, after: RobotState) -> bool:
    """True if the front, moving between two poses, overlaps a solid cell."""
    a = front_segment(before.position, before.heading, before.width)
    b = front_segment(after.position, after.heading, after.width)
    quad = np.array([[a[0], a[1], b[1], b[0]]])
    if np.allclose(a, b):
        # stationary: test a thin box around the front
        d = np.array([math.cos(before.heading), math.sin(before.heading)]) * 1e-6
        quad = np.array([[a[0] - d, a[1] - d, a[1] + d, a[0] + d]])
    _, cells = quad_cells(quad, world.cell_size)
    if cells.shape[0] == 0:
        return False
    solid = world.solid_mask()
    ix, iy = cells[:, 0], cells[:, 1]
    inside = (ix >= 0) & (ix < world.width) & (iy >= 0) & (iy < world.height)
    return bool(np.any(solid[iy[inside], ix[inside]]))


# --------------------------------------------------------------------------
# lidar


@dataclass(frozen=True)
class LidarSpec:
    beam_count: int = 541
    fov: float = math.radians(270.0)
    max_range: float = 20.0
    scan_rate: float = 25.0
    error_area: float = 0.01
    trust: SensorTrust = field(default_factory=SensorTrust)
    rng_seed: int = 0

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be at least 1")
        if not self.max_range > 0 or not self.scan_rate > 0:
            raise ValueError("max_range and scan_rate must be positive")

    def angles(self) -> np.ndarray:
        if self.beam_count == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2, self.fov / 2, self.beam_count)

    def scan_rng(self, scan_index: int) -> np.random.Generator:
        return np.random.default_rng([self.rng_seed, scan_index])


@dataclass
class ScanData:
    """One scan in array form (what the mapper consumes)."""

    origins: np.ndarray
    endpoints: np.ndarray
    hits: np.ndarray
    normals: np.ndarray
    error_area: float
    physical: np.ndarray  # ground-truth interception, for diagnostics

    def beams(self) -> list[Beam]:
        out = []
        for k in range(self.hits.shape[0]):
            nrm = float(self.normals[k]) if np.isfinite(self.normals[k]) else None
            out.append(Beam(tuple(self.origins[k]), tuple(self.endpoints[k]), bool(self.hits[k]),
                            self.error_area, normal=nrm))
        return out


def cast_rays(world: World, origin, directions, spec: LidarSpec, rng: np.random.Generator) -> ScanData:
    """Cast one ray per direction (radians) from ``origin``."""
    directions = np.asarray(directions, dtype=float).reshape(-1)
    n = directions.shape[0]
    unit = np.stack([np.cos(directions), np.sin(directions)], axis=1)
    origins = np.tile(np.asarray(origin, dtype=float), (n, 1))
    far = origins + spec.max_range * unit
    cells, t_mid, valid, t_in = traverse_many(origins, far, world.cell_size, with_entry=True)

    # one interception draw per crossed cell; declared normals make grazing
    # rays slip through
    fill = world.fill_at(cells) if cells.size else np.zeros(valid.shape)
    nrm = world.normal_at(cells) if cells.size else np.full(valid.shape, np.nan)
    facing = np.where(np.isnan(nrm), 1.0, np.abs(np.cos(directions[:, None] - np.nan_to_num(nrm))))
    u = rng.random(valid.shape)
    intercept = valid & (u < fill * facing)
    physical = intercept.any(axis=1)
    first = np.argmax(intercept, axis=1)
    n_valid = valid.sum(axis=1)

    reads_hit = rng.random(n) < spec.trust.p_hit
    spurious = rng.random(n) >= spec.trust.p_miss
    spurious_slot = np.minimum((rng.random(n) * n_valid).astype(np.int64), np.maximum(n_valid - 1, 0))

    hits = (physical & reads_hit) | (~physical & spurious & (n_valid > 0))
    slot = np.where(physical, first, spurious_slot)
    if t_mid.shape[1]:
        # just past the entry into the intercepting cell: on the surface,
        # yet unambiguously inside the cell
        rows = np.arange(n)
        t_hit = t_in[rows, slot] + 1e-3 * (t_mid[rows, slot] - t_in[rows, slot])
    else:
        t_hit = np.zeros(n)
    endpoints = np.where(hits[:, None], origins + t_hit[:, None] * (far - origins), far)
    return ScanData(origins, endpoints, hits, np.full(n, np.nan), spec.error_area, physical)


def cast_beam(world: World, origin, direction: float, spec: LidarSpec, rng: np.random.Generator) -> Beam:
    return cast_rays(world, origin, [direction], spec, rng).beams()[0]


def estimate_normals(data: ScanData, max_gap: float) -> np.ndarray:
    """Surface normals at hit points from neighbouring hits, facing the sensor.

    A normal needs hits on both neighbouring beams within ``max_gap`` of the
    hit point; otherwise it stays unknown (NaN).
    """
    p = data.endpoints
    h = data.hits
    n = p.shape[0]
    out = np.full(n, np.nan)
    if n < 3:
        return out
    prev, nxt = p[:-2], p[2:]
    ok = h[1:-1] & h[:-2] & h[2:]
    ok &= np.hypot(*(prev - p[1:-1]).T) <= max_gap
    ok &= np.hypot(*(nxt - p[1:-1]).T) <= max_gap
    tangent = nxt - prev
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    to_sensor = data.origins[1:-1] - p[1:-1]
    flip = np.sum(normal * to_sensor, axis=1) < 0
    normal[flip] *= -1
    ok &= np.hypot(normal[:, 0], normal[:, 1]) > 0
    out[1:-1] = np.where(ok, np.arctan2(normal[:, 1], normal[:, 0]), np.nan)
    return out


def scan(world: World, robot: RobotState, spec: LidarSpec, rng: np.random.Generator,
         with_normals: bool = True) -> ScanData:
    """A full fan of ``beam_count`` beams centred on the robot heading."""
    data = cast_rays(world, robot.position, robot.heading + spec.angles(), spec, rng)
    if with_normals:
        data.normals = estimate_normals(data, max_gap=3 * world.cell_size)
    return data


def scan_beams(world: World, robot: RobotState, spec: LidarSpec, rng: np.random.Generator) -> list[Beam]:
    return scan(world, robot, spec, rng).beams()


# --------------------------------------------------------------------------
# camera labelling


def visible_labels(world: World, robot: RobotState, names, camera_range: float = 5.0,
                   camera_fov: float = math.radians(120.0)):
    """Cells in view whose ground-truth label is one of ``names``.

    Returns ``(cells (k, 2), label_names list)``: a stand-in for the semantic
    camera, which only tells the mapper what kind of obstacle a cell holds.
    """
    S = world.cell_size
    r = int(math.ceil(camera_range / S)) + 1
    cx, cy = (int(math.floor(c / S)) for c in robot.position)
    gy, gx = np.mgrid[cy - r : cy + r + 1, cx - r : cx + r + 1]
    centres = np.stack([(gx + 0.5) * S, (gy + 0.5) * S], axis=-1) - robot.position
    dist = np.hypot(centres[..., 0], centres[..., 1])
    bearing = np.arctan2(centres[..., 1], centres[..., 0]) - robot.heading
    bearing = (bearing + np.pi) % (2 * np.pi) - np.pi
    in_view = (dist <= camera_range) & (np.abs(bearing) <= camera_fov / 2)
    cells = np.stack([gx[in_view], gy[in_view]], axis=1)
    lab = world.label_at(cells)
    wanted = [world.labels.index(nm) for nm in names if nm in world.labels]
    keep = np.isin(lab, wanted)
    return cells[keep], [world.labels[i] for i in lab[keep]]
