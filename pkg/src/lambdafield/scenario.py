"""Scenario files: one INI file plus a world map.

Sections and keys (all optional except ``scenario.world`` and
``scenario.seed``)::

    [scenario]  name, world, duration, seed, stop_patience
    [robot]     x, y, heading_deg, speed, mass, width, v_max, a_max
    [lidar]     beams, fov_deg, max_range, rate, error_area
    [trust]     p_hit, p_miss
    [grid]      cell_size, width, height, lambda_max, z, error_mode
    [planner]   samples, duration, horizon, max_expected, max_upper,
                epsilon, goal, mode, kappa_max, m_max, goal_tolerance
    [bayes]     p_occ_hit, clamp
    [camera]    range, fov_deg
    [codes]     <code> = <fill ratio>
    [mass.<label>]  delta_m, atoms = "m:p, m:p", alpha_inf
    [fence]     oblique = "x y heading_deg", frontal = ..., oblique_time,
                frontal_time, patch_size, label

The world path is relative to the INI file.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import BayesModel
from .field import GridConfig, SensorTrust
from .planner import PlannerConfig
from .risk import MassPdf
from .sim import DEFAULT_CODES, LidarSpec, RobotState, World, WorldFormatError, parse_world


class ConfigError(ValueError):
    """A malformed scenario; the message names the offending field."""


@dataclass(frozen=True)
class FenceSetup:
    """Static viewing schedule of the fence-recall experiment."""

    oblique: tuple[float, float, float]
    frontal: tuple[float, float, float]
    oblique_time: float = 4.0
    frontal_time: float = 8.0
    patch_size: int = 3
    label: str = "fence"

    def __post_init__(self):
        if self.oblique_time < 0 or self.frontal_time < 0:
            raise ValueError("viewing times must be nonnegative")
        if self.patch_size < 1:
            raise ValueError("patch_size must be at least 1")


@dataclass
class Scenario:
    name: str
    world: World
    robot: RobotState
    lidar: LidarSpec
    grid: GridConfig
    trust: SensorTrust
    planner: PlannerConfig
    bayes: BayesModel
    mass_pdfs: dict = field(default_factory=dict)  # label name -> MassPdf
    duration: float = 60.0
    seed: int = 0
    stop_patience: int = 3
    camera_range: float = 5.0
    camera_fov: float = math.radians(120.0)
    fence: FenceSetup | None = None
    digest: str = ""

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed), lidar=replace(self.lidar, rng_seed=int(seed)),
                       digest=_digest(self.digest, f"seed={seed}"))

    def with_planner(self, **changes) -> "Scenario":
        extra = ",".join(f"{k}={v}" for k, v in sorted(changes.items()))
        return replace(self, planner=replace(self.planner, **changes), digest=_digest(self.digest, extra))

    def with_mass_pdf(self, label: str, pdf: MassPdf) -> "Scenario":
        pdfs = dict(self.mass_pdfs)
        pdfs[label] = pdf
        return replace(self, mass_pdfs=pdfs, digest=_digest(self.digest, f"mass.{label}={pdf}"))

    def label_pdfs(self) -> dict:
        """Mass distributions keyed by the world's integer label ids."""
        return {self.world.label_id(k): v for k, v in self.mass_pdfs.items() if k in self.world.labels}


def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()[:16]


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def get(self, section, key, conv, default=None, required=False):
        name = f"{section}.{key}"
        if not self.cp.has_option(section, key):
            if required:
                raise ConfigError(f"{name}: missing required field")
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: invalid value {raw!r} ({exc})") from None

    def build(self, name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{name}: {exc}") from None


def _int(raw: str) -> int:
    return int(raw.strip())


def _pair(raw: str) -> tuple[float, float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return float(parts[0]), float(parts[1])


def _triple(raw: str) -> tuple[float, float, float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError("expected three numbers")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _atoms(raw: str):
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        m, p = item.split(":")
        out.append((float(m), float(p)))
    return out


def parse_scenario(text: str, base_dir: Path | str = ".", world_text: str | None = None) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"scenario: {exc}") from None
    r = _Reader(cp)
    S = "scenario"
    seed = r.get(S, "seed", _int, required=True)
    if seed < 0:
        raise ConfigError("scenario.seed: must be nonnegative")
    world_file = r.get(S, "world", str, required=True)

    codes = dict(DEFAULT_CODES)
    if cp.has_section("codes"):
        for c, raw in cp.items("codes"):
            if len(c) != 1 or c not in codes:
                raise ConfigError(f"codes.{c}: unknown cell code")
            codes[c] = (r.get("codes", c, float), codes[c][1], codes[c][2])
    if world_text is None:
        path = Path(base_dir) / world_file
        if not path.is_file():
            raise ConfigError(f"scenario.world: file not found: {path}")
        world_text = path.read_text()
    try:
        world = parse_world(world_text, codes)
    except WorldFormatError as exc:
        raise ConfigError(f"scenario.world: {exc}") from None

    G = "grid"
    grid = r.build("grid", GridConfig,
                   cell_size=r.get(G, "cell_size", float, world.cell_size),
                   width=r.get(G, "width", _int, 200),
                   height=r.get(G, "height", _int, 200),
                   lambda_max=r.get(G, "lambda_max", float, 1000.0),
                   z_score=r.get(G, "z", float, 1.96),
                   default_error_area=r.get("lidar", "error_area", float, 0.01),
                   error_mode=r.get(G, "error_mode", str, "homogeneous"))
    if not math.isclose(grid.cell_size, world.cell_size):
        raise ConfigError("grid.cell_size: must equal the world cell size")

    trust = r.build("trust", SensorTrust, r.get("trust", "p_hit", float, 0.99),
                    r.get("trust", "p_miss", float, 0.9999))
    L = "lidar"
    lidar = r.build("lidar", LidarSpec,
                    beam_count=r.get(L, "beams", _int, 541),
                    fov=math.radians(r.get(L, "fov_deg", float, 270.0)),
                    max_range=r.get(L, "max_range", float, 20.0),
                    scan_rate=r.get(L, "rate", float, 25.0),
                    error_area=grid.default_error_area,
                    trust=trust, rng_seed=seed)
    R = "robot"
    robot = r.build("robot", RobotState,
                    np.array([r.get(R, "x", float, 0.0), r.get(R, "y", float, 0.0)]),
                    heading=math.radians(r.get(R, "heading_deg", float, 0.0)),
                    speed=r.get(R, "speed", float, 0.0),
                    mass=r.get(R, "mass", float, 50.0),
                    width=r.get(R, "width", float, 0.6),
                    v_max=r.get(R, "v_max", float, 0.5),
                    a_max=r.get(R, "a_max", float, 0.05))
    P = "planner"
    planner = r.build("planner", PlannerConfig,
                      samples=r.get(P, "samples", _int, 300),
                      duration=r.get(P, "duration", float, 3.0),
                      horizon=r.get(P, "horizon", float, 8.0),
                      max_expected=r.get(P, "max_expected", float, 0.0),
                      max_upper=r.get(P, "max_upper", float, 5.0),
                      epsilon=r.get(P, "epsilon", float, 0.1),
                      goal=r.get(P, "goal", _pair, required=True),
                      mode=r.get(P, "mode", str, "lambda"),
                      kappa_max=r.get(P, "kappa_max", float, 1.0),
                      m_max=r.get(P, "m_max", float, 1.0),
                      goal_tolerance=r.get(P, "goal_tolerance", float, 0.3))
    bayes = r.build("bayes", BayesModel.symmetric, r.get("bayes", "p_occ_hit", float, 0.7),
                    r.get("bayes", "clamp", float, 10.0))

    pdfs = {}
    for sec in cp.sections():
        if sec.startswith("mass."):
            label = sec[len("mass."):]
            pdfs[label] = r.build(sec, MassPdf,
                                  r.get(sec, "delta_m", float, 1.0),
                                  tuple(r.get(sec, "atoms", _atoms, [])),
                                  r.get(sec, "alpha_inf", float, 0.0))
    name = r.get(S, "name", str, "scenario")
    duration = r.get(S, "duration", float, 60.0)
    if not duration >= 0:
        raise ConfigError("scenario.duration: must be nonnegative")
    patience = r.get(S, "stop_patience", _int, 3)
    if patience < 1:
        raise ConfigError("scenario.stop_patience: must be at least 1")
    fence = None
    if cp.has_section("fence"):
        F = "fence"
        fence = r.build("fence", FenceSetup,
                        r.get(F, "oblique", _triple, required=True),
                        r.get(F, "frontal", _triple, required=True),
                        r.get(F, "oblique_time", float, 4.0),
                        r.get(F, "frontal_time", float, 8.0),
                        r.get(F, "patch_size", _int, 3),
                        r.get(F, "label", str, "fence"))
    return Scenario(
        name=name, world=world, robot=robot, lidar=lidar, grid=grid, trust=trust,
        planner=planner, bayes=bayes, mass_pdfs=pdfs, duration=duration, seed=seed,
        stop_patience=patience,
        camera_range=r.get("camera", "range", float, 5.0),
        camera_fov=math.radians(r.get("camera", "fov_deg", float, 120.0)),
        fence=fence,
        digest=_digest(text, world_text),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario: file not found: {path}")
    return parse_scenario(path.read_text(), path.parent)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (``tree``, ``grass``, ...)."""
    path = Path(__file__).parent / "scenarios" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"scenario: no bundled scenario named {name!r}")
    return path
