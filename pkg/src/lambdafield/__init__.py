"""Collision-intensity occupancy maps and risk-bounded navigation."""

from .field import (
    Beam,
    CellState,
    GridConfig,
    LambdaGrid,
    SensorTrust,
    collision_probability,
    confidence_bounds,
    integrate_beam,
    integrate_beam_probabilistic,
    lambda_heterogeneous,
    lambda_of,
    normal_of,
    recenter,
    update_normal,
)

__version__ = "0.1.0"
