"""Grid export (binary PGM and CSV) and CSV import.

Both grid kinds share one CSV layout so that plots can treat them alike:
``x_index, y_index, h, m, lambda, lambda_L, lambda_U, normal``. For the
Bayesian grid the counters and the normal are NaN and the three value
columns all hold the occupancy. Every CSV starts with a
``# scenario_hash=<hex>`` comment line.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .baseline import BayesGrid
from .field import GridConfig, LambdaGrid, SensorTrust

GRID_COLUMNS = ("x_index", "y_index", "h", "m", "lambda", "lambda_L", "lambda_U", "normal")


def _pgm_bytes(values: np.ndarray) -> bytes:
    """P5 image of an ``[iy, ix]`` array in [0, 1]; the top row is the largest ``iy``."""
    img = np.clip(np.rint(255.0 * np.flipud(values)), 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def grid_image(grid) -> np.ndarray:
    """Per-cell collision probability (Lambda Field) or occupancy (Bayesian grid)."""
    if isinstance(grid, BayesGrid):
        return grid.occupancy()
    return -np.expm1(-grid.config.cell_area * grid.lambdas())


def write_pgm(path, grid) -> None:
    Path(path).write_bytes(_pgm_bytes(grid_image(grid)))


def read_pgm(path) -> np.ndarray:
    """Raw byte values of a P5 file, in file order (top row first)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM files are supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def _grid_rows(grid, trust: SensorTrust):
    iy, ix = np.indices((grid.height, grid.width))
    gx = (ix + grid.anchor[0]).ravel()
    gy = (iy + grid.anchor[1]).ravel()
    if isinstance(grid, BayesGrid):
        occ = grid.occupancy().ravel()
        nan = np.full(occ.shape, np.nan)
        return gx, gy, [nan, nan, occ, occ, occ, nan]
    lo, hi = grid.bounds(trust)
    cols = [grid.hits, grid.misses, grid.lambdas(), lo, hi, grid.normals()]
    return gx, gy, [c.ravel() for c in cols]


def write_csv_header(fh, scenario_hash: str, columns) -> None:
    fh.write(f"# scenario_hash={scenario_hash}\n")
    fh.write(",".join(columns) + "\n")


def write_grid_csv(path, grid, scenario_hash: str = "", trust: SensorTrust | None = None) -> None:
    """One row per cell, row-major from the bottom-left, floats written to round-trip."""
    gx, gy, cols = _grid_rows(grid, trust or SensorTrust())
    buf = _io.StringIO()
    write_csv_header(buf, scenario_hash, GRID_COLUMNS)
    table = np.column_stack([gx, gy] + cols)
    np.savetxt(buf, table, fmt=["%d", "%d"] + ["%.17g"] * len(cols), delimiter=",")
    Path(path).write_text(buf.getvalue())


def read_csv_table(path):
    """``(scenario_hash, header, rows)`` of a CSV written by this module."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# scenario_hash="):
        raise ValueError(f"{path}: missing scenario hash line")
    h = text[0].split("=", 1)[1]
    reader = csv.reader(text[1:])
    header = next(reader)
    return h, header, [row for row in reader]


def read_grid_csv(path, config: GridConfig | None = None) -> LambdaGrid:
    """Rebuild a Lambda Field from its CSV export.

    The grid extent comes from the indices in the file; ``config`` supplies
    the cell size, error area and bounds settings. Error-region weights are
    reconstructed assuming every hit used the default error area.
    """
    _, header, rows = read_csv_table(path)
    if tuple(header) != GRID_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    data = np.array(rows, dtype=float).reshape(-1, len(GRID_COLUMNS))
    gx = data[:, 0].astype(np.int64)
    gy = data[:, 1].astype(np.int64)
    if np.isnan(data[:, 2]).any():
        raise ValueError(f"{path}: counters missing, not a Lambda Field export")
    x0, y0 = gx.min(), gy.min()
    w, h = int(gx.max() - x0 + 1), int(gy.max() - y0 + 1)
    base = config or GridConfig()
    cfg = GridConfig(base.cell_size, w, h, base.lambda_max, base.z_score, base.default_error_area, base.error_mode)
    g = LambdaGrid(cfg)
    g.anchor = np.array([x0, y0], dtype=np.int64)
    ix, iy = gx - x0, gy - y0
    g.hits[iy, ix] = data[:, 2]
    g.misses[iy, ix] = data[:, 3]
    g.inv_error_sum[iy, ix] = data[:, 2] / cfg.default_error_area
    normal = data[:, 7]
    known = np.isfinite(normal)
    g.normal_cos[iy[known], ix[known]] = np.cos(normal[known])
    g.normal_sin[iy[known], ix[known]] = np.sin(normal[known])
    g.normal_count[iy[known], ix[known]] = 1
    return g


def write_rows(path, scenario_hash: str, columns, rows) -> None:
    """Generic CSV with the hash comment line; floats written with ``repr``."""
    buf = _io.StringIO()
    write_csv_header(buf, scenario_hash, columns)
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())
