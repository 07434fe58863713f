import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lambdafield.baseline import BayesGrid, BayesModel
from lambdafield.field import GridConfig, LambdaGrid, SensorTrust
from lambdafield.io import (
    GRID_COLUMNS,
    grid_image,
    read_csv_table,
    read_grid_csv,
    read_pgm,
    write_grid_csv,
    write_pgm,
    write_rows,
)

CFG = GridConfig(cell_size=0.1, width=12, height=8)


def scanned_grid(seed=0, n=60):
    rng = np.random.default_rng(seed)
    g = LambdaGrid(CFG, center=(0.0, 0.0))
    origins = np.zeros((n, 2))
    angles = rng.uniform(-math.pi, math.pi, n)
    ranges = rng.uniform(0.05, 0.45, n)
    ends = np.stack([np.cos(angles), np.sin(angles)], axis=1) * ranges[:, None]
    hits = rng.random(n) < 0.5
    g.integrate_beams(origins, ends, hits)
    return g


def test_pgm_values_and_orientation(tmp_path):
    g = LambdaGrid(CFG)
    bottom_left = (int(g.anchor[0]), int(g.anchor[1]))
    top_right = (int(g.anchor[0]) + CFG.width - 1, int(g.anchor[1]) + CFG.height - 1)
    g.hits[0, 0] = 3.0
    g.misses[0, 0] = 1.0
    g.misses[-1, -1] = 10.0
    write_pgm(tmp_path / "g.pgm", g)
    img = read_pgm(tmp_path / "g.pgm")
    assert img.shape == (CFG.height, CFG.width)
    lam = math.log(4.0) / CFG.default_error_area
    expected = round(255 * (1 - math.exp(-CFG.cell_area * lam)))
    # file rows run top to bottom, so the bottom-left cell is the last row
    assert g.cell(bottom_left).hits == 3.0
    assert img[-1, 0] == expected
    assert g.cell(top_right).misses == 10.0
    assert img[0, -1] == 0
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n12 8\n255\n")


def test_pgm_unmeasured_cells(tmp_path):
    g = LambdaGrid(CFG)
    b = BayesGrid.like(g)
    write_pgm(tmp_path / "l.pgm", g)
    write_pgm(tmp_path / "b.pgm", b)
    # the image shows the point estimate; only the upper bound flags ignorance
    assert (read_pgm(tmp_path / "l.pgm") == 0).all()
    assert (read_pgm(tmp_path / "b.pgm") == 128).all()


def test_read_pgm_rejects_other_formats(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "x.pgm")


def test_csv_hash_line_and_header(tmp_path):
    g = scanned_grid()
    write_grid_csv(tmp_path / "g.csv", g, "abc123", SensorTrust())
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "# scenario_hash=abc123"
    assert lines[1] == ",".join(GRID_COLUMNS)
    assert len(lines) == 2 + CFG.width * CFG.height
    h, header, rows = read_csv_table(tmp_path / "g.csv")
    assert h == "abc123" and tuple(header) == GRID_COLUMNS


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_csv_round_trip(tmp_path_factory, seed):
    tmp = tmp_path_factory.mktemp("rt")
    g = scanned_grid(seed)
    trust = SensorTrust(0.99, 0.9999)
    write_grid_csv(tmp / "g.csv", g, "h", trust)
    back = read_grid_csv(tmp / "g.csv", CFG)
    assert np.array_equal(back.anchor, g.anchor)
    assert np.array_equal(back.hits, g.hits)
    assert np.array_equal(back.misses, g.misses)
    assert np.array_equal(back.lambdas(), g.lambdas())
    for a, b in zip(back.bounds(trust), g.bounds(trust)):
        assert np.array_equal(a, b)


def test_csv_round_trip_keeps_normals(tmp_path):
    g = LambdaGrid(CFG)
    cell = (int(g.anchor[0]) + 2, int(g.anchor[1]) + 3)
    g._add_normal(cell, 0.7)
    write_grid_csv(tmp_path / "g.csv", g)
    back = read_grid_csv(tmp_path / "g.csv", CFG)
    assert back.cell(cell).normal_count == 1
    assert math.isclose(back.normals()[3, 2], 0.7, abs_tol=1e-12)
    assert np.isnan(back.normals()[0, 0])


def test_bayes_export_layout(tmp_path):
    b = BayesGrid(0.1, 4, 3, BayesModel.symmetric(0.7))
    b.update_cells([(int(b.anchor[0]), int(b.anchor[1]))], hit=True)
    write_grid_csv(tmp_path / "b.csv", b, "h")
    _, header, rows = read_csv_table(tmp_path / "b.csv")
    data = np.array(rows, dtype=float)
    assert np.isnan(data[:, [2, 3, 7]]).all()
    assert np.array_equal(data[:, 4], data[:, 5]) and np.array_equal(data[:, 4], data[:, 6])
    assert math.isclose(data[0, 4], 0.7)
    assert np.allclose(data[1:, 4], 0.5)
    with pytest.raises(ValueError):
        read_grid_csv(tmp_path / "b.csv")


def test_grid_image_matches_per_cell_probability():
    g = scanned_grid(3)
    img = grid_image(g)
    assert np.allclose(img, 1 - np.exp(-CFG.cell_area * g.lambdas()))


def test_write_rows_round_trips_floats(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, 12345.678901234567]
    write_rows(tmp_path / "r.csv", "h", ("name", "v"), [["a", v] for v in vals])
    _, header, rows = read_csv_table(tmp_path / "r.csv")
    assert header == ["name", "v"]
    assert [float(r[1]) for r in rows] == vals
