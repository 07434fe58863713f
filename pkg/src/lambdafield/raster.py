"""Grid traversal on the global cell lattice.

Cell ``(ix, iy)`` covers ``[ix*S, (ix+1)*S) x [iy*S, (iy+1)*S)`` in world
coordinates. A segment "crosses" a cell when it runs through the cell over a
positive length; grazing a corner or running along an edge does not count.
"""

from __future__ import annotations

import numpy as np

# Pieces shorter than this (in segment parameter) are corner artefacts.
_PIECE_EPS = 1e-12


def _line_crossings(start: np.ndarray, delta: np.ndarray, width: int) -> np.ndarray:
    """Parameters ``t in (0, 1)`` where ``start + t*delta`` hits an integer.

    ``start`` and ``delta`` are 1-D arrays (one entry per segment) expressed
    in cell units. Returns an array of shape ``(n, width)`` padded with inf.
    """
    n = start.shape[0]
    out = np.full((n, width), np.inf)
    if width == 0:
        return out
    end = start + delta
    lo = np.minimum(start, end)
    hi = np.maximum(start, end)
    first = np.floor(lo) + 1.0
    count = np.maximum(np.ceil(hi) - first, 0.0).astype(np.int64)
    count[delta == 0.0] = 0
    j = np.arange(width)
    valid = j[None, :] < count[:, None]
    forward = delta > 0
    # walk the crossed integers in the direction of travel
    k = np.where(
        forward[:, None],
        first[:, None] + j[None, :],
        (np.ceil(hi) - 1.0)[:, None] - j[None, :],
    )
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (k - start[:, None]) / delta[:, None]
    out[valid] = t[valid]
    return out


def traverse_many(origins: np.ndarray, endpoints: np.ndarray, cell_size: float,
                  with_entry: bool = False):
    """Supercover traversal of many segments at once.

    Returns ``(cells, t_mid, valid)`` with shapes ``(n, L, 2)``, ``(n, L)``
    and ``(n, L)``. Cells are ordered along each segment; ``t_mid`` is the
    segment parameter of the midpoint of the chord inside that cell. Invalid
    slots sit at the end of each row. With ``with_entry`` the parameter at
    which the segment enters each cell is appended as a fourth array.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    endpoints = np.atleast_2d(np.asarray(endpoints, dtype=float))
    p0 = origins / cell_size
    d = (endpoints - origins) / cell_size
    n = p0.shape[0]
    if n == 0:
        empty = (np.zeros((0, 0, 2), dtype=np.int64), np.zeros((0, 0)), np.zeros((0, 0), bool))
        return empty + (np.zeros((0, 0)),) if with_entry else empty

    span = np.abs(d)
    wx = int(np.ceil(span[:, 0].max())) + 1
    wy = int(np.ceil(span[:, 1].max())) + 1
    tx = _line_crossings(p0[:, 0], d[:, 0], wx)
    ty = _line_crossings(p0[:, 1], d[:, 1], wy)
    t = np.concatenate(
        [np.zeros((n, 1)), tx, ty, np.ones((n, 1))], axis=1
    )
    t.sort(axis=1)
    # ones are always present, so inf padding ends up after them
    a, b = t[:, :-1], t[:, 1:]
    with np.errstate(invalid="ignore"):
        keep = np.isfinite(b) & (b - a > _PIECE_EPS)
    t_mid = 0.5 * (a + b)

    # compact valid pieces to the front of each row, preserving order
    order = np.argsort(~keep, axis=1, kind="stable")
    keep = np.take_along_axis(keep, order, axis=1)
    t_mid = np.take_along_axis(t_mid, order, axis=1)
    length = int(keep.sum(axis=1).max()) if keep.size else 0
    keep = keep[:, :length]
    t_mid = np.where(keep, t_mid[:, :length], 0.0)

    pts = p0[:, None, :] + t_mid[:, :, None] * d[:, None, :]
    cells = np.floor(pts).astype(np.int64)
    if with_entry:
        t_in = np.take_along_axis(a, order, axis=1)[:, :length]
        return cells, t_mid, keep, np.where(keep, t_in, 0.0)
    return cells, t_mid, keep


def supercover(p0, p1, cell_size: float) -> list[tuple[int, int]]:
    """Cells crossed by the segment ``p0 -> p1``, in traversal order."""
    cells, _, valid = traverse_many(np.asarray([p0]), np.asarray([p1]), cell_size)
    if cells.shape[1] == 0:
        return []
    return [(int(c[0]), int(c[1])) for c in cells[0][valid[0]]]


def quad_cells(quads: np.ndarray, cell_size: float, eps: float = 1e-9):
    """Cells overlapping each convex quadrilateral with positive area.

    ``quads`` has shape ``(n, 4, 2)`` with vertices in boundary order.
    Returns ``(quad_index, cells)`` where ``cells`` is ``(k, 2)``; pairs are
    sorted by quad index, then row-major (``iy`` then ``ix``).
    """
    quads = np.asarray(quads, dtype=float) / cell_size
    n = quads.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
    lo = np.floor(quads.min(axis=1)).astype(np.int64)
    hi = np.ceil(quads.max(axis=1)).astype(np.int64)
    nx = int((hi[:, 0] - lo[:, 0]).max())
    ny = int((hi[:, 1] - lo[:, 1]).max())
    jy, jx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    jx = jx.ravel()
    jy = jy.ravel()
    cx = lo[:, 0, None] + jx[None, :]
    cy = lo[:, 1, None] + jy[None, :]
    inside_box = (cx < hi[:, 0, None]) & (cy < hi[:, 1, None])

    # separating axis test: cell axes first
    qmin = quads.min(axis=1)
    qmax = quads.max(axis=1)
    hit = inside_box
    hit &= (qmax[:, 0, None] > cx + eps) & (qmin[:, 0, None] < cx + 1 - eps)
    hit &= (qmax[:, 1, None] > cy + eps) & (qmin[:, 1, None] < cy + 1 - eps)

    # then the quad edge normals
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    for e in range(4):
        v0 = quads[:, e, :]
        v1 = quads[:, (e + 1) % 4, :]
        normal = np.stack([v1[:, 1] - v0[:, 1], v0[:, 0] - v1[:, 0]], axis=1)
        norm = np.hypot(normal[:, 0], normal[:, 1])
        degenerate = norm < 1e-15
        normal = normal / np.where(degenerate, 1.0, norm)[:, None]
        proj_q = np.einsum("nkd,nd->nk", quads, normal)
        q_lo = proj_q.min(axis=1)
        q_hi = proj_q.max(axis=1)
        base = cx * normal[:, 0, None] + cy * normal[:, 1, None]
        proj_c = corners @ normal.T  # (4, n)
        c_lo = base + proj_c.min(axis=0)[:, None]
        c_hi = base + proj_c.max(axis=0)[:, None]
        sep = (q_hi[:, None] <= c_lo + eps) | (c_hi <= q_lo[:, None] + eps)
        hit &= ~(sep & ~degenerate[:, None])

    qi, slot = np.nonzero(hit)
    cells = np.stack([cx[qi, slot], cy[qi, slot]], axis=1)
    return qi, cells
