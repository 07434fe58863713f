import numpy as np

from lambdafield.field import GridConfig, LambdaGrid
from lambdafield.risk import PathTrace


def grid_with_lambdas(lams, labels=None, config=None):
    """Grid whose first row holds cells with the given intensities.

    Counters are set to one miss and ``expm1(e * lambda)`` hits, which the
    closed form maps back to ``lambda``. Returns the grid and the global
    indices of the cells, in order.
    """
    cfg = config or GridConfig(width=max(16, len(lams) + 2), height=16)
    g = LambdaGrid(cfg)
    n = len(lams)
    e = cfg.default_error_area
    g.misses[0, :n] = 1.0
    g.hits[0, :n] = np.expm1(e * np.asarray(lams, dtype=float))
    g.inv_error_sum[0, :n] = g.hits[0, :n] / e
    if labels is not None:
        g.mass_label[0, :n] = labels
    cells = [(int(g.anchor[0] + i), int(g.anchor[1])) for i in range(n)]
    return g, cells


def straight_trace(cells, speeds, headings=None, width=0.1, step=0.1):
    n = len(cells)
    headings = np.zeros(n) if headings is None else headings
    return PathTrace(np.arange(n) * step, [[c] for c in cells], width, speeds, headings)
