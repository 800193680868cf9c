"""Uniform-grid spatial indices for walls and tree nodes.

Both indices are plain tuples of arrays so they can be handed to compiled
kernels directly::

    wall grid: (segs, cell_start, cell_items, x0, y0, cell, nx, ny)
    node grid: (cell_start, cell_nodes, x0, y0, cell, nx, ny)
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geometry import _point_seg_dist_nb, _seg_seg_dist_nb

# walls are registered with this much padding; clearance queries must not exceed it
WALL_PAD = 1.0


def build_wall_grid(segs: np.ndarray, bounds=None, cell: float = 2.0, pad: float = WALL_PAD):
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    if bounds is None:
        bounds = (0.0, 0.0, 1.0, 1.0)
    x0, y0, x1, y1 = bounds
    if len(segs):
        x0 = min(x0, float(segs[:, [0, 2]].min()))
        y0 = min(y0, float(segs[:, [1, 3]].min()))
        x1 = max(x1, float(segs[:, [0, 2]].max()))
        y1 = max(y1, float(segs[:, [1, 3]].max()))
    x0 -= pad
    y0 -= pad
    nx = max(1, int(math.ceil((x1 + pad - x0) / cell)))
    ny = max(1, int(math.ceil((y1 + pad - y0) / cell)))
    cstart, citems = _fill_wall_grid(segs, x0, y0, cell, nx, ny, pad)
    return (segs, cstart, citems, x0, y0, cell, nx, ny)


@njit(cache=True)
def _fill_wall_grid(segs, x0, y0, cell, nx, ny, pad):
    n = segs.shape[0]
    counts = np.zeros(nx * ny + 1, np.int64)
    for pass_ in range(2):
        if pass_ == 1:
            for i in range(nx * ny):
                counts[i + 1] += counts[i]
            items = np.empty(counts[nx * ny], np.int64)
            fill = counts.copy()
        for w in range(n):
            lo_x = min(segs[w, 0], segs[w, 2]) - pad
            hi_x = max(segs[w, 0], segs[w, 2]) + pad
            lo_y = min(segs[w, 1], segs[w, 3]) - pad
            hi_y = max(segs[w, 1], segs[w, 3]) + pad
            i0 = max(0, min(nx - 1, int((lo_x - x0) / cell)))
            i1 = max(0, min(nx - 1, int((hi_x - x0) / cell)))
            j0 = max(0, min(ny - 1, int((lo_y - y0) / cell)))
            j1 = max(0, min(ny - 1, int((hi_y - y0) / cell)))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    c = j * nx + i
                    if pass_ == 0:
                        counts[c + 1] += 1
                    else:
                        items[fill[c]] = w
                        fill[c] += 1
    return counts, items


@njit(cache=True)
def wg_seg_clear(wg, ax, ay, bx, by, clearance):
    """True when segment ab stays at least ``clearance`` away from every wall."""
    segs, cstart, citems, x0, y0, cell, nx, ny = wg
    if segs.shape[0] == 0:
        return True
    i0 = max(0, min(nx - 1, int((min(ax, bx) - x0) / cell)))
    i1 = max(0, min(nx - 1, int((max(ax, bx) - x0) / cell)))
    j0 = max(0, min(ny - 1, int((min(ay, by) - y0) / cell)))
    j1 = max(0, min(ny - 1, int((max(ay, by) - y0) / cell)))
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            c = j * nx + i
            for k in range(cstart[c], cstart[c + 1]):
                w = citems[k]
                d = _seg_seg_dist_nb(ax, ay, bx, by, segs[w, 0], segs[w, 1], segs[w, 2], segs[w, 3])
                if d < clearance:
                    return False
    return True


@njit(cache=True)
def wg_point_dist(wg, px, py, cap):
    """Distance from a point to the nearest wall, capped at ``cap`` (<= pad)."""
    segs, cstart, citems, x0, y0, cell, nx, ny = wg
    best = cap
    if segs.shape[0] == 0:
        return best
    i = max(0, min(nx - 1, int((px - x0) / cell)))
    j = max(0, min(ny - 1, int((py - y0) / cell)))
    c = j * nx + i
    for k in range(cstart[c], cstart[c + 1]):
        w = citems[k]
        d = _point_seg_dist_nb(px, py, segs[w, 0], segs[w, 1], segs[w, 2], segs[w, 3])
        if d < best:
            best = d
    return best


@njit(cache=True)
def wg_nearest_wall_point(wg, px, py, cap):
    """Closest point on any wall within ``cap``; returns (dist, qx, qy)."""
    segs, cstart, citems, x0, y0, cell, nx, ny = wg
    best = cap
    qx = px
    qy = py
    if segs.shape[0] == 0:
        return best, qx, qy
    i = max(0, min(nx - 1, int((px - x0) / cell)))
    j = max(0, min(ny - 1, int((py - y0) / cell)))
    c = j * nx + i
    for k in range(cstart[c], cstart[c + 1]):
        w = citems[k]
        ax = segs[w, 0]
        ay = segs[w, 1]
        dx = segs[w, 2] - ax
        dy = segs[w, 3] - ay
        l2 = dx * dx + dy * dy
        t = 0.0
        if l2 > 0.0:
            t = ((px - ax) * dx + (py - ay) * dy) / l2
            t = min(max(t, 0.0), 1.0)
        cx = ax + t * dx
        cy = ay + t * dy
        d = math.hypot(px - cx, py - cy)
        if d < best:
            best = d
            qx = cx
            qy = cy
    return best, qx, qy


# ---------------------------------------------------------------------------
# node grid (CSR, rebuilt only when a new tree is built)


def build_node_grid(pos: np.ndarray, bounds, cell: float):
    x0, y0, x1, y1 = bounds
    x0 -= cell
    y0 -= cell
    nx = max(1, int(math.ceil((x1 + cell - x0) / cell)))
    ny = max(1, int(math.ceil((y1 + cell - y0) / cell)))
    cstart, cnodes = _fill_node_grid(np.ascontiguousarray(pos), x0, y0, cell, nx, ny)
    return (cstart, cnodes, x0, y0, cell, nx, ny)


@njit(cache=True)
def _fill_node_grid(pos, x0, y0, cell, nx, ny):
    n = pos.shape[0]
    cid = np.empty(n, np.int64)
    counts = np.zeros(nx * ny + 1, np.int64)
    for k in range(n):
        i = max(0, min(nx - 1, int((pos[k, 0] - x0) / cell)))
        j = max(0, min(ny - 1, int((pos[k, 1] - y0) / cell)))
        cid[k] = j * nx + i
        counts[cid[k] + 1] += 1
    for c in range(nx * ny):
        counts[c + 1] += counts[c]
    fill = counts.copy()
    nodes = np.empty(n, np.int64)
    for k in range(n):
        nodes[fill[cid[k]]] = k
        fill[cid[k]] += 1
    return counts, nodes


@njit(cache=True)
def ng_query(ng, pos, px, py, r, out):
    """Write ids of nodes within ``r`` of (px, py) into ``out``; returns count."""
    cstart, cnodes, x0, y0, cell, nx, ny = ng
    i0 = max(0, min(nx - 1, int((px - r - x0) / cell)))
    i1 = max(0, min(nx - 1, int((px + r - x0) / cell)))
    j0 = max(0, min(ny - 1, int((py - r - y0) / cell)))
    j1 = max(0, min(ny - 1, int((py + r - y0) / cell)))
    m = 0
    r2 = r * r
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            c = j * nx + i
            for k in range(cstart[c], cstart[c + 1]):
                q = cnodes[k]
                dx = pos[q, 0] - px
                dy = pos[q, 1] - py
                if dx * dx + dy * dy <= r2:
                    if m < out.shape[0]:
                        out[m] = q
                        m += 1
    return m
