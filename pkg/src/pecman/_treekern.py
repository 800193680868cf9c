"""Compiled kernels behind :mod:`pecman.tree`.

Trees are flat arrays: ``pos (n, 2)``, ``parent (n,)`` (-1 for none),
``cost (n,)`` (inf when not reachable from the root) and ``state (n,)``.
Edges are implicit: node ``v`` with parent ``p`` is an active edge when both
are ACTIVE.
"""

import heapq
import math

import numpy as np
from numba import njit

from .geometry import _point_seg_dist_nb, _seg_seg_dist_nb
from .spatial import ng_query, wg_point_dist, wg_seg_clear

ACTIVE = 0
PRUNED = 1
DISABLED = 2

COST_TOL = 1e-6


# ---------------------------------------------------------------------------
# RRT*


@njit(cache=True)
def _grid_cell(x, y, x0, y0, cell, nx, ny):
    i = int((x - x0) / cell)
    j = int((y - y0) / cell)
    i = max(0, min(nx - 1, i))
    j = max(0, min(ny - 1, j))
    return j * nx + i, i, j


@njit(cache=True)
def _nearest(pos, head, link, sx, sy, x0, y0, cell, nx, ny):
    _, ci, cj = _grid_cell(sx, sy, x0, y0, cell, nx, ny)
    best = -1
    bd = np.inf
    maxring = max(nx, ny)
    for ring in range(maxring + 1):
        for dj in range(-ring, ring + 1):
            j = cj + dj
            if j < 0 or j >= ny:
                continue
            edge_row = dj == -ring or dj == ring
            step = 1 if edge_row else 2 * ring
            if step == 0:
                step = 1
            di = -ring
            while di <= ring:
                i = ci + di
                if 0 <= i < nx:
                    q = head[j * nx + i]
                    while q >= 0:
                        d = math.hypot(pos[q, 0] - sx, pos[q, 1] - sy)
                        if d < bd:
                            bd = d
                            best = q
                        q = link[q]
                di += step
        if best >= 0 and bd <= ring * cell:
            break
    return best, bd


@njit(cache=True)
def _near(pos, head, link, sx, sy, r, x0, y0, cell, nx, ny, out):
    i0 = max(0, min(nx - 1, int((sx - r - x0) / cell)))
    i1 = max(0, min(nx - 1, int((sx + r - x0) / cell)))
    j0 = max(0, min(ny - 1, int((sy - r - y0) / cell)))
    j1 = max(0, min(ny - 1, int((sy + r - y0) / cell)))
    m = 0
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            q = head[j * nx + i]
            while q >= 0:
                if math.hypot(pos[q, 0] - sx, pos[q, 1] - sy) <= r and m < out.shape[0]:
                    out[m] = q
                    m += 1
                q = link[q]
    return m


@njit(cache=True)
def _unlink_child(v, parent, first, nsib, psib):
    p = parent[v]
    if p < 0:
        return
    if psib[v] >= 0:
        nsib[psib[v]] = nsib[v]
    else:
        first[p] = nsib[v]
    if nsib[v] >= 0:
        psib[nsib[v]] = psib[v]
    nsib[v] = -1
    psib[v] = -1


@njit(cache=True)
def _link_child(v, p, parent, first, nsib, psib):
    parent[v] = p
    psib[v] = -1
    nsib[v] = first[p]
    if first[p] >= 0:
        psib[first[p]] = v
    first[p] = v


@njit(cache=True)
def rrt_build(samples, goal_flags, rx, ry, gx, gy, step, gamma, wg, clearance, x0, y0, x1, y1):
    n_it = samples.shape[0]
    cap = n_it + 1
    pos = np.empty((cap, 2))
    parent = np.full(cap, -1, np.int64)
    cost = np.zeros(cap)
    first = np.full(cap, -1, np.int64)
    nsib = np.full(cap, -1, np.int64)
    psib = np.full(cap, -1, np.int64)
    cell = step
    gx0 = x0 - cell
    gy0 = y0 - cell
    nx = int((x1 - gx0) / cell) + 2
    ny = int((y1 - gy0) / cell) + 2
    head = np.full(nx * ny, -1, np.int64)
    link = np.full(cap, -1, np.int64)
    near = np.empty(1024, np.int64)
    stack = np.empty(cap, np.int64)

    pos[0, 0] = rx
    pos[0, 1] = ry
    c0, _, _ = _grid_cell(rx, ry, gx0, gy0, cell, nx, ny)
    head[c0] = 0
    n = 1
    goal_idx = -1
    for it in range(n_it):
        is_goal = goal_flags[it] and goal_idx < 0
        if is_goal:
            sx = gx
            sy = gy
        else:
            sx = samples[it, 0]
            sy = samples[it, 1]
        q, d = _nearest(pos, head, link, sx, sy, gx0, gy0, cell, nx, ny)
        if d < 1e-9:
            continue
        if d > step:
            nxp = pos[q, 0] + (sx - pos[q, 0]) / d * step
            nyp = pos[q, 1] + (sy - pos[q, 1]) / d * step
            is_goal = False
        else:
            nxp = sx
            nyp = sy
        if not wg_seg_clear(wg, pos[q, 0], pos[q, 1], nxp, nyp, clearance):
            continue
        r = min(gamma * math.sqrt(math.log(n + 1.0) / (n + 1.0)), step)
        m = _near(pos, head, link, nxp, nyp, r, gx0, gy0, cell, nx, ny, near)
        best = q
        bc = cost[q] + math.hypot(nxp - pos[q, 0], nyp - pos[q, 1])
        for t in range(m):
            j = near[t]
            if j == q:
                continue
            c = cost[j] + math.hypot(nxp - pos[j, 0], nyp - pos[j, 1])
            if c < bc and wg_seg_clear(wg, pos[j, 0], pos[j, 1], nxp, nyp, clearance):
                best = j
                bc = c
        k = n
        n += 1
        pos[k, 0] = nxp
        pos[k, 1] = nyp
        cost[k] = bc
        _link_child(k, best, parent, first, nsib, psib)
        ck, _, _ = _grid_cell(nxp, nyp, gx0, gy0, cell, nx, ny)
        link[k] = head[ck]
        head[ck] = k
        if is_goal:
            goal_idx = k
        # rewire
        for t in range(m):
            j = near[t]
            if j == best:
                continue
            c = bc + math.hypot(nxp - pos[j, 0], nyp - pos[j, 1])
            if c < cost[j] - 1e-12 and wg_seg_clear(wg, nxp, nyp, pos[j, 0], pos[j, 1], clearance):
                delta = c - cost[j]
                _unlink_child(j, parent, first, nsib, psib)
                _link_child(j, k, parent, first, nsib, psib)
                cost[j] = c
                sp = 0
                ch = first[j]
                while ch >= 0:
                    stack[sp] = ch
                    sp += 1
                    ch = nsib[ch]
                while sp > 0:
                    sp -= 1
                    u = stack[sp]
                    cost[u] += delta
                    ch = first[u]
                    while ch >= 0:
                        stack[sp] = ch
                        sp += 1
                        ch = nsib[ch]
    if goal_idx < 0 and n < cap:
        # last chance: connect the goal to the cheapest visible node within one step
        m = _near(pos, head, link, gx, gy, step, gx0, gy0, cell, nx, ny, near)
        best = -1
        bc = np.inf
        for t in range(m):
            j = near[t]
            c = cost[j] + math.hypot(gx - pos[j, 0], gy - pos[j, 1])
            if c < bc and wg_seg_clear(wg, pos[j, 0], pos[j, 1], gx, gy, clearance):
                best = j
                bc = c
        if best >= 0:
            k = n
            n += 1
            pos[k, 0] = gx
            pos[k, 1] = gy
            cost[k] = bc
            parent[k] = best
            goal_idx = k
    return pos[:n].copy(), parent[:n].copy(), goal_idx


# ---------------------------------------------------------------------------
# costs and traversal


@njit(cache=True)
def propagate(pos, parent, state, root):
    """Costs from ``root`` over active edges; unreachable nodes get inf.

    Each node's parent chain is walked until a node of known status, then
    costs are filled back down, so every node is visited O(1) times.
    """
    n = parent.shape[0]
    cost = np.full(n, np.inf)
    if root < 0 or state[root] != ACTIVE:
        return cost
    st = np.zeros(n, np.int8)  # 0 unknown, 1 reachable, 2 not
    cost[root] = 0.0
    st[root] = 1
    stack = np.empty(n + 1, np.int64)
    for v in range(n):
        if st[v] != 0:
            continue
        m = 0
        u = v
        res = 2
        while m <= n:
            if state[u] != ACTIVE:
                st[u] = 2
                break
            if st[u] != 0:
                res = st[u]
                break
            stack[m] = u
            m += 1
            p = parent[u]
            if p < 0:
                break
            u = p
        if res == 2:
            for i in range(m):
                st[stack[i]] = 2
            continue
        for i in range(m - 1, -1, -1):
            w = stack[i]
            p = parent[w]
            dx = pos[w, 0] - pos[p, 0]
            dy = pos[w, 1] - pos[p, 1]
            cost[w] = cost[p] + math.sqrt(dx * dx + dy * dy)
            st[w] = 1
    return cost


@njit(cache=True)
def path_to(parent, root, goal):
    """Node ids root..goal following parent links (empty if not connected)."""
    n = parent.shape[0]
    buf = np.empty(n, np.int64)
    m = 0
    u = goal
    while u >= 0 and m < n:
        buf[m] = u
        m += 1
        if u == root:
            break
        u = parent[u]
    if m == 0 or buf[m - 1] != root:
        return np.empty(0, np.int64)
    return buf[:m][::-1].copy()


@njit(cache=True)
def reroot(parent, new_root):
    prev = -1
    u = new_root
    guard = 0
    n = parent.shape[0]
    while u >= 0 and guard <= n:
        p = parent[u]
        parent[u] = prev
        prev = u
        u = p
        guard += 1


@njit(cache=True)
def _is_ancestor(parent, anc, node):
    """True if ``anc`` lies on the parent chain of ``node`` (inclusive)."""
    u = node
    guard = 0
    n = parent.shape[0]
    while u >= 0 and guard <= n:
        if u == anc:
            return True
        u = parent[u]
        guard += 1
    return False


@njit(cache=True)
def tree_dist(parent, cost, a, b, mark, stamp):
    u = b
    while u >= 0:
        mark[u] = stamp
        u = parent[u]
    u = a
    while u >= 0 and mark[u] != stamp:
        u = parent[u]
    if u < 0:
        return np.inf
    return cost[a] + cost[b] - 2.0 * cost[u]


@njit(cache=True)
def best_entry(pos, parent, state, cost, ng, wg, clearance, px, py, goal, radius, mark, stamp):
    """Cheapest node to join from (px, py): straight hop plus tree distance to goal."""
    buf = np.empty(4096, np.int64)
    m = ng_query(ng, pos, px, py, radius, buf)
    best = -1
    bs = np.inf
    for t in range(m):
        q = buf[t]
        if state[q] != ACTIVE or not np.isfinite(cost[q]):
            continue
        d = math.hypot(pos[q, 0] - px, pos[q, 1] - py)
        if d >= bs:
            continue
        td = tree_dist(parent, cost, q, goal, mark, stamp + t)
        s = d + td
        if s < bs and wg_seg_clear(wg, px, py, pos[q, 0], pos[q, 1], clearance):
            bs = s
            best = q
    return best, bs


# ---------------------------------------------------------------------------
# edge validity


@njit(cache=True)
def scan_edges(pos, parent, state, root, wg, clearance, mask, use_mask):
    """Flag non-pruned nodes whose own position or parent edge violates clearance."""
    n = parent.shape[0]
    bad_edge = np.zeros(n, np.bool_)
    bad_node = np.zeros(n, np.bool_)
    for v in range(n):
        if state[v] == PRUNED:
            continue
        if use_mask and not mask[v]:
            continue
        if v != root and wg_point_dist(wg, pos[v, 0], pos[v, 1], clearance) < clearance:
            bad_node[v] = True
            continue
        p = parent[v]
        if p >= 0 and state[p] != PRUNED:
            if not wg_seg_clear(wg, pos[p, 0], pos[p, 1], pos[v, 0], pos[v, 1], clearance):
                bad_edge[v] = True
    return bad_edge, bad_node


@njit(cache=True)
def prune(parent, state, bad_edge, bad_node):
    """Remove flagged edges and nodes; returns the number of edges removed."""
    n = parent.shape[0]
    removed = 0
    for v in range(n):
        if bad_node[v]:
            if parent[v] >= 0:
                removed += 1
            parent[v] = -1
            state[v] = PRUNED
    for v in range(n):
        if state[v] == PRUNED:
            continue
        p = parent[v]
        if p < 0:
            continue
        if bad_edge[v] or state[p] == PRUNED:
            parent[v] = -1
            removed += 1
    return removed


@njit(cache=True)
def corridor_mask(pos, parent, state, path, radius, step):
    """Nodes whose parent edge (or position) lies within ``radius`` of the polyline."""
    n = parent.shape[0]
    out = np.zeros(n, np.bool_)
    m = path.shape[0]
    if n == 0 or m == 0:
        return out
    nseg = max(m - 1, 1)
    reach = radius + step
    # coarse raster: a cell can only hold marked nodes if its centre is near the path
    x0 = pos[:, 0].min()
    y0 = pos[:, 1].min()
    cell = max(reach, 1.0)
    nx = int((pos[:, 0].max() - x0) / cell) + 1
    ny = int((pos[:, 1].max() - y0) / cell) + 1
    near = np.zeros((nx, ny), np.bool_)
    half = cell * 0.7072
    for i in range(nx):
        cx = x0 + (i + 0.5) * cell
        for j in range(ny):
            cy = y0 + (j + 0.5) * cell
            for k in range(nseg):
                kb = k + 1 if m > 1 else k
                if _point_seg_dist_nb(cx, cy, path[k, 0], path[k, 1], path[kb, 0], path[kb, 1]) <= reach + half:
                    near[i, j] = True
                    break
    for v in range(n):
        if state[v] == PRUNED:
            continue
        vx = pos[v, 0]
        vy = pos[v, 1]
        if not near[int((vx - x0) / cell), int((vy - y0) / cell)]:
            continue
        p = parent[v]
        for k in range(nseg):
            kb = k + 1 if m > 1 else k
            ax = path[k, 0]
            ay = path[k, 1]
            bx = path[kb, 0]
            by = path[kb, 1]
            if vx < min(ax, bx) - reach or vx > max(ax, bx) + reach:
                continue
            if vy < min(ay, by) - reach or vy > max(ay, by) + reach:
                continue
            # cheap reject on the node position first
            dn = _point_seg_dist_nb(vx, vy, ax, ay, bx, by)
            if dn <= radius:
                out[v] = True
                break
            if p >= 0 and dn <= reach:
                d = _seg_seg_dist_nb(pos[p, 0], pos[p, 1], vx, vy, ax, ay, bx, by)
                if d <= radius:
                    out[v] = True
                    break
    return out


@njit(cache=True)
def polyline_clear(path, wg, clearance):
    for k in range(path.shape[0] - 1):
        if not wg_seg_clear(wg, path[k, 0], path[k, 1], path[k + 1, 0], path[k + 1, 1], clearance):
            return False
    return True


@njit(cache=True)
def disc_region_mask(pos, state, cost, centers, radius):
    """Orphaned active nodes within ``radius`` of any of the (k, 2+) centers."""
    n = pos.shape[0]
    out = np.zeros(n, np.bool_)
    r2 = radius * radius
    for v in range(n):
        if state[v] != ACTIVE or np.isfinite(cost[v]):
            continue
        for k in range(centers.shape[0]):
            dx = pos[v, 0] - centers[k, 0]
            dy = pos[v, 1] - centers[k, 1]
            if dx * dx + dy * dy <= r2:
                out[v] = True
                break
    return out


@njit(cache=True)
def region_mask(pos, state, cost, segs, radius):
    """Orphaned active nodes within ``radius`` of any of the (n, 4) segments."""
    n = pos.shape[0]
    out = np.zeros(n, np.bool_)
    for v in range(n):
        if state[v] != ACTIVE or np.isfinite(cost[v]):
            continue
        for k in range(segs.shape[0]):
            if _point_seg_dist_nb(pos[v, 0], pos[v, 1], segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]) <= radius:
                out[v] = True
                break
    return out


# ---------------------------------------------------------------------------
# hot-node reconnection


@njit(cache=True)
def _edge_ok(pos, a, b, root, wg, clearance, ohz, droot):
    ax = pos[a, 0]
    ay = pos[a, 1]
    bx = pos[b, 0]
    by = pos[b, 1]
    if not wg_seg_clear(wg, ax, ay, bx, by, clearance):
        return False
    for k in range(ohz.shape[0]):
        lim = ohz[k, 2]
        if a == root or b == root:
            lim = min(lim, droot[k] - 1e-9)
        if _point_seg_dist_nb(ohz[k, 0], ohz[k, 1], ax, ay, bx, by) < lim:
            return False
    return True


@njit(cache=True)
def reconnect(pos, parent, state, cost, root, region, ng, wg, clearance, ohz, r_conn, target=-1):
    """Reattach orphaned subtrees at hot-nodes, cheapest joining edge first.

    With ``target >= 0`` the search stops as soon as the subtree holding
    ``target`` is attached (used for temporary detours, where only the goal's
    subtree matters).

    A subtree is reattached by re-rooting it at the hot-node (its internal
    edges are kept, only their direction changes). Afterwards every
    reattached node may switch to a cheaper visible parent (rewiring
    cascade). ``cost`` is updated for reattached nodes; callers re-propagate.
    Returns the number of subtrees reattached.
    """
    n = parent.shape[0]
    reach = np.isfinite(cost)
    orphan = np.zeros(n, np.bool_)
    for v in range(n):
        orphan[v] = state[v] == ACTIVE and not reach[v]
    droot = np.empty(ohz.shape[0])
    for k in range(ohz.shape[0]):
        droot[k] = math.hypot(pos[root, 0] - ohz[k, 0], pos[root, 1] - ohz[k, 1])

    # subtree labels
    comp = np.full(n, -1, np.int64)
    buf = np.empty(n + 1, np.int64)
    ncomp = 0
    for v in range(n):
        if not orphan[v] or comp[v] >= 0:
            continue
        m = 0
        u = v
        label = -1
        while m <= n:
            buf[m] = u
            m += 1
            p = parent[u]
            if p < 0 or not orphan[p]:
                label = ncomp
                ncomp += 1
                break
            if comp[p] >= 0:
                label = comp[p]
                break
            u = p
        if label < 0:
            # parent cycle; treat as its own subtree
            label = ncomp
            ncomp += 1
        for i in range(m):
            comp[buf[i]] = label
    if ncomp == 0:
        return 0

    # undirected adjacency inside subtrees
    deg = np.zeros(n + 1, np.int64)
    for v in range(n):
        p = parent[v]
        if orphan[v] and p >= 0 and orphan[p]:
            deg[v + 1] += 1
            deg[p + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    fill = deg.copy()
    adj = np.empty(max(deg[n], 1), np.int64)
    for v in range(n):
        p = parent[v]
        if orphan[v] and p >= 0 and orphan[p]:
            adj[fill[v]] = p
            fill[v] += 1
            adj[fill[p]] = v
            fill[p] += 1

    nb = np.empty(4096, np.int64)
    heap = [(0.0, 0, 0)]
    heap.pop()
    for o in range(n):
        if not orphan[o] or not region[o]:
            continue
        m = ng_query(ng, pos, pos[o, 0], pos[o, 1], r_conn, nb)
        for t in range(m):
            q = nb[t]
            if state[q] == ACTIVE and reach[q]:
                c = cost[q] + math.hypot(pos[q, 0] - pos[o, 0], pos[q, 1] - pos[o, 1])
                heapq.heappush(heap, (c, o, q))

    attached = np.zeros(ncomp, np.bool_)
    order = np.empty(n, np.int64)
    n_order = 0
    n_att = 0
    stop = target >= 0 and orphan[target]
    while len(heap) > 0:
        if stop and attached[comp[target]]:
            break
        c, o, q = heapq.heappop(heap)
        if attached[comp[o]] or reach[o]:
            continue
        if not _edge_ok(pos, q, o, root, wg, clearance, ohz, droot):
            continue
        attached[comp[o]] = True
        n_att += 1
        parent[o] = q
        cost[o] = c
        reach[o] = True
        start = n_order
        order[n_order] = o
        n_order += 1
        head = start
        while head < n_order:
            u = order[head]
            head += 1
            for k in range(deg[u], deg[u + 1]):
                w = adj[k]
                if reach[w]:
                    continue
                parent[w] = u
                cost[w] = cost[u] + math.hypot(pos[w, 0] - pos[u, 0], pos[w, 1] - pos[u, 1])
                reach[w] = True
                order[n_order] = w
                n_order += 1
        # newly reachable nodes may now serve as hot-nodes for other subtrees
        for i in range(start, n_order):
            u = order[i]
            if not region[u]:
                continue
            m = ng_query(ng, pos, pos[u, 0], pos[u, 1], r_conn, nb)
            for t in range(m):
                w = nb[t]
                if orphan[w] and not reach[w] and region[w] and not attached[comp[w]]:
                    cw = cost[u] + math.hypot(pos[w, 0] - pos[u, 0], pos[w, 1] - pos[u, 1])
                    heapq.heappush(heap, (cw, w, u))

    # rewiring cascade over the reattached nodes
    for i in range(n_order):
        u = order[i]
        if not region[u]:
            continue
        p = parent[u]
        cu = cost[p] + math.hypot(pos[u, 0] - pos[p, 0], pos[u, 1] - pos[p, 1])
        m = ng_query(ng, pos, pos[u, 0], pos[u, 1], r_conn, nb)
        best = p
        for t in range(m):
            w = nb[t]
            if w == u or w == p or state[w] != ACTIVE or not reach[w]:
                continue
            c = cost[w] + math.hypot(pos[u, 0] - pos[w, 0], pos[u, 1] - pos[w, 1])
            if c < cu - 1e-9 and not _is_ancestor(parent, u, w):
                if _edge_ok(pos, w, u, root, wg, clearance, ohz, droot):
                    best = w
                    cu = c
        parent[u] = best
        cost[u] = cu
    return n_att


@njit(cache=True)
def rewire_from(pos, parent, state, cost, root, seeds, ng, wg, clearance, r):
    """Cheapest-first rewiring wave started at ``seeds``.

    A popped node offers itself as parent to every visible neighbour within
    ``r`` that would get cheaper, and pushes lowered costs down its own
    subtree. ``cost`` must be exact on entry and is exact on return. Returns
    the number of parent changes.
    """
    n = parent.shape[0]
    # children in CSR form, plus a chain of nodes adopted during the wave
    start = np.zeros(n + 1, np.int64)
    for v in range(n):
        if parent[v] >= 0:
            start[parent[v] + 1] += 1
    for i in range(n):
        start[i + 1] += start[i]
    fill = start.copy()
    kids = np.empty(max(start[n], 1), np.int64)
    for v in range(n):
        p = parent[v]
        if p >= 0:
            kids[fill[p]] = v
            fill[p] += 1
    head = np.full(n, -1, np.int64)
    nxt = np.full(n, -1, np.int64)
    no_ohz = np.zeros((0, 3))
    no_d = np.zeros(0)
    nb = np.empty(4096, np.int64)
    heap = [(0.0, 0)]
    heap.pop()
    for k in range(seeds.shape[0]):
        v = seeds[k]
        if state[v] == ACTIVE and np.isfinite(cost[v]):
            heapq.heappush(heap, (cost[v], v))
    changes = 0
    while len(heap) > 0:
        c, u = heapq.heappop(heap)
        if c > cost[u] + 1e-12 or state[u] != ACTIVE:
            continue
        ux = pos[u, 0]
        uy = pos[u, 1]
        for i in range(start[u], start[u + 1]):
            w = kids[i]
            if parent[w] == u:
                cw = c + math.hypot(pos[w, 0] - ux, pos[w, 1] - uy)
                if cw < cost[w] - 1e-12:
                    cost[w] = cw
                    heapq.heappush(heap, (cw, w))
        w = head[u]
        while w >= 0:
            if parent[w] == u:
                cw = c + math.hypot(pos[w, 0] - ux, pos[w, 1] - uy)
                if cw < cost[w] - 1e-12:
                    cost[w] = cw
                    heapq.heappush(heap, (cw, w))
            w = nxt[w]
        m = ng_query(ng, pos, ux, uy, r, nb)
        for t in range(m):
            w = nb[t]
            if w == u or w == root or state[w] != ACTIVE or not np.isfinite(cost[w]):
                continue
            cw = c + math.hypot(pos[w, 0] - ux, pos[w, 1] - uy)
            if cw >= cost[w] - 1e-9 or parent[w] == u or _is_ancestor(parent, w, u):
                continue
            if not _edge_ok(pos, u, w, root, wg, clearance, no_ohz, no_d):
                continue
            parent[w] = u
            nxt[w] = head[u]
            head[u] = w
            cost[w] = cw
            changes += 1
            heapq.heappush(heap, (cw, w))
    return changes


# ---------------------------------------------------------------------------
# dynamic obstacles


@njit(cache=True)
def dyn_restore(parent, state, pos, saved_nodes, saved_parents, disabled, wg, clearance):
    """Undo a dynamic morph; returns how many saved edges could not be put back."""
    for k in range(disabled.shape[0]):
        v = disabled[k]
        if state[v] == DISABLED:
            state[v] = ACTIVE
    m = saved_nodes.shape[0]
    done = np.zeros(m, np.bool_)
    # a reversed chain only restores child-last, so retry blocked edges until a pass changes nothing
    progress = True
    while progress:
        progress = False
        for k in range(m):
            if done[k]:
                continue
            v = saved_nodes[k]
            s = saved_parents[k]
            if parent[v] == s:
                done[k] = True
                continue
            if state[v] == PRUNED or state[s] == PRUNED:
                continue
            if _is_ancestor(parent, v, s):
                continue
            if wg_seg_clear(wg, pos[s, 0], pos[s, 1], pos[v, 0], pos[v, 1], clearance):
                parent[v] = s
                done[k] = True
                progress = True
    skipped = 0
    for k in range(m):
        if not done[k]:
            skipped += 1
    return skipped


@njit(cache=True)
def dyn_apply(pos, parent, state, root, ohz, ng, step):
    """Disable nodes inside OHZs and cut active edges crossing them."""
    n = parent.shape[0]
    buf = np.empty(n, np.int64)
    flag = np.zeros(n, np.bool_)
    cand = np.empty(n, np.int64)
    nc = 0
    for k in range(ohz.shape[0]):
        m = ng_query(ng, pos, ohz[k, 0], ohz[k, 1], ohz[k, 2] + step, buf)
        for t in range(m):
            v = buf[t]
            if not flag[v]:
                flag[v] = True
                cand[nc] = v
                nc += 1
    droot = np.empty(ohz.shape[0])
    for k in range(ohz.shape[0]):
        droot[k] = math.hypot(pos[root, 0] - ohz[k, 0], pos[root, 1] - ohz[k, 1])
    disabled = np.empty(nc, np.int64)
    nd = 0
    for i in range(nc):
        v = cand[i]
        if v == root or state[v] != ACTIVE:
            continue
        for k in range(ohz.shape[0]):
            if math.hypot(pos[v, 0] - ohz[k, 0], pos[v, 1] - ohz[k, 1]) < ohz[k, 2]:
                state[v] = DISABLED
                disabled[nd] = v
                nd += 1
                break
    cut_nodes = np.empty(nc, np.int64)
    cut_parents = np.empty(nc, np.int64)
    ncut = 0
    for i in range(nc):
        v = cand[i]
        if state[v] != ACTIVE:
            continue
        p = parent[v]
        if p < 0 or state[p] != ACTIVE:
            continue
        for k in range(ohz.shape[0]):
            lim = ohz[k, 2]
            if v == root or p == root:
                lim = min(lim, droot[k] - 1e-9)
            d = _point_seg_dist_nb(ohz[k, 0], ohz[k, 1], pos[p, 0], pos[p, 1], pos[v, 0], pos[v, 1])
            if d < lim:
                cut_nodes[ncut] = v
                cut_parents[ncut] = p
                ncut += 1
                parent[v] = -1
                break
    return disabled[:nd].copy(), cut_nodes[:ncut].copy(), cut_parents[:ncut].copy()


# ---------------------------------------------------------------------------
# validation oracle


@njit(cache=True)
def validate(pos, parent, state, cost, root, wg, clearance):
    """Violation codes as (code, node) rows; see ``tree.VIOLATIONS``."""
    n = parent.shape[0]
    out = np.empty((4 * n + 8, 2), np.int64)
    m = 0
    if root < 0 or root >= n:
        out[m, 0] = 1
        out[m, 1] = root
        return out[:1].copy()
    if parent[root] != -1:
        out[m, 0] = 1
        out[m, 1] = root
        m += 1
    if not (cost[root] == 0.0):
        out[m, 0] = 2
        out[m, 1] = root
        m += 1
    if state[root] != ACTIVE:
        out[m, 0] = 3
        out[m, 1] = root
        m += 1
    # reachability by walking parent chains (independent of ``propagate``)
    reach = np.zeros(n, np.int8)  # 0 unknown, 1 yes, 2 no
    buf = np.empty(n + 1, np.int64)
    for v in range(n):
        if state[v] != ACTIVE or reach[v] != 0:
            continue
        k = 0
        u = v
        res = 2
        while True:
            if u == root:
                res = 1
                break
            if reach[u] != 0:
                res = reach[u]
                break
            if k > n:
                res = 2
                break
            buf[k] = u
            k += 1
            p = parent[u]
            if p < 0 or p >= n or state[p] != ACTIVE:
                res = 2
                break
            u = p
        for i in range(k):
            reach[buf[i]] = res
        if state[root] == ACTIVE:
            reach[root] = 1
    for v in range(n):
        p = parent[v]
        if p < -1 or p >= n:
            out[m, 0] = 8
            out[m, 1] = v
            m += 1
            continue
        if state[v] != ACTIVE:
            continue
        finite = np.isfinite(cost[v])
        if (reach[v] == 1) != finite:
            out[m, 0] = 5
            out[m, 1] = v
            m += 1
        if reach[v] == 1 and v != root:
            d = math.hypot(pos[v, 0] - pos[p, 0], pos[v, 1] - pos[p, 1])
            if abs(cost[v] - (cost[p] + d)) > COST_TOL:
                out[m, 0] = 4
                out[m, 1] = v
                m += 1
        if v != root and wg_point_dist(wg, pos[v, 0], pos[v, 1], clearance) < clearance - 1e-9:
            out[m, 0] = 7
            out[m, 1] = v
            m += 1
        if p >= 0 and state[p] == ACTIVE:
            if not wg_seg_clear(wg, pos[p, 0], pos[p, 1], pos[v, 0], pos[v, 1], clearance - 1e-9):
                out[m, 0] = 6
                out[m, 1] = v
                m += 1
    return out[:m].copy()
