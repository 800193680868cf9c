"""Per-agent RRT* trees and the tree-morphing repairs.

A :class:`MorphTree` is a flat array tree rooted at the node the agent last
passed. Static repairs prune permanently; dynamic morphing disables nodes and
cuts edges reversibly, restoring them on the next call before re-applying
whatever hazard zones are currently active.

The agent's known walls travel with the tree (``tree.map``) so the repair
functions keep the narrow signatures ``(tree, new_walls, ...)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _treekern as K
from .geometry import Disc, Point2, WallSegment, walls_to_array
from .spatial import WALL_PAD, build_node_grid, build_wall_grid

ACTIVE = K.ACTIVE
PRUNED = K.PRUNED
DISABLED = K.DISABLED
STATE_NAMES = {ACTIVE: "active", PRUNED: "pruned", DISABLED: "disabled"}

CLEARANCE_MARGIN = 0.05
OHZ_MARGIN = 0.3
LRZ_RADIUS = 6.0
LSR_RADIUS = 80.0
SWIFT_CORRIDOR = 10.0
SMALL_MAP_REBUILD = 15000
GOAL_BIAS = 0.05
NEIGHBORS_AT_FINAL = 10

VIOLATIONS = {
    1: "root has a parent",
    2: "root cost is not zero",
    3: "root is not active",
    4: "cost inconsistent with parent",
    5: "reachability disagrees with finite cost",
    6: "active edge violates wall clearance",
    7: "active node violates wall clearance",
    8: "parent index out of range",
}


class Strategy(str, Enum):
    FULL = "full"
    EAGER = "eager"
    LAZY = "lazy"
    SWIFT = "swift"


@dataclass
class RepairContext:
    strategy: Strategy = Strategy.LAZY
    lsr_radius: float = LSR_RADIUS
    swift_corridor: float = SWIFT_CORRIDOR
    rebuild_budget: int = SMALL_MAP_REBUILD
    agent_radius: float = 0.4
    margin: float = CLEARANCE_MARGIN
    ohz_margin: float = OHZ_MARGIN
    lrz_radius: float = LRZ_RADIUS

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if not self.lsr_radius > 0 or not self.swift_corridor > 0:
            raise ValueError("lsr_radius and swift_corridor must be positive")

    @property
    def clearance(self) -> float:
        return self.agent_radius + self.margin


@dataclass(frozen=True)
class OHZ:
    center: Point2
    radius: float


@dataclass(frozen=True)
class LRZ:
    center: Point2
    radius: float = LRZ_RADIUS

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("LRZ radius must be positive")


@dataclass
class RepairStats:
    rebuilds: int = 0
    repairs: int = 0
    skips: int = 0
    dynamic_morphs: int = 0
    pruned_edges: int = 0


# ---------------------------------------------------------------------------
# wall maps


def _as_segs(walls) -> np.ndarray:
    if isinstance(walls, WallMap):
        return walls.segs
    if isinstance(walls, np.ndarray):
        return np.ascontiguousarray(walls, dtype=np.float64).reshape(-1, 4)
    walls = list(walls)
    if walls and isinstance(walls[0], WallSegment):
        return walls_to_array(walls)
    return np.asarray(walls, dtype=np.float64).reshape(-1, 4)


class WallMap:
    """Known wall segments plus a lazily built clearance grid."""

    def __init__(self, walls=(), bounds=None):
        self.segs = _as_segs(walls)
        self.bounds = bounds
        self._grid = None

    def __len__(self):
        return len(self.segs)

    @property
    def grid(self):
        if self._grid is None:
            self._grid = build_wall_grid(self.segs, self.bounds)
        return self._grid

    def union(self, walls) -> WallMap:
        extra = _as_segs(walls)
        if len(extra) == 0:
            return self
        return WallMap(np.vstack([self.segs, extra]), self.bounds)


def as_wallmap(walls, bounds=None) -> WallMap:
    if isinstance(walls, WallMap):
        return walls
    return WallMap(walls, bounds)


# ---------------------------------------------------------------------------
# the tree


@dataclass
class MorphTree:
    pos: np.ndarray
    parent: np.ndarray
    cost: np.ndarray
    state: np.ndarray
    root: int
    goal: Point2
    goal_node: int
    bounds: tuple
    step: float
    r_conn: float
    clearance: float
    map: WallMap
    pending: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    saved_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    saved_parents: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    disabled: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    stats: RepairStats = field(default_factory=RepairStats)
    ng: tuple = None
    _mark: np.ndarray = None
    _stamp: int = 0

    def __post_init__(self):
        if self.ng is None:
            self.ng = build_node_grid(self.pos, self.bounds, self.step)
        if self._mark is None:
            self._mark = np.full(len(self.pos), -1, np.int64)

    @property
    def n(self) -> int:
        return len(self.pos)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.state == ACTIVE))

    def active_set(self) -> frozenset:
        return frozenset(np.flatnonzero(self.state == ACTIVE).tolist())

    def goal_reachable(self) -> bool:
        return self.goal_node >= 0 and bool(np.isfinite(self.cost[self.goal_node]))

    def recompute_costs(self):
        self.cost = K.propagate(self.pos, self.parent, self.state, self.root)

    def path_ids(self) -> np.ndarray | None:
        if not self.goal_reachable():
            return None
        ids = K.path_to(self.parent, self.root, self.goal_node)
        return ids if len(ids) else None

    def reroot(self, node: int):
        """Make ``node`` the root by reversing its parent chain."""
        if node == self.root:
            return
        if not np.isfinite(self.cost[node]):
            raise ValueError("cannot re-root at an unreachable node")
        K.reroot(self.parent, int(node))
        self.root = int(node)
        self.recompute_costs()

    def _next_stamp(self, k: int) -> int:
        s = self._stamp
        self._stamp += k + 1
        return s

    def best_entry(self, p, radius: float | None = None):
        """Node to hop onto from ``p``: straight free segment plus cheapest tree route."""
        if not self.goal_reachable():
            return -1, math.inf
        radius = radius or 2.0 * self.step
        px, py = float(p[0]), float(p[1])
        stamp = self._next_stamp(4096)
        q, s = K.best_entry(self.pos, self.parent, self.state, self.cost, self.ng, self.map.grid,
                            self.clearance, px, py, self.goal_node, radius, self._mark, stamp)
        return int(q), float(s)

    def edge_valid(self, a: int, b: int, walls=None) -> bool:
        wm = self.map if walls is None else as_wallmap(walls, self.bounds)
        pa, pb = self.pos[a], self.pos[b]
        return bool(K.wg_seg_clear(wm.grid, pa[0], pa[1], pb[0], pb[1], self.clearance))

    def to_jsonl(self) -> str:
        lines = []
        for i in range(self.n):
            c = float(self.cost[i])
            lines.append(json.dumps({
                "id": i,
                "pos": [round(float(self.pos[i, 0]), 6), round(float(self.pos[i, 1]), 6)],
                "parent": int(self.parent[i]) if self.parent[i] >= 0 else None,
                "cost": round(c, 6) if math.isfinite(c) else None,
                "state": STATE_NAMES[int(self.state[i])],
            }, sort_keys=True))
        return "\n".join(lines) + "\n"


def rewire_radius(n: int, area: float, n_final: int, step: float) -> float:
    """Shrinking neighbor radius, tuned to ~10 neighbors once ``n_final`` nodes exist."""
    gamma = _gamma(area, n_final)
    n = max(n, 2)
    return min(gamma * math.sqrt(math.log(n) / n), step)


def _gamma(area: float, n_final: int) -> float:
    return math.sqrt(NEIGHBORS_AT_FINAL * area / (math.pi * math.log(max(n_final, 3))))


def _default_bounds(segs, root, goal, pad=5.0):
    xs = [root.x, goal.x]
    ys = [root.y, goal.y]
    if len(segs):
        xs += [segs[:, [0, 2]].min(), segs[:, [0, 2]].max()]
        ys += [segs[:, [1, 3]].min(), segs[:, [1, 3]].max()]
    return (min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad)


def build_rrt_star(map, root: Point2, goal: Point2, iterations: int, seed, *, step: float = 1.5,
                   clearance: float = 0.45, bounds=None, goal_bias: float = GOAL_BIAS) -> MorphTree:
    """Plain RRT* over ``iterations`` samples; ``goal_node`` is -1 if the goal never connected."""
    if clearance > WALL_PAD:
        raise ValueError(f"clearance must not exceed {WALL_PAD}")
    root, goal = Point2(*root), Point2(*goal)
    segs = _as_segs(map)
    if bounds is None:
        bounds = getattr(map, "bounds", None) or _default_bounds(segs, root, goal)
    bounds = tuple(float(b) for b in bounds)
    wm = map if isinstance(map, WallMap) and map.bounds == bounds else WallMap(segs, bounds)
    x0, y0, x1, y1 = bounds
    rng = np.random.default_rng(seed)
    lo = (x0 + clearance, y0 + clearance)
    hi = (x1 - clearance, y1 - clearance)
    samples = rng.uniform(lo, hi, size=(int(iterations), 2))
    flags = rng.random(int(iterations)) < goal_bias
    area = (x1 - x0) * (y1 - y0)
    gamma = _gamma(area, int(iterations) + 1)
    pos, parent, goal_idx = K.rrt_build(samples, flags, root.x, root.y, goal.x, goal.y, float(step), gamma,
                                        wm.grid, float(clearance), x0, y0, x1, y1)
    if root == goal:
        goal_idx = 0
    state = np.zeros(len(pos), np.int8)
    cost = K.propagate(pos, parent, state, 0)
    r_conn = rewire_radius(len(pos), area, int(iterations) + 1, step)
    return MorphTree(pos=pos, parent=parent, cost=cost, state=state, root=0, goal=goal,
                     goal_node=int(goal_idx), bounds=bounds, step=float(step), r_conn=r_conn,
                     clearance=float(clearance), map=wm)


def extract_path(tree: MorphTree, goal=None) -> list[Point2] | None:
    """Root-to-goal polyline following parent links, or None."""
    ids = tree.path_ids()
    if ids is None:
        return None
    return [Point2(float(tree.pos[i, 0]), float(tree.pos[i, 1])) for i in ids]


def full_rebuild(map, root, goal, budget: int, seed, *, stats: RepairStats | None = None, **kw) -> MorphTree:
    tree = build_rrt_star(map, root, goal, budget, seed, **kw)
    if stats is not None:
        stats.rebuilds += 1
        tree.stats = stats
    else:
        tree.stats.rebuilds += 1
    return tree


# ---------------------------------------------------------------------------
# static repairs


def _path_array(path) -> np.ndarray:
    if path is None:
        return np.zeros((0, 2))
    if isinstance(path, np.ndarray):
        return np.ascontiguousarray(path, dtype=np.float64).reshape(-1, 2)
    return np.array([[p[0], p[1]] for p in path], dtype=np.float64).reshape(-1, 2)


def path_blocked(path, walls, clearance: float, bounds=None) -> bool:
    pts = _path_array(path)
    wm = as_wallmap(walls, bounds)
    if len(wm) == 0 or len(pts) == 0:
        return False
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    return not K.polyline_clear(pts, wm.grid, clearance)


def _prune_and_reconnect(tree: MorphTree, check: WallMap, region_segs: np.ndarray, ctx: RepairContext,
                         mask=None) -> int:
    use_mask = mask is not None
    if mask is None:
        mask = np.zeros(0, np.bool_)
    bad_edge, bad_node = K.scan_edges(tree.pos, tree.parent, tree.state, tree.root, check.grid,
                                      tree.clearance, mask, use_mask)
    if not (bad_edge.any() or bad_node.any()):
        return 0
    removed = K.prune(tree.parent, tree.state, bad_edge, bad_node)
    tree.stats.pruned_edges += int(removed)
    tree.recompute_costs()
    _reconnect(tree, region_segs, ctx)
    return int(removed)


def _reconnect(tree: MorphTree, region_segs: np.ndarray, ctx: RepairContext, ohz=None):
    if ohz is None:
        ohz = np.zeros((0, 3))
    x0, y0, x1, y1 = tree.bounds
    if len(ohz):
        # hot-nodes for dynamic morphing are searched around the hazard zones only
        region = K.disc_region_mask(tree.pos, tree.state, tree.cost, ohz, ctx.lrz_radius)
    elif ctx.lsr_radius >= math.hypot(x1 - x0, y1 - y0):
        region = np.ones(tree.n, np.bool_)
    else:
        region = K.region_mask(tree.pos, tree.state, tree.cost, np.ascontiguousarray(region_segs).reshape(-1, 4),
                               ctx.lsr_radius)
    target = tree.goal_node if len(ohz) else -1
    n_att = K.reconnect(tree.pos, tree.parent, tree.state, tree.cost, tree.root, region, tree.ng,
                        tree.map.grid, tree.clearance, ohz, tree.r_conn, target)
    tree.recompute_costs()
    return n_att


def eager_repair(tree: MorphTree, new_walls, ctx: RepairContext, goal=None) -> list[Point2] | None:
    """Scan every edge against the new walls (and any deferred ones), prune, reconnect."""
    new = _as_segs(new_walls)
    tree.map = tree.map.union(new)
    check = WallMap(np.vstack([tree.pending, new]), tree.bounds)
    tree.pending = np.zeros((0, 4))
    tree.stats.repairs += 1
    if len(check):
        _prune_and_reconnect(tree, check, check.segs, ctx)
    return extract_path(tree)


def _skip(tree: MorphTree, new: np.ndarray):
    tree.map = tree.map.union(new)
    if len(new):
        tree.pending = np.vstack([tree.pending, new])
    tree.stats.skips += 1


def lazy_eager_repair(tree: MorphTree, new_walls, current_path, ctx: RepairContext, goal=None):
    """Eager repair only when the current path is blocked; otherwise defer."""
    new = _as_segs(new_walls)
    if path_blocked(current_path, new, tree.clearance, tree.bounds):
        return eager_repair(tree, new, ctx, goal), False
    _skip(tree, new)
    return current_path, True


def swift_repair(tree: MorphTree, new_walls, current_path, ctx: RepairContext, goal=None):
    """Like lazy eager, but validates only edges near the current path."""
    new = _as_segs(new_walls)
    if not path_blocked(current_path, new, tree.clearance, tree.bounds):
        _skip(tree, new)
        return current_path, True
    tree.map = tree.map.union(new)
    check = WallMap(np.vstack([tree.pending, new]), tree.bounds)
    pts = _path_array(current_path)
    mask = K.corridor_mask(tree.pos, tree.parent, tree.state, pts, float(ctx.swift_corridor), tree.step)
    tree.stats.repairs += 1
    _prune_and_reconnect(tree, check, new, ctx, mask=mask)
    return extract_path(tree), False


# ---------------------------------------------------------------------------
# dynamic obstacles


def _obstacle_rows(dyn_obstacles) -> np.ndarray:
    """(k, 3) rows of x, y, radius from discs, (disc, velocity) pairs or raw rows."""
    if isinstance(dyn_obstacles, np.ndarray):
        return np.ascontiguousarray(dyn_obstacles, dtype=np.float64).reshape(-1, 3)
    rows = []
    for o in dyn_obstacles:
        if isinstance(o, tuple) and o and isinstance(o[0], Disc):
            o = o[0]
        if isinstance(o, Disc):
            rows.append((o.center.x, o.center.y, o.radius))
        else:
            rows.append(tuple(o)[:3])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _zone_rows(dyn_obstacles, lrz: LRZ, ctx: RepairContext) -> np.ndarray:
    obs = _obstacle_rows(dyn_obstacles)
    if len(obs) == 0:
        return np.zeros((0, 3))
    r = obs[:, 2] + ctx.agent_radius + ctx.ohz_margin
    d = np.hypot(obs[:, 0] - lrz.center.x, obs[:, 1] - lrz.center.y)
    keep = d <= lrz.radius + r
    return np.column_stack([obs[keep, :2], r[keep]])


def hazard_zones(dyn_obstacles, lrz: LRZ, ctx: RepairContext) -> list[OHZ]:
    """OHZs of the obstacles whose zone intersects the agent's reaction zone."""
    return [OHZ(Point2(float(x), float(y)), float(r)) for x, y, r in _zone_rows(dyn_obstacles, lrz, ctx)]


def dynamic_morph(tree: MorphTree, dyn_obstacles, agent_pos, lrz: LRZ | None, ctx: RepairContext, goal=None):
    """Disable the tree inside active OHZs (undoing last call's disabling first).

    ``dyn_obstacles`` may be discs, (disc, velocity) pairs or (x, y, r) rows.
    """
    morph_in_place(tree, dyn_obstacles, agent_pos, lrz, ctx)
    return extract_path(tree)


def clear_dynamic(tree: MorphTree) -> None:
    """Undo the current dynamic morph (re-enable disabled nodes, restore cut edges)."""
    if not (len(tree.disabled) or len(tree.saved_nodes)):
        return
    K.dyn_restore(tree.parent, tree.state, tree.pos, tree.saved_nodes, tree.saved_parents, tree.disabled,
                  tree.map.grid, tree.clearance)
    empty = np.zeros(0, np.int64)
    tree.disabled, tree.saved_nodes, tree.saved_parents = empty, empty, empty
    tree.recompute_costs()


def morph_in_place(tree: MorphTree, dyn_obstacles, agent_pos, lrz: LRZ | None, ctx: RepairContext) -> bool:
    """:func:`dynamic_morph` without building the path; returns goal reachability."""
    if lrz is None:
        lrz = LRZ(Point2(float(agent_pos[0]), float(agent_pos[1])), ctx.lrz_radius)
    ohz = _zone_rows(dyn_obstacles, lrz, ctx)
    dirty = len(tree.disabled) or len(tree.saved_nodes)
    if not len(ohz) and not dirty:
        return tree.goal_reachable()
    tree.stats.dynamic_morphs += 1
    old = (tree.disabled, tree.saved_nodes, tree.saved_parents)
    skipped = K.dyn_restore(tree.parent, tree.state, tree.pos, tree.saved_nodes, tree.saved_parents,
                            tree.disabled, tree.map.grid, tree.clearance)
    if skipped:
        # re-rooting along a detour reversed some saved edges: let the freed region win its old routes back
        tree.recompute_costs()
        seeds = np.unique(np.concatenate(old)).astype(np.int64)
        K.rewire_from(tree.pos, tree.parent, tree.state, tree.cost, tree.root, seeds, tree.ng, tree.map.grid,
                      tree.clearance, tree.r_conn)
    if len(ohz):
        dis, cn, cp = K.dyn_apply(tree.pos, tree.parent, tree.state, tree.root, ohz, tree.ng, tree.step)
    else:
        dis = cn = cp = np.zeros(0, np.int64)
    tree.disabled, tree.saved_nodes, tree.saved_parents = dis, cn, cp
    if not (dirty or len(dis) or len(cn)):
        return tree.goal_reachable()
    if skipped == 0 and tree.goal_reachable() and all(np.array_equal(a, b) for a, b in zip(old, (dis, cn, cp))):
        # the same morph again: structure, and so costs, are unchanged
        return True
    tree.recompute_costs()
    if len(ohz) and tree.goal_node >= 0 and not tree.goal_reachable():
        before = tree.parent.copy()
        _reconnect(tree, None, ctx, ohz=ohz)
        # detours around the zones are temporary: remember the original parents for the next restore
        # (nodes cut by the zones already have theirs saved)
        moved = np.flatnonzero((tree.parent != before) & (before >= 0))
        tree.saved_nodes = np.concatenate([tree.saved_nodes, moved])
        tree.saved_parents = np.concatenate([tree.saved_parents, before[moved]])
    return tree.goal_reachable()


# ---------------------------------------------------------------------------
# validation


def validate_tree(tree: MorphTree, map=None) -> list[str]:
    """Human-readable invariant violations against ``map`` (default: the tree's own map)."""
    wm = tree.map if map is None else as_wallmap(map, tree.bounds)
    if wm.bounds != tree.bounds:
        wm = WallMap(wm.segs, tree.bounds)
    rows = K.validate(tree.pos, tree.parent, tree.state, tree.cost, tree.root, wm.grid, tree.clearance)
    out = [f"node {int(v)}: {VIOLATIONS[int(c)]}" for c, v in rows]
    if tree.goal_node >= tree.n:
        out.append(f"goal node {tree.goal_node} out of range")
    return out
