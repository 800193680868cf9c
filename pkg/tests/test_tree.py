import copy
import math

import numpy as np
import pytest
from helpers import box, seg
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from pecman import _treekern as K
from pecman.geometry import Disc, Point2
from pecman.tree import (
    ACTIVE,
    LRZ,
    MorphTree,
    RepairContext,
    WallMap,
    build_rrt_star,
    clear_dynamic,
    dynamic_morph,
    eager_repair,
    extract_path,
    full_rebuild,
    hazard_zones,
    lazy_eager_repair,
    swift_repair,
    validate_tree,
)
from pecman.world import generate_floorplan

CTX = RepairContext()


def hand_tree(points, parents, walls=(), goal_node=None, r_conn=3.0, bounds=(-5, -5, 25, 25)):
    pos = np.array(points, dtype=np.float64)
    parent = np.array(parents, dtype=np.int64)
    state = np.zeros(len(pos), np.int8)
    cost = K.propagate(pos, parent, state, 0)
    g = len(pos) - 1 if goal_node is None else goal_node
    return MorphTree(pos=pos, parent=parent, cost=cost, state=state, root=0, goal=Point2(*pos[g]), goal_node=g,
                     bounds=bounds, step=1.5, r_conn=r_conn, clearance=0.45, map=WallMap(list(walls), bounds))


def path_len(path):
    return sum(a.dist(b) for a, b in zip(path, path[1:]))


def building_tree(seed=0, iters=5000):
    scen = generate_floorplan("building", seed)
    a = scen.agents[0]
    wm = WallMap(scen.walls, scen.bounds)
    return scen, build_rrt_star(wm, a.start, a.goal, iters, seed, bounds=scen.bounds)


# ---------------------------------------------------------------------------
# build and extract


def test_empty_map_path_near_straight_line():
    t = build_rrt_star([], Point2(0, 0), Point2(10, 0), 5000, 1)
    p = extract_path(t)
    assert p is not None
    assert path_len(p) <= 10.0 * 1.05
    assert validate_tree(t) == []


def test_sealed_goal_unreachable():
    wall = [seg(5, -20, 5, 20)]
    t = build_rrt_star(wall, Point2(0, 0), Point2(10, 0), 2000, 1, bounds=(-5, -5, 15, 5))
    assert t.goal_node == -1
    assert extract_path(t) is None


def test_building_full_map_tree_valid():
    scen, t = building_tree()
    assert t.n <= 5001
    assert validate_tree(t, scen.walls) == []
    assert t.goal_reachable()


def test_goal_at_root_single_point():
    t = build_rrt_star([], Point2(1, 1), Point2(1, 1), 50, 0)
    assert extract_path(t) == [Point2(1, 1)]


def test_path_cost_equals_goal_cost():
    _, t = building_tree(1)
    p = extract_path(t)
    assert path_len(p) == pytest.approx(t.cost[t.goal_node], abs=1e-6)


def _dijkstra_path(t):
    kids = np.flatnonzero(t.parent >= 0)
    w = np.hypot(*(t.pos[kids] - t.pos[t.parent[kids]]).T)
    g = csr_matrix((w, (kids, t.parent[kids])), shape=(t.n, t.n))
    dist, pred = dijkstra(g, directed=False, indices=t.root, return_predecessors=True)
    out = [t.goal_node]
    while out[-1] != t.root:
        out.append(int(pred[out[-1]]))
    return out[::-1], dist[t.goal_node]


@pytest.mark.parametrize("seed", range(5))
def test_extract_path_matches_dijkstra(seed):
    _, t = building_tree(seed, 15000)
    assert t.goal_reachable()
    ids, d = _dijkstra_path(t)
    p = extract_path(t)
    assert [tuple(t.pos[i]) for i in ids] == [(q.x, q.y) for q in p]
    assert d == pytest.approx(t.cost[t.goal_node], abs=1e-6)


def test_full_rebuild_counts():
    scen = generate_floorplan("building", 0)
    a = scen.agents[0]
    t = full_rebuild(scen.walls, a.start, a.goal, 500, 0, bounds=scen.bounds)
    assert t.stats.rebuilds == 1


def test_snapshot_jsonl():
    t = hand_tree([(0, 0), (1, 0)], [-1, 0])
    lines = t.to_jsonl().splitlines()
    assert len(lines) == 2
    assert '"parent": 0' in lines[1] and '"state": "active"' in lines[1]


# ---------------------------------------------------------------------------
# eager repair


def test_wall_missing_all_edges_changes_nothing():
    _, t = building_tree(2)
    before = (t.parent.copy(), t.cost.copy())
    p0 = extract_path(t)
    p1 = eager_repair(t, [seg(0.5, 0.5, 0.6, 0.5)], CTX)
    assert np.array_equal(t.parent, before[0])
    assert p1 == p0


def _five_node_case():
    # root 0, 1 on the way, goal 2; 3 sits off to the side
    pts = [(0, 0), (2, 0), (4, 0), (2, 2)]
    par = [-1, 0, 1, 0]
    wall = seg(3, -2, 3, 0.3)
    return hand_tree(pts, par, goal_node=2), wall


def _best_join(t, wall, orphans):
    """Exhaustive search over every collision-free joining edge into the orphan set."""
    wm = WallMap(list(t.map.segs) + [wall.as_tuple()], t.bounds)
    best = None
    for a in range(t.n):
        if a in orphans:
            continue
        for b in orphans:
            if np.hypot(*(t.pos[a] - t.pos[b])) > t.r_conn:
                continue
            if not K.wg_seg_clear(wm.grid, *t.pos[a], *t.pos[b], t.clearance):
                continue
            c = t.cost[a] + np.hypot(*(t.pos[a] - t.pos[b]))
            if best is None or c < best[0]:
                best = (c, a, b)
    return best


def test_single_cut_reconnects_one_hop():
    t, wall = _five_node_case()
    expect = _best_join(t, wall, {2})
    path = eager_repair(t, [wall], CTX)
    assert path is not None
    assert t.stats.pruned_edges == 1
    assert t.parent[2] == expect[1]
    assert t.cost[2] == pytest.approx(expect[0])
    assert validate_tree(t) == []


def test_sealed_door_returns_none():
    pts = [(0, 0), (2, 0), (4, 0), (6, 0)]
    t = hand_tree(pts, [-1, 0, 1, 2])
    assert eager_repair(t, [seg(3, -20, 3, 20)], CTX) is None


def test_repair_never_moves_nodes():
    scen, t = building_tree(3, 3000)
    pos = t.pos.copy()
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = rng.uniform(2, 30, 2)
        eager_repair(t, [seg(x, y, x + rng.uniform(-3, 3), y + rng.uniform(-3, 3))], CTX)
    assert np.array_equal(t.pos, pos)


# ---------------------------------------------------------------------------
# lazy eager and swift


def _line_tree():
    # a straight path along y=0 plus a side branch 15 m away
    pts = [(0, 0), (5, 0), (10, 0), (0, 15), (10, 15)]
    par = [-1, 0, 1, 0, 3]
    return hand_tree(pts, par, goal_node=2, r_conn=20.0)


def test_lazy_skips_off_path_wall():
    t = _line_tree()
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    wall = seg(5, 14, 5, 16)
    path, skipped = lazy_eager_repair(t, [wall], cur, CTX)
    assert skipped and path is cur
    assert validate_tree(t) != []  # the stale edge is still in the tree
    assert validate_tree(t, WallMap([], t.bounds)) == []


def test_lazy_on_path_equals_eager():
    a = _line_tree()
    b = copy.deepcopy(a)
    wall = seg(7.5, -1, 7.5, 1)
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    pa, skipped = lazy_eager_repair(a, [wall], cur, CTX)
    pb = eager_repair(b, [wall], CTX)
    assert not skipped
    assert pa == pb
    assert np.array_equal(a.parent, b.parent) and np.array_equal(a.state, b.state)


def test_lazy_deferred_wall_cleaned_on_next_repair():
    t = _line_tree()
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    wall_a = seg(5, 14, 5, 16)
    wall_b = seg(7.5, -1, 7.5, 1)
    lazy_eager_repair(t, [wall_a], cur, CTX)
    lazy_eager_repair(t, [wall_b], cur, CTX)
    assert validate_tree(t, WallMap([wall_a, wall_b], t.bounds)) == []


def test_swift_far_wall_skipped():
    t = _line_tree()
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    path, skipped = swift_repair(t, [seg(5, 14, 5, 16)], cur, CTX)
    assert skipped
    assert not t.edge_valid(3, 4)


def test_swift_local_damage_equals_eager():
    a = _line_tree()
    b = copy.deepcopy(a)
    wall = seg(7.5, -1, 7.5, 1)
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    pa, _ = swift_repair(a, [wall], cur, CTX)
    pb = eager_repair(b, [wall], CTX)
    assert pa == pb
    assert np.array_equal(a.parent, b.parent) and np.array_equal(a.state, b.state)


def test_swift_reuses_stale_edge_outside_corridor():
    t = _line_tree()
    cur = np.array([[0, 0], [5, 0], [10, 0]], float)
    stale = seg(5, 14, 5, 16)  # crosses the side edge 3-4, 15 m from the path
    swift_repair(t, [stale], cur, CTX)
    block = seg(7.5, -1, 7.5, 6)  # leaves only 4 -> 2 as a way into the goal
    path, skipped = swift_repair(t, [block], cur, CTX)
    assert not skipped and path is not None
    ids = t.path_ids().tolist()
    assert ids == [0, 3, 4, 2]
    # the stale edge is on the path; a just-in-time check catches it
    assert not t.edge_valid(3, 4)
    # eager repair of the same events prunes it and routes around
    e = _line_tree()
    lazy_eager_repair(e, [stale], cur, CTX)
    assert eager_repair(e, [block], CTX) is not None
    ids = e.path_ids().tolist()
    assert (3, 4) not in set(zip(ids, ids[1:]))
    assert validate_tree(e) == []


def test_corridor_mask_matches_brute_force(rng):
    _, t = building_tree(4, 3000)
    for _ in range(20):
        path = rng.uniform(0, 32, size=(int(rng.integers(2, 6)), 2))
        radius = float(rng.uniform(1, 12))
        mask = K.corridor_mask(t.pos, t.parent, t.state, path, radius, t.step)
        for v in range(1, t.n):
            p = t.parent[v]
            d = min(K._seg_seg_dist_nb(*t.pos[v], *t.pos[p], *path[k], *path[k + 1]) for k in range(len(path) - 1))
            assert mask[v] == (d <= radius)


# ---------------------------------------------------------------------------
# dynamic morphing


def _dyn_setup():
    # open 20 x 20 room: a detour around any single pedestrian exists
    b = (0, 0, 20, 20)
    return build_rrt_star(WallMap(box(20, 20), b), Point2(2, 10), Point2(18, 10), 5000, 3, bounds=b)


def test_no_obstacle_in_lrz_unchanged():
    t = _dyn_setup()
    p0 = extract_path(t)
    parent = t.parent.copy()
    p1 = dynamic_morph(t, [Disc(Point2(30, 30), 0.3)], t.pos[t.root], LRZ(Point2(*t.pos[t.root])), CTX)
    assert p1 == p0 and np.array_equal(t.parent, parent)


def test_obstacle_on_path_detour_clear_of_zone():
    t = _dyn_setup()
    ids = t.path_ids()
    mid = t.pos[ids[3]]
    root = t.pos[t.root]
    obs = [Disc(Point2(*mid), 0.3)]
    lrz = LRZ(Point2(*root))
    zones = hazard_zones(obs, lrz, CTX)
    assert len(zones) == 1
    path = dynamic_morph(t, obs, root, lrz, CTX)
    assert path is not None
    z = zones[0]
    for a, b in zip(path, path[1:]):
        d = K._point_seg_dist_nb(z.center.x, z.center.y, a.x, a.y, b.x, b.y)
        assert d >= z.radius - 1e-9


def test_obstacle_enter_then_leave_restores_active_set():
    t = _dyn_setup()
    active = t.active_set()
    parent = t.parent.copy()
    root = t.pos[t.root]
    lrz = LRZ(Point2(*root))
    ids = t.path_ids()
    for k in (2, 3, 5):
        mid = t.pos[ids[min(k, len(ids) - 1)]]
        dynamic_morph(t, [Disc(Point2(*mid), 0.3)], root, lrz, CTX)
    dynamic_morph(t, [], root, lrz, CTX)
    assert t.active_set() == active
    assert np.array_equal(t.parent, parent)
    assert validate_tree(t) == []


@given(st.lists(st.tuples(st.floats(0, 32), st.floats(0, 32)), min_size=1, max_size=6))
def test_dynamic_morph_reversible(points):
    t = _dyn_setup()
    active, parent = t.active_set(), t.parent.copy()
    root = t.pos[t.root]
    dynamic_morph(t, [Disc(Point2(x, y), 0.3) for x, y in points], root, None, CTX)
    clear_dynamic(t)
    assert t.active_set() == active
    assert np.array_equal(t.parent, parent)


# ---------------------------------------------------------------------------
# validation and invariants


def test_validate_detects_lazy_skip_against_full_map():
    scen, t = building_tree(5)
    cur = t.pos[t.path_ids()]
    rng = np.random.default_rng(1)
    far = None
    while far is None:
        x, y = rng.uniform(2, 30, 2)
        w = seg(x, y, x + 3, y)
        probe = WallMap([w], t.bounds)
        crosses = K.scan_edges(t.pos, t.parent, t.state, t.root, probe.grid, t.clearance,
                               np.zeros(0, np.bool_), False)[0].any()
        if K.polyline_clear(cur, probe.grid, t.clearance) and crosses:
            far = w
    before = WallMap(scen.walls, scen.bounds)
    _, skipped = lazy_eager_repair(t, [far], cur, CTX)
    assert skipped
    assert validate_tree(t, before) == []
    assert validate_tree(t, WallMap(list(scen.walls) + [far], scen.bounds)) != []


def test_validate_reports_cost_corruption():
    t = hand_tree([(0, 0), (1, 0), (2, 0)], [-1, 0, 1])
    t.cost[2] += 0.1
    assert any("cost" in v for v in validate_tree(t))


@given(st.integers(0, 10_000))
def test_eager_postcondition_random_walls(seed):
    rng = np.random.default_rng(seed)
    t = build_rrt_star(WallMap([], (0, 0, 20, 20)), Point2(1, 1), Point2(19, 19), 1500, seed, bounds=(0, 0, 20, 20))
    walls = []
    for _ in range(3):
        x, y = rng.uniform(2, 18, 2)
        ang = rng.uniform(0, math.pi)
        L = rng.uniform(1, 6)
        w = seg(x, y, x + L * math.cos(ang), y + L * math.sin(ang))
        walls.append(w)
        eager_repair(t, [w], CTX)
        assert validate_tree(t, WallMap(walls, t.bounds)) == []


def test_rewire_wave_keeps_costs_exact_and_never_worse():
    _, t = building_tree(6, 3000)
    # scramble: hang every node of a region on a worse but valid parent
    before = t.cost.copy()
    seeds = np.arange(t.n, dtype=np.int64)
    K.rewire_from(t.pos, t.parent, t.state, t.cost, t.root, seeds, t.ng, t.map.grid, t.clearance, t.r_conn)
    exact = K.propagate(t.pos, t.parent, t.state, t.root)
    assert np.allclose(t.cost, exact, atol=1e-6)
    assert np.all(t.cost <= before + 1e-9)
    assert validate_tree(t) == []
    assert np.all(t.state == ACTIVE)
