"""Scenarios, procedural floorplans, pedestrians and the simulated LiDAR.

Wall knowledge is quantized: every wall is cut into cells of ``QUANTUM``
meters measured from its first endpoint, and a map is a set of integer cell
keys (see :func:`cell_key`). Contiguous runs of cells are exposed as
:class:`Fragment` objects and turned back into geometry with
:func:`cells_to_segments`.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import ndimage

from .geometry import (
    Point2,
    WallSegment,
    _point_seg_dist_nb,
    _ray_disc_nb,
    _ray_seg_param_nb,
    walls_to_array,
)
from .spatial import build_wall_grid, wg_nearest_wall_point, wg_seg_clear

SCHEMA_VERSION = 1
QUANTUM = 0.25
N_RAYS = 180
AGENT_RADIUS = 0.4
AGENT_SPEED = 2.0
PEDESTRIAN_RADIUS = 0.3
PED_SPEED_RANGE = (0.5, 2.0)
PED_MAX_TURN = 0.15  # rad per frame
DOOR_WIDTH = 2.2
CORNER_INSET = 1.5

_CELL_BITS = 20
_CELL_MASK = (1 << _CELL_BITS) - 1


@dataclass(frozen=True)
class Preset:
    size: float
    walls: int
    iterations: int
    agents: tuple[int, int]
    min_room: float
    pedestrians: int


# size, wall count and RRT* iterations follow the published scenario table
PRESETS: dict[str, Preset] = {
    "building": Preset(32.0, 41, 5_000, (2, 4), 4.0, 8),
    "office": Preset(32.0, 42, 5_000, (2, 4), 3.6, 8),
    "warehouse": Preset(32.0, 28, 5_000, (2, 4), 5.0, 8),
    "hospital": Preset(96.0, 200, 30_000, (4, 4), 5.0, 30),
    "airport": Preset(160.0, 250, 50_000, (4, 4), 7.0, 30),
    "campus": Preset(128.0, 300, 80_000, (4, 4), 5.0, 30),
    "university": Preset(192.0, 400, 160_000, (4, 4), 6.0, 30),
    # hospital shrunk to 64 m for desk-scale runs; walls and iterations scale with area
    "hospital-64": Preset(64.0, 89, 13_333, (4, 4), 5.0, 16),
}
CORRIDOR_PRESET = "corridor-stress"
PRESET_NAMES = tuple(PRESETS) + (CORRIDOR_PRESET,)


class ScenarioError(ValueError):
    pass


@dataclass
class AgentSpec:
    start: Point2
    goal: Point2
    radius: float = AGENT_RADIUS
    speed: float = AGENT_SPEED
    priority: int = 1


@dataclass
class PedestrianSpec:
    count: int = 0
    speed_min: float = PED_SPEED_RANGE[0]
    speed_max: float = PED_SPEED_RANGE[1]
    radius: float = PEDESTRIAN_RADIUS


@dataclass
class Scenario:
    name: str
    size: tuple[float, float]
    walls: list[WallSegment]
    rrt_iterations: int
    agents: list[AgentSpec]
    pedestrians: PedestrianSpec = field(default_factory=PedestrianSpec)
    seed: int = 0

    @property
    def is_small(self) -> bool:
        return max(self.size) <= 32.0

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, float(self.size[0]), float(self.size[1]))

    @property
    def sensing_range(self) -> float:
        return 10.0 if self.is_small else 20.0

    @property
    def steer_step(self) -> float:
        return 1.5 if self.is_small else 3.0

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "bounds": [self.size[0], self.size[1]],
            "walls": [[[w.a.x, w.a.y], [w.b.x, w.b.y]] for w in self.walls],
            "rrt_iterations": self.rrt_iterations,
            "agents": [
                {
                    "start": [a.start.x, a.start.y],
                    "goal": [a.goal.x, a.goal.y],
                    "radius": a.radius,
                    "speed": a.speed,
                    "priority": a.priority,
                }
                for a in self.agents
            ],
            "pedestrians": {
                "count": self.pedestrians.count,
                "speed_range": [self.pedestrians.speed_min, self.pedestrians.speed_max],
                "radius": self.pedestrians.radius,
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scenario:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema {d.get('schema_version')!r}")
        walls = [
            WallSegment(Point2(*map(float, a)), Point2(*map(float, b)), i)
            for i, (a, b) in enumerate(d["walls"])
        ]
        agents = [
            AgentSpec(
                Point2(*a["start"]), Point2(*a["goal"]), a["radius"], a["speed"], a["priority"]
            )
            for a in d["agents"]
        ]
        ped = d["pedestrians"]
        return cls(
            name=d["name"],
            size=(d["bounds"][0], d["bounds"][1]),
            walls=walls,
            rrt_iterations=d["rrt_iterations"],
            agents=agents,
            pedestrians=PedestrianSpec(ped["count"], ped["speed_range"][0], ped["speed_range"][1], ped["radius"]),
            seed=d["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Scenario:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> Scenario:
        with open(path) as f:
            return cls.from_json(f.read())


class WallSet:
    """Ground-truth walls prepared for scanning and collision queries."""

    def __init__(self, walls, bounds=None):
        self.walls = list(walls)
        self.array = walls_to_array(self.walls)
        if len(self.walls):
            d = self.array[:, 2:] - self.array[:, :2]
            self.lengths = np.hypot(d[:, 0], d[:, 1])
        else:
            self.lengths = np.zeros(0)
        self.ncells = np.maximum(1, np.ceil(self.lengths / QUANTUM - 1e-9)).astype(np.int64)
        ids = [w.id for w in self.walls]
        # cell keys carry the wall id; ids must index rows of ``array``
        if ids != list(range(len(ids))):
            raise ScenarioError("wall ids must be 0..n-1 in order")
        self.grid = build_wall_grid(self.array, bounds)

    def __len__(self):
        return len(self.walls)


# ---------------------------------------------------------------------------
# cells and fragments


class Fragment(NamedTuple):
    """A run of quantized cells ``[start, end)`` along wall ``wall_id``."""

    wall_id: int
    start: int
    end: int


def cell_key(wall_id: int, k: int) -> int:
    return (wall_id << _CELL_BITS) | k


def split_key(key: int) -> tuple[int, int]:
    return key >> _CELL_BITS, key & _CELL_MASK


def cells_to_fragments(cells) -> list[Fragment]:
    keys = np.fromiter(cells, dtype=np.int64, count=len(cells))
    if len(keys) == 0:
        return []
    keys.sort()
    wall = keys >> _CELL_BITS
    k = keys & _CELL_MASK
    brk = np.ones(len(keys), dtype=bool)
    brk[1:] = (wall[1:] != wall[:-1]) | (k[1:] != k[:-1] + 1)
    starts = np.flatnonzero(brk)
    ends = np.append(starts[1:], len(keys))
    return [Fragment(int(wall[s]), int(k[s]), int(k[e - 1]) + 1) for s, e in zip(starts, ends)]


def fragments_to_cells(fragments) -> set[int]:
    out = set()
    for f in fragments:
        base = f.wall_id << _CELL_BITS
        out.update(range(base | f.start, base | f.end))
    return out


def cells_to_segments(cells, wallset: WallSet) -> np.ndarray:
    """Geometry (n, 4) of the merged cell runs, clipped to the true wall ends."""
    frags = cells_to_fragments(cells)
    return fragments_to_segments(frags, wallset)


def fragments_to_segments(frags, wallset: WallSet) -> np.ndarray:
    if not frags:
        return np.zeros((0, 4))
    f = np.array(frags, dtype=np.int64)
    w = wallset.array[f[:, 0]]
    length = wallset.lengths[f[:, 0]]
    t0 = np.minimum(f[:, 1] * QUANTUM, length) / length
    t1 = np.minimum(f[:, 2] * QUANTUM, length) / length
    d = w[:, 2:] - w[:, :2]
    a = w[:, :2] + d * t0[:, None]
    b = w[:, :2] + d * t1[:, None]
    return np.hstack([a, b])


def fragment_segment(frag: Fragment, wallset: WallSet) -> WallSegment:
    s = fragments_to_segments([frag], wallset)[0]
    return WallSegment.from_coords(*s, id=frag.wall_id)


# ---------------------------------------------------------------------------
# LiDAR


@dataclass
class ScanResult:
    discovered_walls: frozenset  # of Fragment
    dynamic_detections: list  # of (Point2, radius)
    ray_hits: tuple  # N_RAYS distances
    cells: frozenset = frozenset()
    detected_ids: tuple = ()


@njit(cache=True)
def _scan_kernel(ox, oy, segs, lengths, ncells, discs, r_s, n_rays, quantum):
    nw = segs.shape[0]
    near = np.empty(nw, np.int64)
    m = 0
    for w in range(nw):
        if _point_seg_dist_nb(ox, oy, segs[w, 0], segs[w, 1], segs[w, 2], segs[w, 3]) <= r_s:
            near[m] = w
            m += 1
    hit_d = np.empty(n_rays)
    hit_w = np.full(n_rays, -1, np.int64)
    hit_c = np.full(n_rays, -1, np.int64)
    hit_o = np.full(n_rays, -1, np.int64)
    for r in range(n_rays):
        ang = 2.0 * math.pi * r / n_rays
        dx = math.cos(ang)
        dy = math.sin(ang)
        best = r_s
        bw = -1
        bu = 0.0
        for q in range(m):
            w = near[q]
            t, u = _ray_seg_param_nb(ox, oy, dx, dy, segs[w, 0], segs[w, 1], segs[w, 2], segs[w, 3])
            if t < best:
                best = t
                bw = w
                bu = u
        bo = -1
        for o in range(discs.shape[0]):
            t = _ray_disc_nb(ox, oy, dx, dy, discs[o, 0], discs[o, 1], discs[o, 2])
            if t < best:
                best = t
                bo = o
        hit_d[r] = best
        if bo >= 0:
            hit_o[r] = bo
        elif bw >= 0:
            hit_w[r] = bw
            k = int(bu * lengths[bw] / quantum)
            hit_c[r] = min(max(k, 0), ncells[bw] - 1)
    return hit_d, hit_w, hit_c, hit_o


@njit(cache=True)
def _hit_keys(hit_w, hit_c, bits):
    n = hit_w.shape[0]
    total = 0
    for r in range(n):
        w = hit_w[r]
        if w < 0:
            continue
        total += 1
        nxt = (r + 1) % n
        if hit_w[nxt] == w:
            total += abs(hit_c[nxt] - hit_c[r]) + 1
    out = np.empty(total, np.int64)
    m = 0
    for r in range(n):
        w = hit_w[r]
        if w < 0:
            continue
        base = w << bits
        c = hit_c[r]
        out[m] = base | c
        m += 1
        nxt = (r + 1) % n
        if hit_w[nxt] == w:
            c2 = hit_c[nxt]
            lo = min(c, c2)
            hi = max(c, c2)
            for k in range(lo, hi + 1):
                out[m] = base | k
                m += 1
    return out[:m]


def _hits_to_cells(hit_w, hit_c) -> set[int]:
    """Struck cells plus the span between adjacent rays that struck the same wall."""
    return set(_hit_keys(np.asarray(hit_w, np.int64), np.asarray(hit_c, np.int64), _CELL_BITS).tolist())


_NO_DISCS = np.zeros((0, 3))


def lidar_scan(origin: Point2, walls, r_s: float, obstacles=()) -> ScanResult:
    """360 degree scan with ``N_RAYS`` rays; nearest hit per ray wins.

    ``walls`` is a :class:`WallSet` (or a list of walls with ids 0..n-1);
    ``obstacles`` are discs (pedestrians, other agents) that occlude walls
    and are reported as dynamic detections.
    """
    ws = walls if isinstance(walls, WallSet) else WallSet(walls)
    discs = (
        np.array([(d.center.x, d.center.y, d.radius) for d in obstacles], dtype=np.float64)
        if len(obstacles)
        else _NO_DISCS
    )
    return _scan_arrays(origin.x, origin.y, ws, r_s, discs, obstacles)


def scan_cells(ox, oy, ws: WallSet, r_s, discs):
    """Raw scan: (struck cell keys, sorted ids of detected discs, per-ray distances)."""
    hit_d, hit_w, hit_c, hit_o = _scan_kernel(
        float(ox), float(oy), ws.array, ws.lengths, ws.ncells, discs, float(r_s), N_RAYS, QUANTUM
    )
    return _hits_to_cells(hit_w, hit_c), np.unique(hit_o[hit_o >= 0]), hit_d


def _scan_arrays(ox, oy, ws: WallSet, r_s, discs, obstacles=None) -> ScanResult:
    cells, seen, hit_d = scan_cells(ox, oy, ws, r_s, discs)
    cells = frozenset(cells)
    seen = seen.tolist()
    if obstacles is not None and len(obstacles):
        dets = [(obstacles[o].center, obstacles[o].radius) for o in seen]
    else:
        dets = [(Point2(float(discs[o, 0]), float(discs[o, 1])), float(discs[o, 2])) for o in seen]
    return ScanResult(
        discovered_walls=frozenset(cells_to_fragments(cells)),
        dynamic_detections=dets,
        ray_hits=tuple(hit_d.tolist()),
        cells=cells,
        detected_ids=tuple(seen),
    )


# ---------------------------------------------------------------------------
# pedestrians


@dataclass
class Pedestrian:
    position: Point2
    velocity: tuple[float, float]
    radius: float = PEDESTRIAN_RADIUS
    rng: np.random.Generator = field(default=None, repr=False, compare=False)
    speed_range: tuple[float, float] = PED_SPEED_RANGE

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


def spawn_pedestrians(scenario: Scenario, count: int, seed: int, wallset: WallSet | None = None):
    ws = wallset or WallSet(scenario.walls, scenario.bounds)
    spec = scenario.pedestrians
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 7919])
    rng = np.random.default_rng(ss)
    keep_away = [a.start for a in scenario.agents] + [a.goal for a in scenario.agents]
    w, h = scenario.size
    peds = []
    children = ss.spawn(count)
    tries = 0
    while len(peds) < count:
        tries += 1
        if tries > 10_000:
            raise ScenarioError("could not place pedestrians")
        x = rng.uniform(1.0, w - 1.0)
        y = rng.uniform(1.0, h - 1.0)
        d, _, _ = wg_nearest_wall_point(ws.grid, x, y, 1.0)
        if d < spec.radius + 0.2:
            continue
        if any(math.hypot(x - p.x, y - p.y) < 3.0 for p in keep_away):
            continue
        if any(math.hypot(x - p.position.x, y - p.position.y) < 2 * spec.radius + 0.1 for p in peds):
            continue
        prng = np.random.default_rng(children[len(peds)])
        heading = prng.uniform(-math.pi, math.pi)
        speed = prng.uniform(spec.speed_min, spec.speed_max)
        peds.append(
            Pedestrian(
                Point2(x, y),
                (speed * math.cos(heading), speed * math.sin(heading)),
                spec.radius,
                prng,
                (spec.speed_min, spec.speed_max),
            )
        )
    return peds


def _step_one(p: Pedestrian, grid, dt: float) -> Pedestrian:
    rng = p.rng
    px, py = p.position.x, p.position.y
    speed = math.hypot(*p.velocity)
    heading = math.atan2(p.velocity[1], p.velocity[0]) + rng.uniform(-PED_MAX_TURN, PED_MAX_TURN)
    vx, vy = speed * math.cos(heading), speed * math.sin(heading)
    nx, ny = px + vx * dt, py + vy * dt
    if not wg_seg_clear(grid, px, py, nx, ny, p.radius):
        # reflect about the contact normal and draw a fresh speed
        d, qx, qy = wg_nearest_wall_point(grid, nx, ny, 1.0)
        mx, my = px - qx, py - qy
        norm = math.hypot(mx, my)
        if norm > 1e-12:
            mx, my = mx / norm, my / norm
            dot = vx * mx + vy * my
            if dot < 0:
                vx, vy = vx - 2 * dot * mx, vy - 2 * dot * my
        else:
            vx, vy = -vx, -vy
        speed = rng.uniform(*p.speed_range)
        h2 = math.atan2(vy, vx)
        vx, vy = speed * math.cos(h2), speed * math.sin(h2)
        nx, ny = px + vx * dt, py + vy * dt
        if not wg_seg_clear(grid, px, py, nx, ny, p.radius):
            nx, ny = px, py
    return Pedestrian(Point2(nx, ny), (vx, vy), p.radius, rng, p.speed_range)


def step_pedestrians(pedestrians, walls, dt: float, copy_rng: bool = True):
    """Advance every pedestrian by one frame.

    Returns new Pedestrian objects; with ``copy_rng`` the inputs (and their
    generators) are left untouched so the step is a pure function.
    """
    ws = walls if isinstance(walls, WallSet) else WallSet(walls)
    out = []
    for p in pedestrians:
        if copy_rng:
            p = Pedestrian(p.position, p.velocity, p.radius, copy.deepcopy(p.rng), p.speed_range)
        out.append(_step_one(p, ws.grid, dt))
    return out


# ---------------------------------------------------------------------------
# floorplan generation


def generate_floorplan(preset: str, seed: int, n_agents: int | None = None) -> Scenario:
    """Procedural floorplan with the preset's size and exact wall count."""
    if preset == CORRIDOR_PRESET:
        return corridor_stress(seed)
    if preset not in PRESETS:
        raise ScenarioError(f"unknown preset {preset!r}; expected one of {PRESET_NAMES}")
    spec = PRESETS[preset]
    n = spec.agents[1] if n_agents is None else n_agents
    if not spec.agents[0] <= n <= spec.agents[1]:
        raise ScenarioError(f"{preset} supports {spec.agents[0]}-{spec.agents[1]} agents, got {n}")
    for attempt in range(100):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, attempt])
        walls = _bsp_walls(spec, rng)
        if walls is None:
            continue
        scen = Scenario(
            name=preset,
            size=(spec.size, spec.size),
            walls=walls,
            rrt_iterations=spec.iterations,
            agents=_cross_agents(spec.size, n),
            pedestrians=PedestrianSpec(spec.pedestrians),
            seed=int(seed),
        )
        if is_solvable(scen):
            return scen
    raise ScenarioError(f"no solvable {preset} layout after 100 attempts (seed {seed})")


def _cross_agents(size: float, n: int) -> list[AgentSpec]:
    lo, hi = CORNER_INSET, size - CORNER_INSET
    corners = [((lo, lo), (hi, hi)), ((hi, hi), (lo, lo)), ((lo, hi), (hi, lo)), ((hi, lo), (lo, hi))]
    return [AgentSpec(Point2(*s), Point2(*g)) for s, g in corners[:n]]


def _bsp_walls(spec: Preset, rng) -> list[WallSegment] | None:
    size = spec.size
    segs = [(0.0, 0.0, size, 0.0), (size, 0.0, size, size), (size, size, 0.0, size), (0.0, size, 0.0, 0.0)]
    doors = []  # (vertical, fixed, lo, hi)
    rooms = [(0.0, 0.0, size, size)]
    m = spec.min_room
    door_clear = 1.0
    fails = 0
    while len(segs) < spec.walls:
        need = spec.walls - len(segs)
        areas = np.array([(r[2] - r[0]) * (r[3] - r[1]) for r in rooms])
        splittable = np.array([(r[2] - r[0]) >= 2 * m or (r[3] - r[1]) >= 2 * m for r in rooms])
        if not splittable.any():
            return None
        p = np.where(splittable, areas, 0.0)
        idx = int(rng.choice(len(rooms), p=p / p.sum()))
        x0, y0, x1, y1 = rooms[idx]
        w, h = x1 - x0, y1 - y0
        options = []
        if w >= 2 * m:
            options.append(True)
        if h >= 2 * m:
            options.append(False)
        if len(options) == 2:
            vertical = (w >= h) if rng.random() < 0.75 else (w < h)
        else:
            vertical = options[0]
        lo, hi = (x0, x1) if vertical else (y0, y1)
        s0, s1 = (y0, y1) if vertical else (x0, x1)
        for _ in range(30):
            c = round(float(rng.uniform(lo + m, hi - m)) * 4) / 4
            if not (lo + m - 1e-9 <= c <= hi - m + 1e-9):
                continue
            if not any(
                dv != vertical and fixed in (s0, s1) and dlo - door_clear < c < dhi + door_clear
                for dv, fixed, dlo, dhi in doors
            ):
                break
        else:
            fails += 1
            if fails > 200:
                return None
            continue
        if need >= 2:
            d0 = float(rng.uniform(s0 + 0.5, s1 - 0.5 - DOOR_WIDTH))
            d0 = round(d0 * 4) / 4
            d0 = min(max(d0, s0 + 0.5), s1 - 0.5 - DOOR_WIDTH)
            parts = [(s0, d0), (d0 + DOOR_WIDTH, s1)]
            door = (d0, d0 + DOOR_WIDTH)
        else:
            if rng.random() < 0.5:
                parts = [(s0, s1 - DOOR_WIDTH)]
                door = (s1 - DOOR_WIDTH, s1)
            else:
                parts = [(s0 + DOOR_WIDTH, s1)]
                door = (s0, s0 + DOOR_WIDTH)
        for a, b in parts:
            segs.append((c, a, c, b) if vertical else (a, c, b, c))
        doors.append((vertical, c, door[0], door[1]))
        del rooms[idx]
        if vertical:
            rooms += [(x0, y0, c, y1), (c, y0, x1, y1)]
        else:
            rooms += [(x0, y0, x1, c), (x0, c, x1, y1)]
    return [WallSegment.from_coords(*s, id=i) for i, s in enumerate(segs)]


def corridor_stress(seed: int) -> Scenario:
    """A 2 m x 8 m corridor joining two rooms; three agents start at each end."""
    W, H = 28.0, 12.0
    cx0, cx1, cy0, cy1 = 10.0, 18.0, 5.0, 7.0
    segs = [
        (0.0, 0.0, W, 0.0),
        (W, 0.0, W, H),
        (W, H, 0.0, H),
        (0.0, H, 0.0, 0.0),
        (cx0, cy1, cx1, cy1),
        (cx0, cy0, cx1, cy0),
        (cx0, cy1, cx0, H),
        (cx0, 0.0, cx0, cy0),
        (cx1, cy1, cx1, H),
        (cx1, 0.0, cx1, cy0),
    ]
    walls = [WallSegment.from_coords(*s, id=i) for i, s in enumerate(segs)]
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 4242])
    prios = rng.permutation(6) + 1
    ys = (2.5, 6.0, 9.5)
    agents = []
    for k, y in enumerate(ys):
        agents.append(AgentSpec(Point2(4.0, y), Point2(W - 2.0, y), priority=int(prios[k])))
    for k, y in enumerate(ys):
        agents.append(AgentSpec(Point2(W - 4.0, y), Point2(2.0, y), priority=int(prios[3 + k])))
    return Scenario(
        name=CORRIDOR_PRESET,
        size=(W, H),
        walls=walls,
        rrt_iterations=5_000,
        agents=agents,
        pedestrians=PedestrianSpec(0),
        seed=int(seed),
    )


def occupancy(scenario: Scenario, clearance: float, res: float = 0.2):
    """Boolean free-space raster (True = a disc of radius ``clearance`` fits)."""
    w, h = scenario.size
    nx, ny = int(math.ceil(w / res)), int(math.ceil(h / res))
    wall_px = np.zeros((ny, nx), dtype=bool)
    for s in scenario.walls:
        n = int(math.ceil(s.length / (res * 0.5))) + 1
        t = np.linspace(0.0, 1.0, n)
        xs = s.a.x + t * (s.b.x - s.a.x)
        ys = s.a.y + t * (s.b.y - s.a.y)
        ix = np.clip((xs / res).astype(int), 0, nx - 1)
        iy = np.clip((ys / res).astype(int), 0, ny - 1)
        wall_px[iy, ix] = True
    dist = ndimage.distance_transform_edt(~wall_px) * res
    return dist > clearance + res


def is_solvable(scenario: Scenario) -> bool:
    """Every agent's start and goal lie in one connected free region."""
    clearance = max(a.radius for a in scenario.agents) + 0.05
    free = occupancy(scenario, clearance)
    labels, _ = ndimage.label(free)
    res = 0.2
    ny, nx = free.shape
    for a in scenario.agents:
        ls = labels[min(int(a.start.y / res), ny - 1), min(int(a.start.x / res), nx - 1)]
        lg = labels[min(int(a.goal.y / res), ny - 1), min(int(a.goal.x / res), nx - 1)]
        if ls == 0 or ls != lg:
            return False
    return True
