"""King priority layer: king selection, chain push, sideways scatter and flee.

Works on positions only. Planning trees are never touched here; agents that
get displaced are reported so their owner can replan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pursuit import pure_pursuit_step
from .spatial import wg_nearest_wall_point, wg_seg_clear

NO_KING = -1
CONTACT_EPS = 0.05
FLEE_RADIUS = 5.0
SWEEP_STEP = math.radians(15.0)
FLEE_PROBE = 0.85  # a flee direction must stay clear of walls this far ahead
FRACTIONS = (1.0, 0.5, 0.25, 0.125, 0.0)


@dataclass
class PriorityTable:
    priorities: dict
    tiebreak: dict
    active: dict = field(default_factory=dict)

    @classmethod
    def from_priorities(cls, priorities: dict, seed) -> PriorityTable:
        rng = np.random.default_rng(seed)
        ids = sorted(priorities)
        draws = rng.permutation(len(ids))
        return cls(dict(priorities), {i: int(d) for i, d in zip(ids, draws)}, {i: True for i in ids})

    def key(self, i):
        return (self.priorities[i], self.tiebreak[i])

    def deactivate(self, i):
        self.active[i] = False

    def ranking(self) -> list:
        return sorted(self.priorities, key=self.key, reverse=True)


def select_king(table: PriorityTable, agents=None) -> int:
    """Highest-priority active agent (ties go to the larger seeded draw)."""
    ids = [i for i in (table.priorities if agents is None else agents) if table.active.get(i, False)]
    if not ids:
        return NO_KING
    return max(ids, key=table.key)


@dataclass
class Body:
    """What the coordinator sees of an agent."""

    id: int
    pos: np.ndarray
    radius: float = 0.4
    speed: float = 2.0
    path: np.ndarray | None = None  # upcoming waypoints
    plan_grid: tuple | None = None  # the agent's known walls, for corner cutting

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64)


@dataclass
class PushChain:
    members: list = field(default_factory=list)
    displacements: dict = field(default_factory=dict)
    scattered: list = field(default_factory=list)


@dataclass
class KingMove:
    displacements: dict
    chain: PushChain
    waiting: bool = False
    reached: bool = False
    popped: int = 0
    blocked: bool = False


def _rot(v, ang):
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _free(grid, p, d, radius, probe):
    q = p + d * probe
    return bool(wg_seg_clear(grid, p[0], p[1], q[0], q[1], radius))


def sweep_directions(axis) -> list:
    """Left, right, then a sweep toward straight along ``axis`` in 15 degree steps."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / (np.linalg.norm(axis) or 1.0)
    out = [_rot(axis, math.pi / 2), _rot(axis, -math.pi / 2)]
    k = 1
    while True:
        ang = math.pi / 2 - k * SWEEP_STEP
        if ang < -1e-9:
            break
        if abs(ang) < 1e-9:
            out.append(axis.copy())
            break
        out += [_rot(axis, ang), _rot(axis, -ang)]
        k += 1
    return out


def first_free_direction(grid, pos, axis, radius, probe=FLEE_PROBE):
    for d in sweep_directions(axis):
        if _free(grid, pos, d, radius, probe):
            return d
    return None


def _push(o: Body, src_new, h, s: float, walls):
    """Displacement of ``o`` pushed along ``h``, or None if it would be driven into a wall.

    A push that ends within contact distance of a wall counts as into the wall;
    the blocker then slides along the wall if that still moves it forward.
    """
    d = h * s
    p = o.pos
    if wg_seg_clear(walls, p[0], p[1], p[0] + d[0], p[1] + d[1], o.radius + CONTACT_EPS):
        return d
    _, qx, qy = wg_nearest_wall_point(walls, p[0], p[1], o.radius + CONTACT_EPS + s)
    n = p - np.array([qx, qy])
    norm = math.hypot(n[0], n[1])
    if norm > 1e-12:
        n /= norm
        into = float(d @ n)
        if into < 0.0:
            d = d - into * n
    if float(d @ h) > 1e-9 and wg_seg_clear(walls, p[0], p[1], p[0] + d[0], p[1] + d[1], o.radius):
        return d
    return None


def king_step(king: Body, others, walls, dt: float) -> KingMove:
    """King follows its path ignoring others; agents in its way are pushed or scattered."""
    if king.path is None or len(king.path) == 0:
        return KingMove({king.id: np.zeros(2)}, PushChain())
    st = pure_pursuit_step(king.pos, king.path, king.speed, dt, wall_grid=walls, radius=king.radius,
                           plan_grid=king.plan_grid)
    adv = st.position - king.pos
    s = float(np.linalg.norm(adv))
    disp = {king.id: adv}
    chain = PushChain()
    if s <= 1e-12:
        return KingMove(disp, chain, reached=st.reached, popped=st.popped, blocked=st.blocked)
    h = adv / s
    others = [o for o in others if o.id != king.id]
    frontier = [(king, st.position)]
    taken = {king.id}
    while frontier:
        src, src_new = frontier.pop(0)
        touching = []
        for o in others:
            if o.id in taken:
                continue
            gap = float(np.linalg.norm(o.pos - src_new))
            if gap < src.radius + o.radius + CONTACT_EPS and float((o.pos - src.pos) @ h) > 0.0:
                touching.append((gap, o))
        for _, o in sorted(touching, key=lambda t: (t[0], t[1].id)):
            taken.add(o.id)
            d = _push(o, src_new, h, s, walls)
            if d is None:
                away = o.pos - src_new
                side = None
                for cand in sweep_directions(h)[:-1]:
                    if float(cand @ away) >= 0.0 and _free(walls, o.pos, cand, o.radius, s):
                        side = cand
                        break
                if side is None:
                    # walled pocket: nobody moves this frame
                    chain.members.append(o.id)
                    chain.displacements[o.id] = np.zeros(2)
                    return KingMove({king.id: np.zeros(2), **chain.displacements}, chain, waiting=True)
                d = side * s
                chain.scattered.append(o.id)
            chain.members.append(o.id)
            chain.displacements[o.id] = d
            disp[o.id] = d
            frontier.append((o, o.pos + d))
    return KingMove(disp, chain, reached=st.reached, popped=st.popped, blocked=st.blocked)


def nonking_step(agent: Body, king_pos, walls, dt: float):
    """Flee displacement when within ``FLEE_RADIUS`` of the king, else None (follow own path)."""
    if king_pos is None:
        return None
    king_pos = np.asarray(king_pos, dtype=np.float64)
    axis = agent.pos - king_pos
    dist = float(np.linalg.norm(axis))
    if dist >= FLEE_RADIUS:
        return None
    if dist < 1e-12:
        axis = np.array([1.0, 0.0])
    d = first_free_direction(walls, agent.pos, axis, agent.radius)
    if d is None:
        return np.zeros(2)
    return d * agent.speed * dt


def resolve(bodies: dict, proposals: dict, order, walls, obstacles=()) -> dict:
    """Apply proposed displacements in ``order``, scaling each down until it is safe.

    Safe means the motion keeps ``radius`` from every wall and the end point
    keeps ``r_i + r_j`` from every other agent's current position (and from
    the ``(x, y, r)`` obstacles). A move that only increases an existing
    overlap's gap is always allowed. A move stopped by another body is retried
    once along the contact tangent. Returns the accepted displacement per agent.
    """
    cur = {i: b.pos.copy() for i, b in bodies.items()}
    out = {}
    for i in order:
        d = proposals.get(i)
        if d is None:
            continue
        b = bodies[i]
        p = cur[i]
        frac, hit = _largest_safe(i, p, d, bodies, cur, walls, obstacles)
        if frac == 0.0 and hit is not None:
            # slide along the contact instead of stopping dead
            n = hit - p
            n /= math.hypot(n[0], n[1]) or 1.0
            into = float(d @ n)
            if into > 0.0:
                d = d - into * n
                frac, _ = _largest_safe(i, p, d, bodies, cur, walls, obstacles)
        cur[i] = p + d * frac
        out[i] = d * frac
    return out


def _largest_safe(i, p, d, bodies, cur, walls, obstacles):
    """Largest fraction of ``d`` that is safe for body ``i``, plus the first body that blocked it."""
    r = bodies[i].radius
    hit = None
    for frac in FRACTIONS[:-1]:
        new = p + d * frac
        if not wg_seg_clear(walls, p[0], p[1], new[0], new[1], r):
            continue
        blocker = None
        for j, q in cur.items():
            if j == i:
                continue
            gap = math.hypot(new[0] - q[0], new[1] - q[1])
            if gap < r + bodies[j].radius and gap < math.hypot(p[0] - q[0], p[1] - q[1]):
                blocker = q
                break
        if blocker is None:
            for ox, oy, orad in obstacles:
                gap = math.hypot(new[0] - ox, new[1] - oy)
                if gap < r + orad and gap < math.hypot(p[0] - ox, p[1] - oy):
                    blocker = np.array([ox, oy])
                    break
        if blocker is None:
            return frac, None
        if hit is None:
            hit = blocker
    return 0.0, hit
