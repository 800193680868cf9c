"""Carrot-style pure pursuit along a waypoint polyline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spatial import wg_nearest_wall_point, wg_seg_clear

LOOKAHEAD = 1.5
GOAL_TOL = 0.5


@dataclass
class PursuitStep:
    position: np.ndarray
    popped: int = 0  # leading waypoints passed this step
    reached: bool = False
    blocked: bool = False


def lookahead_point(pos, path, lookahead: float = LOOKAHEAD) -> np.ndarray:
    """Point at arc length ``lookahead`` along ``pos -> path[0] -> path[1] ...``."""
    prev = np.asarray(pos, dtype=np.float64)
    left = lookahead
    for w in path:
        w = np.asarray(w, dtype=np.float64)
        d = math.hypot(w[0] - prev[0], w[1] - prev[1])
        if d >= left:
            return prev + (w - prev) * (left / d)
        left -= d
        prev = w
    return prev.copy()


def _passed(pos, a, b, radius) -> bool:
    """Agent within ``radius`` of waypoint ``a`` and already beyond it toward ``b``."""
    ab = b - a
    ap = pos - a
    if math.hypot(ap[0], ap[1]) > radius:
        return False
    return float(ap @ ab) > 0.0


def pure_pursuit_step(pos, path, speed: float, dt: float, *, wall_grid=None, radius: float = 0.4,
                      lookahead: float = LOOKAHEAD, goal_tol: float = GOAL_TOL, plan_grid=None,
                      plan_clearance: float | None = None) -> PursuitStep:
    """Advance toward the lookahead point at ``speed``.

    ``path`` holds the upcoming waypoints (its last entry is the goal). A
    waypoint is popped once the agent is within ``goal_tol`` of it (together
    with every waypoint before it), or within ``lookahead`` and already past
    it. If the straight line to the carrot is not clear of the known walls
    (``plan_grid``) the agent heads for the next waypoint instead, so corners are cut only where that is safe. The move is
    clamped against the true walls (``wall_grid``) and flagged as blocked.
    """
    pos = np.asarray(pos, dtype=np.float64)
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return PursuitStep(pos.copy())
    if math.hypot(*(pts[-1] - pos)) <= goal_tol:
        return PursuitStep(pos.copy(), popped=len(pts) - 1, reached=True)
    # a path that loops back past the agent is cut at the last waypoint already reached
    near = np.flatnonzero(np.hypot(pts[:-1, 0] - pos[0], pts[:-1, 1] - pos[1]) <= goal_tol)
    popped = int(near[-1]) + 1 if len(near) else 0
    while len(pts) - popped > 1:
        a, b = pts[popped], pts[popped + 1]
        if math.hypot(*(a - pos)) <= goal_tol or _passed(pos, a, b, lookahead):
            popped += 1
        else:
            break
    ahead = pts[popped:]
    carrot = lookahead_point(pos, ahead, lookahead)
    if plan_grid is not None:
        c = radius if plan_clearance is None else plan_clearance
        if not wg_seg_clear(plan_grid, pos[0], pos[1], carrot[0], carrot[1], c):
            carrot = ahead[0]
    step = speed * dt
    d = math.hypot(*(carrot - pos))
    if d <= 1e-9:
        carrot = ahead[0]
        d = math.hypot(*(carrot - pos))
    if d <= 1e-12:
        return PursuitStep(pos.copy(), popped=popped)
    move = (carrot - pos) * (min(step, d) / d)
    new = pos + move
    blocked = False
    if wall_grid is not None:
        new, blocked = clamp_move(pos, move, wall_grid, radius)
    reached = math.hypot(*(pts[-1] - new)) <= goal_tol
    return PursuitStep(new, popped=popped, reached=reached, blocked=blocked)


def _largest_fraction(pos, move, wall_grid, radius):
    for frac in (1.0, 0.5, 0.25, 0.125):
        new = pos + move * frac
        if wg_seg_clear(wall_grid, pos[0], pos[1], new[0], new[1], radius):
            return new, frac
    return None, 0.0


def clamp_move(pos, move, wall_grid, radius: float):
    """Largest safe fraction (1, 1/2, 1/4, 1/8) of ``move``; if none, slide along the wall.

    Returns ``(new_position, blocked)``.
    """
    new, frac = _largest_fraction(pos, move, wall_grid, radius)
    if frac == 1.0:
        return new, False
    if new is not None:
        return new, True
    d, qx, qy = wg_nearest_wall_point(wall_grid, pos[0], pos[1], radius + 0.5)
    n = pos - np.array([qx, qy])
    norm = math.hypot(n[0], n[1])
    if norm > 1e-12:
        n /= norm
        into = float(move @ n)
        if into < 0.0:
            slide = move - into * n
            new, frac = _largest_fraction(pos, slide, wall_grid, radius)
            if new is not None:
                return new, True
    return pos.copy(), True
