"""Eager repair latency against full rebuild latency on one building tree.

    python3 scripts/repair_timing.py --events 50
"""

import argparse
import copy
import statistics
import time

import numpy as np

from pecman.geometry import WallSegment
from pecman.tree import ACTIVE, RepairContext, WallMap, build_rrt_star, eager_repair, full_rebuild
from pecman.world import generate_floorplan


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=21000)
    p.add_argument("--events", type=int, default=50)
    a = p.parse_args()
    scen = generate_floorplan("building", a.seed)
    ag = scen.agents[0]
    base = build_rrt_star(WallMap(scen.walls, scen.bounds), ag.start, ag.goal, a.iterations, a.seed,
                          bounds=scen.bounds)
    rng = np.random.default_rng(a.seed)
    nodes = np.flatnonzero(base.state == ACTIVE)
    rep, reb = [], []
    for k in range(a.events + 1):
        v = base.pos[int(rng.choice(nodes))]
        ang, half = rng.uniform(0, np.pi), rng.uniform(0.5, 1.5)
        off = half * np.array([np.cos(ang), np.sin(ang)])
        w = WallSegment.from_coords(*(v - off), *(v + off), len(scen.walls))
        tree = copy.deepcopy(base)
        t = time.perf_counter()
        eager_repair(tree, [w], RepairContext("eager"))
        t1 = time.perf_counter()
        full_rebuild(list(scen.walls) + [w], ag.start, ag.goal, a.iterations, k, bounds=scen.bounds)
        t2 = time.perf_counter()
        if k:
            rep.append(t1 - t)
            reb.append(t2 - t1)
    m1, m2 = statistics.median(rep), statistics.median(reb)
    print(f"{base.n} nodes, {a.events} events: eager {m1 * 1e3:.2f} ms, rebuild {m2 * 1e3:.2f} ms, "
          f"ratio {m2 / m1:.1f}x")


if __name__ == "__main__":
    main()
