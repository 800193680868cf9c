"""The 4-phase simulation loop, trials and benchmarks.

Per frame: (1) every active agent scans; (2) maps are synchronized (shared)
or grown from own scans only (independent); (3) each agent repairs its tree
for new walls, then morphs it around nearby dynamic obstacles; (4) the king
layer proposes displacements, the rest follow their paths by pure pursuit,
and all moves are resolved in a fixed order. Pedestrians step last.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _treekern as K
from .coordination import (
    NO_KING,
    Body,
    PriorityTable,
    king_step,
    nonking_step,
    resolve,
    select_king,
)
from .perception import (
    InProcessTransport,
    Mode,
    SharedMapState,
    collect_and_broadcast,
    make_message,
    self_update,
)
from .pursuit import GOAL_TOL, pure_pursuit_step
from .spatial import wg_nearest_wall_point, wg_point_dist
from .tree import (
    SMALL_MAP_REBUILD,
    RepairContext,
    RepairStats,
    Strategy,
    WallMap,
    build_rrt_star,
    clear_dynamic,
    eager_repair,
    full_rebuild,
    lazy_eager_repair,
    morph_in_place,
    swift_repair,
)
from .world import (
    Scenario,
    WallSet,
    cells_to_fragments,
    fragments_to_segments,
    generate_floorplan,
    is_solvable,
    scan_cells,
    spawn_pedestrians,
    step_pedestrians,
)

DT = 0.05
SMALL_TIME_LIMIT = 120.0
LARGE_TIME_LIMIT = 600.0
RETRY_FRAMES = 20
STUCK_FRAMES = 20
MAX_BUDGET_SCALE = 4  # consecutive failed rebuilds double the sample budget up to this factor
SEED_ENV = "PECMAN_SEED"


@dataclass
class TrialConfig:
    preset: str = "building"
    seed: int = 0
    strategy: Strategy = Strategy.LAZY
    mode: Mode = Mode.SHARED
    n_agents: int | None = None
    pedestrians: int | None = None
    dt: float = DT
    time_limit: float | None = None
    trial_seed: int | None = None
    scenario: Scenario | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.mode = Mode(self.mode)

    def build_scenario(self) -> Scenario:
        if self.scenario is not None:
            return self.scenario
        return generate_floorplan(self.preset, self.seed, self.n_agents)

    def limit(self, scen: Scenario) -> float:
        if self.time_limit is not None:
            return self.time_limit
        return SMALL_TIME_LIMIT if scen.is_small else LARGE_TIME_LIMIT


@dataclass
class TrialResult:
    preset: str
    seed: int
    strategy: str
    mode: str
    n_agents: int
    t_goal: list
    path_length: list
    rebuilds: list
    repairs: list
    skips: list
    pushes: list
    flees: list
    scatters: list
    priorities: list
    completion_time: float | None = None
    time_limit: float | None = None
    success: bool = False
    collision: bool = False
    invalid: bool = False
    ped_contacts: int = 0
    frames: int = 0
    sync_violations: int = 0
    exit_order: list = field(default_factory=list)
    king_order: list = field(default_factory=list)
    trace: list | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        return d

    @property
    def total_rebuilds(self) -> int:
        return int(sum(self.rebuilds))


class _Agent:
    def __init__(self, idx, spec, bounds):
        self.id = idx
        self.pos = np.array([spec.start.x, spec.start.y])
        self.goal = np.array([spec.goal.x, spec.goal.y])
        self.radius = spec.radius
        self.speed = spec.speed
        self.priority = spec.priority
        self.known = WallMap(np.zeros((0, 4)), bounds)
        self.stats = RepairStats()
        self.tree = None
        self.ids = None  # node ids from the root (next target) to the goal node
        self.active = True
        self.t_goal = None
        self.path_len = 0.0
        self.pushes = self.flees = self.scatters = 0
        self.displaced = False
        self.retry_at = 0
        self.failed_builds = 0
        self.stuck = 0

    def waypoints(self):
        if self.tree is None or self.ids is None or len(self.ids) == 0:
            return None
        return self.tree.pos[self.ids]


def _rnd(x):
    return round(float(x), 6)


class Simulation:
    """One trial. ``step()`` advances one frame; ``run()`` goes to completion."""

    def __init__(self, cfg: TrialConfig, scenario: Scenario | None = None, trace: bool = False):
        self.cfg = cfg
        self.scen = scenario or cfg.build_scenario()
        s = self.scen
        self.trial_seed = cfg.seed if cfg.trial_seed is None else cfg.trial_seed
        self.truth = WallSet(s.walls, s.bounds)
        self.agents = [_Agent(i, a, s.bounds) for i, a in enumerate(s.agents)]
        self.ctx = RepairContext(strategy=cfg.strategy, agent_radius=max(a.radius for a in s.agents))
        self.ctx.rebuild_budget = max(s.rrt_iterations, SMALL_MAP_REBUILD) if s.is_small else s.rrt_iterations
        n_ped = s.pedestrians.count if cfg.pedestrians is None else cfg.pedestrians
        self.peds = spawn_pedestrians(s, n_ped, self.trial_seed, self.truth) if n_ped else []
        self.maps = SharedMapState(len(self.agents), cfg.mode)
        self.transport = InProcessTransport()
        self.table = PriorityTable.from_priorities({a.id: a.priority for a in self.agents}, [self.trial_seed, 17])
        self.frame = 0
        self.collision = False
        self.ped_contacts = 0
        self._in_contact = set()
        self.sync_violations = 0
        self.exit_order = []
        self.king_order = []
        self.limit_frames = int(round(cfg.limit(s) / cfg.dt))
        self.trace = [] if trace else None
        self._events = []

    # -- helpers ----------------------------------------------------------

    def _event(self, kind, **kw):
        if self.trace is not None:
            self._events.append({"frame": self.frame, "type": kind, **kw})

    def _seed(self, ag, salt):
        ss = np.random.SeedSequence([self.trial_seed & 0xFFFFFFFF, ag.id, salt, ag.stats.rebuilds])
        return int(ss.generate_state(1)[0])

    def _nudged(self, ag):
        """Agent position, pushed out to planning clearance if it sits too close to a known wall."""
        c = self.ctx.clearance
        p = ag.pos
        if len(ag.known) == 0:
            return p.copy()
        d, qx, qy = wg_nearest_wall_point(ag.known.grid, p[0], p[1], c)
        if d >= c:
            return p.copy()
        n = p - np.array([qx, qy])
        norm = float(np.linalg.norm(n))
        if norm < 1e-12:
            return p.copy()
        return np.array([qx, qy]) + n / norm * (c + 0.01)

    def _build(self, ag, rebuild: bool):
        root = self._nudged(ag)
        kw = dict(step=self.scen.steer_step, clearance=self.ctx.clearance, bounds=self.scen.bounds)
        if rebuild:
            budget = self.ctx.rebuild_budget * min(2 ** ag.failed_builds, MAX_BUDGET_SCALE)
            tree = full_rebuild(ag.known, root, ag.goal, budget, self._seed(ag, 1), stats=ag.stats, **kw)
        else:
            tree = build_rrt_star(ag.known, root, ag.goal, self.scen.rrt_iterations, self._seed(ag, 0), **kw)
            tree.stats = ag.stats
        tree.map = ag.known
        self._event("rebuild" if rebuild else "build", agent=ag.id, nodes=int(tree.n),
                    connected=bool(tree.goal_reachable()))
        if tree.goal_reachable():
            ag.tree = tree
            ag.ids = tree.path_ids()
            ag.failed_builds = 0
        else:
            ag.failed_builds += 1
            ag.tree = None
            ag.ids = None
            ag.retry_at = self.frame + RETRY_FRAMES

    def _refresh_path(self, ag):
        ag.ids = ag.tree.path_ids() if ag.tree is not None else None

    def _attach(self, ag):
        """Hop onto the tree from the current position (after displacement or repair)."""
        tree = ag.tree
        if tree is None:
            return False
        # re-enter the static tree; hazard zones are re-applied right after
        clear_dynamic(tree)
        if not tree.goal_reachable():
            return False
        q, _ = tree.best_entry(self._nudged(ag))
        if q < 0:
            return False
        tree.reroot(q)
        self._refresh_path(ag)
        return ag.ids is not None

    def _advance(self, ag, k):
        """Pass ``k`` waypoints; each newly started edge gets a just-in-time check."""
        for _ in range(k):
            if ag.ids is None or len(ag.ids) < 2:
                return
            a, b = int(ag.ids[0]), int(ag.ids[1])
            ag.tree.reroot(b)
            ag.ids = ag.ids[1:]
            if not ag.tree.edge_valid(a, b):
                self._event("jit_invalid", agent=ag.id)
                self._build(ag, rebuild=True)
                return

    # -- phases -----------------------------------------------------------

    def _phase1(self, active):
        discs = [(p.position.x, p.position.y, p.radius) for p in self.peds]
        n_ped = len(discs)
        discs += [(a.pos[0], a.pos[1], a.radius) for a in active]
        discs = np.array(discs, dtype=np.float64).reshape(-1, 3)
        scans = {}
        for k, ag in enumerate(active):
            mask = np.ones(len(discs), bool)
            mask[n_ped + k] = False
            cells, seen, _ = scan_cells(ag.pos[0], ag.pos[1], self.truth, self.scen.sensing_range, discs[mask])
            scans[ag.id] = (cells, seen[seen < n_ped].tolist())
        return scans

    def _phase2(self, active, scans):
        new = {}
        for ag in active:
            own = self_update(ag.id, scans[ag.id][0], self.maps)
            new[ag.id] = own
            if self.cfg.mode is Mode.SHARED:
                msg = make_message(ag.id, self.frame, own, ag.pos)
                if msg is not None:
                    self.transport.send(msg)
        if self.cfg.mode is Mode.SHARED:
            msgs = self.transport.deliver(self.frame)
            deltas = collect_and_broadcast(msgs, self.maps)
            for ag in active:
                new[ag.id] = new[ag.id] | deltas[ag.id]
            for m in msgs:
                self._event("message", sender=m.sender, fragments=len(m.fragments), bytes=m.byte_size())
            if not self.maps.synchronized(exact=False):
                self.sync_violations += 1
        return new

    def _static(self, ag, cells):
        segs = fragments_to_segments(cells_to_fragments(cells), self.truth)
        tree = ag.tree
        if tree is None:
            ag.known = ag.known.union(segs)
            return
        strat = self.ctx.strategy
        skipped = False
        if strat is Strategy.FULL:
            tree.map = tree.map.union(segs)
            probe = WallMap(segs, tree.bounds)
            bad_e, bad_n = K.scan_edges(tree.pos, tree.parent, tree.state, tree.root, probe.grid,
                                        tree.clearance, np.zeros(0, np.bool_), False)
            ag.known = tree.map
            if bad_e.any() or bad_n.any():
                self._build(ag, rebuild=True)
            return
        if strat is Strategy.EAGER:
            path = eager_repair(tree, segs, self.ctx)
        else:
            cur = np.vstack([ag.pos[None, :], ag.waypoints()]) if ag.ids is not None else ag.pos[None, :]
            fn = lazy_eager_repair if strat is Strategy.LAZY else swift_repair
            path, skipped = fn(tree, segs, cur, self.ctx)
        ag.known = tree.map
        self._event("repair", agent=ag.id, strategy=strat.value, skipped=bool(skipped), ok=path is not None)
        if skipped:
            return
        if path is None or not self._attach(ag):
            self._build(ag, rebuild=True)

    def _phase3(self, active, new, scans):
        for ag in active:
            if ag.tree is None and self.frame >= ag.retry_at:
                self._build(ag, rebuild=True)
            if new[ag.id]:
                self._static(ag, new[ag.id])
            if ag.tree is None:
                continue
            if ag.displaced:
                ag.displaced = False
                if not self._attach(ag):
                    self._build(ag, rebuild=True)
                    if ag.tree is None:
                        continue
            # dynamic obstacles: seen pedestrians plus broadcast positions of other agents
            obst = [(self.peds[i].position.x, self.peds[i].position.y, self.peds[i].radius)
                    for i in scans[ag.id][1]]
            if ag.id != self.king:
                obst += [(o.pos[0], o.pos[1], o.radius) for o in active if o.id != ag.id]
            ok = morph_in_place(ag.tree, obst, ag.pos, None, self.ctx)
            ag.ids = ag.tree.path_ids() if ok else None
            if self._stale(ag):
                # replanning routed through an edge that a deferred wall invalidates
                self._event("stale_path", agent=ag.id)
                self._build(ag, rebuild=True)

    def _stale(self, ag):
        if ag.ids is None or len(ag.ids) < 2:
            return False
        t = ag.tree
        return not K.polyline_clear(t.pos[ag.ids], t.map.grid, t.clearance)

    def _phase4(self, active):
        grid = self.truth.grid
        bodies = {a.id: Body(a.id, a.pos, a.radius, a.speed, a.waypoints(), a.known.grid) for a in active}
        by_id = {a.id: a for a in active}
        proposals = {}
        chain_members = []
        king = self.king
        popped = {}
        wall_blocked = set()
        if king != NO_KING:
            kb = bodies[king]
            others = [b for i, b in bodies.items() if i != king]
            km = king_step(kb, others, grid, self.cfg.dt)
            proposals.update(km.displacements)
            popped[king] = km.popped
            if km.blocked:
                wall_blocked.add(king)
            chain_members = km.chain.members
            for i in km.chain.members:
                by_id[i].displaced = True
                if i in km.chain.scattered:
                    by_id[i].scatters += 1
                else:
                    by_id[i].pushes += 1
            if km.chain.members:
                self._event("push", king=king, chain=list(km.chain.members), scattered=list(km.chain.scattered))
        king_pos = bodies[king].pos if king != NO_KING else None
        for ag in active:
            if ag.id == king or ag.id in proposals:
                continue
            fl = nonking_step(bodies[ag.id], king_pos, grid, self.cfg.dt)
            if fl is not None:
                proposals[ag.id] = fl
                ag.flees += 1
                ag.displaced = True
                continue
            wp = bodies[ag.id].path
            if wp is None:
                continue
            st = pure_pursuit_step(ag.pos, wp, ag.speed, self.cfg.dt, wall_grid=grid, radius=ag.radius,
                                   plan_grid=ag.known.grid)
            proposals[ag.id] = st.position - ag.pos
            popped[ag.id] = st.popped
            if st.blocked:
                wall_blocked.add(ag.id)
        order = list(reversed(chain_members))
        if king != NO_KING:
            order.append(king)
        order += [a.id for a in active if a.id not in order]
        peds = [(p.position.x, p.position.y, p.radius) for p in self.peds]
        moves = resolve(bodies, proposals, order, grid, peds)
        for ag in active:
            k = popped.get(ag.id, 0)
            if k:
                self._advance(ag, k)
            d = moves.get(ag.id)
            moved = 0.0
            if d is not None:
                moved = float(math.hypot(d[0], d[1]))
                ag.pos = ag.pos + d
                ag.path_len += moved
            # consecutive frames held back by walls; waiting behind other agents does not count
            if moved >= 0.5 * ag.speed * self.cfg.dt:
                ag.stuck = 0
            elif ag.id in wall_blocked:
                ag.stuck += 1
            if ag.stuck >= STUCK_FRAMES:
                ag.stuck = 0
                self._build(ag, rebuild=True)

    def _finish_agents(self, active):
        t = (self.frame + 1) * self.cfg.dt
        for ag in active:
            if math.hypot(*(ag.pos - ag.goal)) <= GOAL_TOL:
                ag.active = False
                ag.t_goal = round(t, 10)
                self.table.deactivate(ag.id)
                self.exit_order.append(ag.id)
                self._event("goal", agent=ag.id, t=ag.t_goal)

    def _check_collisions(self, active):
        grid = self.truth.grid
        for i, a in enumerate(active):
            if wg_point_dist(grid, a.pos[0], a.pos[1], a.radius) < a.radius - 1e-9:
                self.collision = True
            for b in active[i + 1:]:
                if math.hypot(*(a.pos - b.pos)) < a.radius + b.radius - 1e-9:
                    self.collision = True
        now = set()
        for a in active:
            for k, p in enumerate(self.peds):
                if math.hypot(a.pos[0] - p.position.x, a.pos[1] - p.position.y) < a.radius + p.radius:
                    now.add((a.id, k))
        self.ped_contacts += len(now - self._in_contact)
        self._in_contact = now

    # -- loop -------------------------------------------------------------

    @property
    def done(self):
        return all(not a.active for a in self.agents) or self.frame >= self.limit_frames

    def step(self):
        active = [a for a in self.agents if a.active]
        self.king = select_king(self.table)
        if self.king != NO_KING and (not self.king_order or self.king_order[-1] != self.king):
            self.king_order.append(self.king)
            self._event("king", agent=self.king)
        scans = self._phase1(active)
        new = self._phase2(active, scans)
        if self.frame == 0:
            for ag in active:
                ag.known = ag.known.union(fragments_to_segments(cells_to_fragments(new[ag.id]), self.truth))
                self._build(ag, rebuild=False)
            new = {ag.id: set() for ag in active}
        self._phase3(active, new, scans)
        self._phase4(active)
        self._finish_agents(active)
        self.peds = step_pedestrians(self.peds, self.truth, self.cfg.dt, copy_rng=False)
        self._check_collisions([a for a in self.agents if a.active])
        if self.trace is not None:
            self._flush_trace()
        self.frame += 1

    def _flush_trace(self):
        rec = {
            "frame": self.frame,
            "type": "poses",
            "agents": [[a.id, _rnd(a.pos[0]), _rnd(a.pos[1]), a.active] for a in self.agents],
            "peds": [[_rnd(p.position.x), _rnd(p.position.y)] for p in self.peds],
            "king": self.king,
        }
        for e in [rec] + self._events:
            self.trace.append(json.dumps(e, sort_keys=True))
        self._events = []

    def run(self) -> TrialResult:
        while not self.done:
            self.step()
        return self.result()

    def result(self) -> TrialResult:
        ag = self.agents
        times = [a.t_goal for a in ag]
        all_in = all(t is not None for t in times)
        return TrialResult(
            preset=self.scen.name,
            seed=int(self.cfg.seed),
            strategy=self.cfg.strategy.value,
            mode=self.cfg.mode.value,
            n_agents=len(ag),
            t_goal=times,
            path_length=[round(a.path_len, 9) for a in ag],
            rebuilds=[a.stats.rebuilds for a in ag],
            repairs=[a.stats.repairs for a in ag],
            skips=[a.stats.skips for a in ag],
            pushes=[a.pushes for a in ag],
            flees=[a.flees for a in ag],
            scatters=[a.scatters for a in ag],
            priorities=[a.priority for a in ag],
            completion_time=max(times) if all_in else None,
            time_limit=self.cfg.limit(self.scen),
            success=all_in and not self.collision,
            collision=self.collision,
            ped_contacts=self.ped_contacts,
            frames=self.frame,
            sync_violations=self.sync_violations,
            exit_order=list(self.exit_order),
            king_order=list(self.king_order),
            trace=self.trace,
        )


def run_trial(cfg: TrialConfig, trace_path=None, trace: bool = False) -> TrialResult:
    """Run one trial; an unsolvable scenario yields ``invalid=True`` without simulating."""
    scen = cfg.build_scenario()
    if not is_solvable(scen):
        n = len(scen.agents)
        z = [0] * n
        return TrialResult(scen.name, int(cfg.seed), cfg.strategy.value, cfg.mode.value, n, [None] * n,
                           [0.0] * n, z, z, z, z, z, z, [a.priority for a in scen.agents],
                           time_limit=cfg.limit(scen), invalid=True)
    sim = Simulation(cfg, scen, trace=trace or trace_path is not None)
    res = sim.run()
    if trace_path is not None:
        with open(trace_path, "w") as f:
            f.write("\n".join(res.trace) + "\n")
    return res


# ---------------------------------------------------------------------------
# benchmarks


@dataclass
class CellSummary:
    scenario: str
    strategy: str
    mode: str
    agents: int
    trials: int
    median_completion_s: float
    mean_rebuilds: float
    fairness_gap_s: float
    success_rate: float


@dataclass
class BenchmarkSummary:
    cells: list
    results: list = field(default_factory=list, repr=False)

    def cell(self, scenario, strategy, mode) -> CellSummary:
        for c in self.cells:
            if (c.scenario, c.strategy, c.mode) == (scenario, Strategy(strategy).value, Mode(mode).value):
                return c
        raise KeyError((scenario, strategy, mode))


def summarize(results, time_limit=None) -> CellSummary:
    """Aggregate one cell. Unfinished trials count at the time limit for the median."""
    if not results:
        raise ValueError("no results to summarize")
    r0 = results[0]
    lim = time_limit if time_limit is not None else r0.time_limit
    comp = [r.completion_time if r.completion_time is not None else lim for r in results]
    n = r0.n_agents
    per_agent = []
    for i in range(n):
        ts = [r.t_goal[i] if r.t_goal[i] is not None else lim for r in results]
        per_agent.append(float(np.median(ts)))
    return CellSummary(
        scenario=r0.preset,
        strategy=r0.strategy,
        mode=r0.mode,
        agents=n,
        trials=len(results),
        median_completion_s=float(np.median(comp)),
        mean_rebuilds=float(np.mean([r.total_rebuilds for r in results])),
        fairness_gap_s=float(max(per_agent) - min(per_agent)),
        success_rate=float(np.mean([r.success for r in results])),
    )


def _run_valid(cfg: TrialConfig) -> TrialResult:
    """Run ``cfg``; an invalid scenario is regenerated with a perturbed seed."""
    base = cfg.seed
    for attempt in range(20):
        seed = base if attempt == 0 else base + 1_000_003 * attempt
        c = TrialConfig(cfg.preset, seed, cfg.strategy, cfg.mode, cfg.n_agents, cfg.pedestrians, cfg.dt,
                        cfg.time_limit, cfg.trial_seed)
        res = run_trial(c)
        if not res.invalid:
            return res
    return res


def base_seed_from_env(default: int) -> int:
    v = os.environ.get(SEED_ENV)
    return int(v) if v not in (None, "") else default


def run_benchmark(presets, strategies, modes, trials_per_cell: int, base_seed: int = 0, parallelism: int = 1,
                  n_agents: int | None = None, pedestrians: int | None = None) -> BenchmarkSummary:
    """Every preset x strategy x mode cell with seeds ``base_seed .. base_seed + n - 1``.

    Seeds are shared across cells, so cells are paired on the same layouts.
    """
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    base_seed = base_seed_from_env(base_seed)
    cells = [(p, Strategy(s), Mode(m)) for p in presets for s in strategies for m in modes]
    cfgs = [TrialConfig(p, base_seed + k, s, m, n_agents, pedestrians)
            for p, s, m in cells for k in range(trials_per_cell)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            results = list(ex.map(_run_valid, cfgs, chunksize=1))
    else:
        results = [_run_valid(c) for c in cfgs]
    summaries = []
    for k in range(len(cells)):
        summaries.append(summarize(results[k * trials_per_cell:(k + 1) * trials_per_cell]))
    return BenchmarkSummary(summaries, results)
