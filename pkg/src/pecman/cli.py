"""Command line entry point: generate, run, bench, stress, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import Simulation, TrialConfig, base_seed_from_env, run_benchmark
from .perception import Mode
from .report import FORMATS, load_benchmark, report, save_benchmark
from .tree import Strategy
from .world import CORRIDOR_PRESET, PRESET_NAMES, Scenario, generate_floorplan, is_solvable

STRATEGIES = [s.value for s in Strategy]
MODES = [m.value for m in Mode]


def _scenario(arg: str, seed: int, agents: int | None) -> Scenario:
    if arg in PRESET_NAMES:
        return generate_floorplan(arg, seed, agents)
    return Scenario.load(arg)


def cmd_generate(a) -> int:
    scen = generate_floorplan(a.preset, a.seed, a.agents)
    if a.out:
        scen.save(a.out)
    else:
        print(scen.to_json())
    return 0


def cmd_run(a) -> int:
    scen = _scenario(a.scenario, a.seed, a.agents)
    if not is_solvable(scen):
        print(f"scenario {scen.name} (seed {a.seed}) is not solvable", file=sys.stderr)
        return 2
    cfg = TrialConfig(scen.name, a.seed, a.strategy, a.mode, a.agents, a.pedestrians, scenario=scen)
    sim = Simulation(cfg, scen, trace=a.trace is not None)
    res = sim.run()
    if a.trace:
        Path(a.trace).write_text("\n".join(res.trace) + "\n")
    if a.dump_tree:
        out = Path(a.dump_tree)
        out.mkdir(parents=True, exist_ok=True)
        for ag in sim.agents:
            if ag.tree is not None:
                (out / f"tree_agent{ag.id}.jsonl").write_text(ag.tree.to_jsonl())
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0 if res.success else 1


def cmd_bench(a) -> int:
    summary = run_benchmark(a.presets, a.strategies, a.modes, a.trials, base_seed_from_env(a.seed), a.jobs,
                            a.agents, a.pedestrians)
    save_benchmark(summary, a.out)
    for c in summary.cells:
        print(f"{c.scenario:12s} {c.strategy:6s} {c.mode:11s} median={c.median_completion_s:7.2f}s "
              f"rebuilds={c.mean_rebuilds:6.2f} gap={c.fairness_gap_s:6.2f}s success={c.success_rate:.2%}")
    return 0


def cmd_stress(a) -> int:
    summary = run_benchmark([CORRIDOR_PRESET], [a.strategy], [Mode.SHARED], a.trials, base_seed_from_env(a.seed),
                            a.jobs)
    ok = 0
    for r in summary.results:
        kings_in_order = [i for i in r.exit_order if i in r.king_order] == r.king_order
        good = r.success and kings_in_order
        ok += good
        print(f"seed {r.seed}: success={r.success} collision={r.collision} kings={r.king_order} "
              f"exits={r.exit_order}{'' if good else '  FAIL'}")
    print(f"{ok}/{len(summary.results)} trials passed")
    return 0 if ok == len(summary.results) else 1


def cmd_report(a) -> int:
    summary = load_benchmark(a.input)
    for p in report(summary, a.format, a.out or a.input):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pecman", description="Multi-agent tree-morphing navigation simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a procedural scenario as JSON")
    g.add_argument("--preset", choices=PRESET_NAMES, default="building")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--agents", type=int)
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(fn=cmd_generate)

    r = sub.add_parser("run", help="run one trial")
    r.add_argument("--scenario", default="building", help="preset name or scenario JSON file")
    r.add_argument("--strategy", choices=STRATEGIES, default="lazy")
    r.add_argument("--mode", choices=MODES, default="shared")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--agents", type=int)
    r.add_argument("--pedestrians", type=int)
    r.add_argument("--trace", help="write the per-frame JSONL trace here")
    r.add_argument("--dump-tree", nargs="?", const=".", metavar="DIR",
                   help="write each agent's final tree as JSONL into DIR (default: .)")
    r.set_defaults(fn=cmd_run)

    b = sub.add_parser("bench", help="run a benchmark grid")
    b.add_argument("--presets", nargs="+", default=["building", "office", "warehouse"])
    b.add_argument("--strategies", nargs="+", choices=STRATEGIES, default=["lazy"])
    b.add_argument("--modes", nargs="+", choices=MODES, default=["shared"])
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--seed", type=int, default=0, help="base seed (overridden by $PECMAN_SEED)")
    b.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    b.add_argument("--agents", type=int)
    b.add_argument("--pedestrians", type=int)
    b.add_argument("--out", default="bench_out")
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("stress", help="corridor stress trials")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--strategy", choices=STRATEGIES, default="lazy")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.set_defaults(fn=cmd_stress)

    rp = sub.add_parser("report", help="render a saved benchmark")
    rp.add_argument("--in", dest="input", required=True, help="directory written by bench")
    rp.add_argument("--format", choices=FORMATS, default="csv")
    rp.add_argument("--out", help="output directory (default: the input directory)")
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
