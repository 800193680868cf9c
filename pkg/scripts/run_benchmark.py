"""Run the benchmark grid and write summary.csv, results.jsonl and SVG charts.

    python3 scripts/run_benchmark.py --trials 20 --out bench_out
"""

import argparse
import os
import time

from pecman.harness import base_seed_from_env, run_benchmark
from pecman.report import report, save_benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--presets", nargs="+", default=["building", "office", "warehouse", "hospital-64"])
    p.add_argument("--strategies", nargs="+", default=["lazy", "swift"])
    p.add_argument("--modes", nargs="+", default=["shared", "independent"])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="bench_out")
    a = p.parse_args()
    t = time.perf_counter()
    s = run_benchmark(a.presets, a.strategies, a.modes, a.trials, base_seed_from_env(a.seed), a.jobs)
    save_benchmark(s, a.out)
    report(s, "svg", a.out)
    for c in s.cells:
        print(f"{c.scenario:12s} {c.strategy:6s} {c.mode:11s} median={c.median_completion_s:7.2f}s "
              f"rebuilds={c.mean_rebuilds:6.2f} gap={c.fairness_gap_s:6.2f}s success={c.success_rate:.0%}")
    print(f"{len(s.results)} trials in {time.perf_counter() - t:.0f} s, written to {a.out}")


if __name__ == "__main__":
    main()
