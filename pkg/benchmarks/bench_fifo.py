#!/usr/bin/env python3
"""Benchmark the compiled FIFO event kernel against the pure-Python one.

Generates a handful of experiments, re-runs the underlying simulation with
each kernel implementation, checks that the labels agree bit-for-bit, and
prints a timing table.

Usage: python3 benchmarks/bench_fifo.py [--count N] [--repeat R] [--seed S]
"""

import argparse
import os
import statistics
import time

from m3net.simgen import core
from m3net.simgen.dataset import GenConfig, gen_experiment


def _label_tuple(exp):
    return tuple((f.id, f.labels.delay_s, f.labels.jitter_s,
                  f.labels.drop_frac) for f in exp.flows)


def bench(count: int, repeat: int, seed: int) -> list[dict]:
    cfg = GenConfig(seed=seed)
    rows = []
    for impl in ("c", "py"):
        try:
            core.active_kernel(impl)
        except RuntimeError:
            print(f"kernel {impl!r} unavailable, skipping")
            continue
        # gen_experiment resolves the kernel through this env var
        os.environ["M3NET_SIM_KERNEL"] = impl
        try:
            times = []
            labels = None
            for _ in range(repeat):
                t0 = time.perf_counter()
                exps = [gen_experiment(cfg, i, seed=seed + i)
                        for i in range(count)]
                times.append(time.perf_counter() - t0)
                labels = [_label_tuple(e) for e in exps]
            rows.append({"impl": impl, "seconds": statistics.median(times),
                         "labels": labels})
        finally:
            del os.environ["M3NET_SIM_KERNEL"]
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=20,
                    help="experiments per timed run")
    ap.add_argument("--repeat", type=int, default=3,
                    help="timed repetitions (median reported)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = bench(args.count, args.repeat, args.seed)
    print(f"{'kernel':<8} {'median seconds':>14}")
    for r in rows:
        print(f"{r['impl']:<8} {r['seconds']:>14.3f}")
    if len(rows) == 2:
        a, b = rows
        same = a["labels"] == b["labels"]
        print(f"speedup (py/c): {b['seconds'] / a['seconds']:.2f}x")
        print(f"labels bit-identical: {same}")
        if not same:
            raise SystemExit("kernel outputs disagree")


if __name__ == "__main__":
    main()
