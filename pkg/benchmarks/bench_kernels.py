"""Compare the compiled and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py --sizes 200 1000 4000 --repeat 5
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pvlab import kernels


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, rng):
    pts = rng.random((n, 2))
    r = 1.0 / np.sqrt(n)  # thermodynamic radius in the unit square
    pairs = kernels.get_backend("python").radius_pairs(pts, r)
    nodes = rng.random((4096, 2)) * 0.8 + 0.1
    return {
        "radius_pairs": lambda b: b.radius_pairs(pts, r),
        "component_labels": lambda b: b.component_labels(n, pairs),
        "knn_table(k=3)": lambda b: b.knn_table(pts, 3),
        "hull2d": lambda b: b.hull2d(pts),
        "shot_field(indicator)": lambda b: b.shot_field(nodes, pts, 0, 2 * r, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':24s} {'n':>6s} " + " ".join(f"{b + ' [ms]':>14s}" for b in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            times = [_time(lambda: fn(kernels.get_backend(b)), args.repeat) for b in backends]
            line = f"{name:24s} {n:6d} " + " ".join(f"{1e3 * t:14.3f}" for t in times)
            if len(times) == 2:
                line += f"  {times[1] / times[0]:7.1f}x"
            print(line)


if __name__ == "__main__":
    main()
