#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the least-squares solve, the thin QR, the full extrapolation step,
and the window statistics across problem sizes, printing one table per
kernel. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from aamix import backend
from aamix.accelerator import _extrapolate_rows

SIZES = [(1_000, 5), (10_000, 10), (20_000, 10), (50_000, 16), (100_000, 20)]
QUICK_SIZES = [(1_000, 5), (10_000, 10), (20_000, 10)]


def median_time(fn, reps, rounds=3):
    fn()  # warmup, first-touch pages
    timings = []
    for _ in range(rounds):
        start = time.perf_counter()
        for _ in range(reps):
            fn()
        timings.append((time.perf_counter() - start) / reps)
    return sorted(timings)[len(timings) // 2]


def bench(sizes, reps):
    names = backend.available_backends()
    if "compiled" not in names:
        print("note: compiled extension not built, timing the fallback only")
    rng = np.random.default_rng(0)

    cases = {}
    for n, m in sizes:
        rows = rng.standard_normal((m, n))
        rhs = rng.standard_normal(n)
        w = rng.standard_normal(n)
        r = rng.standard_normal(n) * 1e-2
        w_rows = rng.standard_normal((m, n))
        window = rng.standard_normal((max(3, m // 2), n))
        cases[(n, m)] = (rows, rhs, w, r, w_rows, window)

    kernels = {
        "lstsq": lambda mod, c: mod.lstsq_rows(c[0], c[1], 1e-10),
        "qr": lambda mod, c: mod.qr_rows(c[0]),
        "window_variance": lambda mod, c: mod.window_variance(c[5]),
    }

    for label, call in kernels.items():
        print(f"\n== {label} ==")
        header = f"{'n':>8} {'m':>4}" + "".join(f" {b:>12}" for b in names)
        if len(names) == 2:
            header += f" {'speedup':>9}"
        print(header)
        for (n, m), case in cases.items():
            times = {}
            for name in names:
                mod = backend._MODULES[name]
                times[name] = median_time(lambda: call(mod, case), reps)
            line = f"{n:>8} {m:>4}" + "".join(
                f" {times[b] * 1e3:>10.3f}ms" for b in names
            )
            if len(names) == 2:
                line += f" {times['python'] / times['compiled']:>8.2f}x"
            print(line)

    print("\n== full extrapolation step (lstsq + candidate assembly) ==")
    print(f"{'n':>8} {'m':>4}" + "".join(f" {b:>12}" for b in names))
    for (n, m), (rows, rhs, w, r, w_rows, _) in cases.items():
        line = f"{n:>8} {m:>4}"
        for name in names:
            prev = backend.use_backend(name)
            try:
                t = median_time(
                    lambda: _extrapolate_rows(w, r, w_rows, rows, 1.0, "mix_correction"),
                    reps,
                )
            finally:
                backend.use_backend(prev)
            line += f" {t * 1e3:>10.3f}ms"
        print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true", help="smaller grid, fewer reps")
    parser.add_argument("--reps", type=int, default=None)
    args = parser.parse_args()
    sizes = QUICK_SIZES if args.quick else SIZES
    reps = args.reps or (5 if args.quick else 15)
    print(f"active backend: {backend.active_backend()}  available: {backend.available_backends()}")
    bench(sizes, reps)


if __name__ == "__main__":
    main()
