"""Benchmark the degree/mask kernels: compiled extension vs NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 3] [--budget 100]

The compiled kernel accumulates strictly in index order and streams rows; the
NumPy fallback rides BLAS. Agreement of the degree counts is checked on every
timed instance, so this doubles as a large-input consistency test.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from seedloc import _kernels_np

try:
    from seedloc import _simkern
except ImportError:
    _simkern = None

SIZES = [(196, 64), (784, 384), (1200, 384), (1600, 384)]


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--budget", type=int, default=100, help="seed count for mask scores")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = [("numpy", _kernels_np)]
    if _simkern is not None:
        backends.append(("compiled", _simkern))
    else:
        print("compiled extension not built; timing the fallback only")

    header = f"{'kernel':<22}{'N':>6}{'d':>6}" + "".join(f"{name:>14}" for name, _ in backends)
    print(header)
    print("-" * len(header))
    for n, d in SIZES:
        feats = rng.standard_normal((n, d)).astype(np.float32)
        seeds = np.sort(rng.choice(n, size=min(args.budget, n), replace=False)).astype(np.int64)

        row = f"{'degree_counts':<22}{n:>6}{d:>6}"
        degree_results = []
        for _, impl in backends:
            best, result = timeit(lambda impl=impl: impl.degree_counts(feats), args.repeats)
            degree_results.append(result)
            row += f"{best * 1e3:>12.1f}ms"
        print(row)
        if len(degree_results) == 2 and not np.array_equal(*degree_results):
            raise SystemExit("backend disagreement in degree_counts")

        row = f"{'mask_scores(|S|=%d)' % len(seeds):<22}{n:>6}{d:>6}"
        for _, impl in backends:
            best, _ = timeit(lambda impl=impl: impl.mask_scores(feats, seeds), args.repeats)
            row += f"{best * 1e3:>12.1f}ms"
        print(row)


if __name__ == "__main__":
    main()
