"""Compiled vs interpreted hot kernels.

    python3 benchmarks/bench_kernels.py [--repeats N]

Prints one row per kernel and backend with the median wall time and the
speedup of the compiled build over the fallback.
"""

import argparse
import statistics
import time

import numpy as np

from gssc import kernels
from gssc.graph import generate


def _median_ms(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def cases(rng):
    values = rng.normal(size=(200_000, 16))
    index = rng.integers(0, 5_000, size=200_000)
    g = generate("erdos_renyi", 40, seed=3, p=0.25)
    indptr, indices = g.csr()
    return {
        "scatter_add_rows": lambda impl: impl.scatter_add_rows(values, index, 5_000),
        "cycle_counts(4)": lambda impl: impl.cycle_counts(indptr, indices, g.n, 4),
        "path_counts(4)": lambda impl: impl.path_counts(indptr, indices, g.n, 4),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<18} {'backend':<8} {'ms':>10} {'speedup':>8}")
    for name, run in cases(np.random.default_rng(0)).items():
        base = None
        for backend in ("python", "cython"):
            if backend not in impls:
                continue
            ms = _median_ms(lambda: run(impls[backend]), args.repeats)
            base = ms if backend == "python" else base
            print(f"{name:<18} {backend:<8} {ms:>10.3f} {base / ms:>7.1f}x")


if __name__ == "__main__":
    main()
