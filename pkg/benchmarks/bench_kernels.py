"""Compare the numba and numpy kernel backends on experiment-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N] [--m 60] [--n 200]

Both backends are timed in one process by calling the ``*_nb`` and
``*_np`` functions directly; numba compilation happens in a warm-up call
and is excluded.
"""

import argparse
import timeit

import numpy as np

from wcsr import kernels


def cases(m, n, rng):
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    x = np.where(rng.random(n) < 0.1, rng.standard_normal(n), 0.0)
    y = A @ x + 0.05 * rng.standard_normal(m)
    L = kernels.power_iteration_np(A, 100)
    thresh = np.full(n, 0.02)
    k = max(1, int(np.count_nonzero(x)))
    return {
        "row_matvec": lambda be: getattr(kernels, f"row_matvec_{be}")(A, x),
        "power_iteration": lambda be: getattr(kernels, f"power_iteration_{be}")(A, 100),
        "mfista (2000 it max)": lambda be: getattr(kernels, f"mfista_{be}")(A, y, thresh, L, 2000, 1e-6),
        "omp": lambda be: getattr(kernels, f"omp_{be}")(A, y, k, 1e-12),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--m", type=int, default=60)
    ap.add_argument("--n", type=int, default=200)
    args = ap.parse_args()
    if not hasattr(kernels, "mfista_nb"):
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"m={args.m} n={args.n}, best of {args.repeat} runs")
    print(f"{'kernel':<22}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for name, fn in cases(args.m, args.n, rng).items():
        fn("nb")  # compile
        t = {}
        for be in ("np", "nb"):
            t[be] = min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t['np']:>12.3f}{t['nb']:>12.3f}{t['np'] / t['nb']:>9.1f}x")


if __name__ == "__main__":
    main()
