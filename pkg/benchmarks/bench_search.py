"""Compare the numba and numpy cosine-scan kernels on synthetic corpora.

Run: python benchmarks/bench_search.py [--sizes 1000,10000,100000] [--dim 384]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sdrag._kernels import cosine_scores_numpy, _build_numba_kernel


def bench(fn, matrix, queries, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for q in queries:
            fn(matrix, q)
        best = min(best, time.perf_counter() - t0)
    return best / len(queries)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--dim", type=int, default=384)
    ap.add_argument("--queries", type=int, default=20)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)
    numba_fn = _build_numba_kernel()

    print(f"{'n':>8}  {'dim':>5}  {'numpy (ms)':>11}  {'numba (ms)':>11}  {'speedup':>8}")
    for n in sizes:
        matrix = rng.standard_normal((n, args.dim)).astype(np.float32)
        queries = [rng.standard_normal(args.dim) for _ in range(args.queries)]
        numba_fn(matrix[:4], queries[0])  # trigger compilation outside timing
        t_np = bench(cosine_scores_numpy, matrix, queries)
        t_nb = bench(numba_fn, matrix, queries)
        a = cosine_scores_numpy(matrix, queries[0])
        b = numba_fn(matrix, queries[0])
        assert np.allclose(a, b, atol=1e-10), "kernels disagree"
        print(f"{n:>8}  {args.dim:>5}  {t_np * 1e3:>11.3f}  {t_nb * 1e3:>11.3f}"
              f"  {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
