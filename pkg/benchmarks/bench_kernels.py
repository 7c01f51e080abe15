"""Throughput comparison of the numba kernels vs the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--size 2000000] [--repeats 5]

Both implementations live side by side in bflow.kernels, so one process
can time them against each other; the public functions dispatch on the
BFLOW_PURE_NUMPY environment variable at import.
"""

import argparse
import time

import numpy as np

from bflow import kernels


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=2_000_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--mixture-k", type=int, default=16)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.uniform(-6, 6, size=args.size)
    out = np.empty_like(x)

    rows = args.size // args.mixture_k
    y = rng.uniform(-1, 1, size=rows)
    means = np.linspace(-1, 1, args.mixture_k)
    logw = np.log(rng.dirichlet(np.ones(args.mixture_k), size=rows))
    mix_out = np.empty(rows)
    lse_m = rng.uniform(-30, 5, size=(rows, args.mixture_k))
    lse_out = np.empty(rows)

    print(f"numba available: {kernels._HAVE_NUMBA}   active path: "
          f"{'numba' if kernels.NUMBA_ENABLED else 'numpy'}")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>9}")

    cases = [
        ("erf", lambda: kernels._erf_numpy(x, out),
         (lambda: kernels._erf_numba(x, out)) if kernels._HAVE_NUMBA else None),
        ("logsumexp_rows", lambda: kernels._logsumexp_rows_numpy(lse_m, lse_out),
         (lambda: kernels._logsumexp_rows_numba(lse_m, lse_out)) if kernels._HAVE_NUMBA else None),
        ("mixture_logpdf", lambda: kernels._mixture_logpdf_numpy(y, logw, means, 0.1, mix_out),
         (lambda: kernels._mixture_logpdf_numba(y, logw, means, 0.1, mix_out)) if kernels._HAVE_NUMBA else None),
    ]
    for name, np_fn, nb_fn in cases:
        t_np = timeit(np_fn, args.repeats)
        if nb_fn is None:
            print(f"{name:<18} {t_np * 1e3:>8.1f}ms {'n/a':>10} {'n/a':>9}")
            continue
        nb_fn()  # compile outside the timed region
        t_nb = timeit(nb_fn, args.repeats)
        print(f"{name:<18} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
