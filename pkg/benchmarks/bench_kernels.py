"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs every dual-path kernel on realistic sizes, checks both paths agree,
and prints a timing table.  Select the path the package itself uses at
import time with DEMANDREC_KERNELS=numpy.

    python3 benchmarks/bench_kernels.py [--size SMALL|LARGE]
"""

import argparse
import time

import numpy as np

from demandrec import kernels

SIZES = {
    "small": dict(pairs=200_000, triplets=1_000_000, rank=10),
    "large": dict(pairs=1_000_000, triplets=8_000_000, rank=10),
}


def timeit(fn, *args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return out, best


def make_inputs(pairs, triplets, rank, rng):
    m = n = 50_000
    U = rng.standard_normal((m, rank))
    sigma = np.abs(rng.standard_normal(rank)) + 0.1
    V = rng.standard_normal((n, rank))
    pair_users = rng.integers(0, m, size=pairs)
    pair_items = rng.integers(0, n, size=pairs)
    pair_x = rng.standard_normal(pairs)
    targets = 1.0 + np.maximum(0.0, rng.standard_normal(triplets))
    pair_index = np.sort(rng.integers(0, pairs, size=triplets))
    slots = np.sort(rng.integers(0, 300, size=triplets))
    new_group = rng.random(triplets) < 0.01
    new_group[0] = True
    s = np.sort(rng.random(triplets) * 100)
    coef = rng.standard_normal(triplets)
    flat = np.abs(rng.standard_normal(triplets))
    return {
        "pair_values": (U, sigma, V, pair_users, pair_items),
        "hinge_stats": (targets, pair_x[pair_index], pair_index, pairs),
        "strict_prev_gap": (slots, new_group),
        "sweep_min": (s, coef, flat),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", choices=sorted(SIZES), default="small")
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    inputs = make_inputs(rng=np.random.default_rng(0), **SIZES[args.size])

    print(f"size = {args.size}  ({SIZES[args.size]})")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, arg_tuple in inputs.items():
        np_fn = getattr(kernels, f"{name}_numpy")
        nb_fn = getattr(kernels, f"{name}_numba")
        nb_fn(*arg_tuple)  # compile before timing
        ref, t_np = timeit(np_fn, *arg_tuple)
        out, t_nb = timeit(nb_fn, *arg_tuple)
        ref = ref if isinstance(ref, tuple) else (ref,)
        out = out if isinstance(out, tuple) else (out,)
        for a, b in zip(ref, out):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
        print(f"{name:<18} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
