"""Time each kernel's loop and numpy implementations on the same inputs.

    python benchmarks/bench_kernels.py [--m 20000] [--n 8] [--repeat 5]

The loop column is numba-compiled unless SYMDIFF_NO_JIT is set, in which case
it runs as plain Python (use a small --m).  Outputs are compared for equality
before timing.
"""
import argparse
import time

import numpy as np

from symdiff import kernels


def make_inputs(m, n, rng):
    return {
        "riffle_interleave": (rng.binomial(n, 0.5, size=m), rng.random((m, n))),
        "riffle_geometric": (rng.random((m, n)),),
        "rising_sequences": (np.argsort(rng.random((m, n)), axis=1),),
        "perm_rank": (np.argsort(rng.random((m, n)), axis=1),),
        "gumbel_plackett_luce": (rng.normal(size=(m, n, n)), rng.gumbel(size=(m, n, n))),
    }


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=20000, help="batch size")
    parser.add_argument("--n", type=int, default=8, help="permutation size")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    inputs = make_inputs(args.m, args.n, np.random.default_rng(args.seed))
    print(f"backend={kernels.BACKEND} m={args.m} n={args.n}")
    print(f"{'kernel':24s} {'loops ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (loops, vectorised) in kernels.IMPLEMENTATIONS.items():
        if name == "perm_rank" and args.n > kernels.MAX_RANK_N:
            continue
        call_args = tuple(np.ascontiguousarray(a) for a in inputs[name])
        if not np.array_equal(loops(*call_args), vectorised(*call_args)):
            raise SystemExit(f"{name}: implementations disagree")
        t_loop = best_time(loops, call_args, args.repeat)
        t_np = best_time(vectorised, call_args, args.repeat)
        print(f"{name:24s} {1e3 * t_loop:10.2f} {1e3 * t_np:10.2f} {t_np / t_loop:8.1f}x")


if __name__ == "__main__":
    main()
