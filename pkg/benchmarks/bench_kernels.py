"""Benchmark the numba kernels against the pure-Python/numpy fallback.

Usage: python benchmarks/bench_kernels.py [--points 200000] [--repeats 5]

The two backends run the same function bodies, so this measures compilation
payoff only; results are checked for bitwise agreement as a side effect.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from blocknas import _kernels


def bench(fn, args, repeats):
    fn(*args)  # warm (and, on the numba path, compile)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--pop", type=int, default=400)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n_slots, n_opts = 8, 16
    choices = rng.integers(0, n_opts, size=(args.points, n_slots)).astype(np.int64)
    mse = rng.uniform(0, 1, size=(n_slots, n_opts))
    macs = rng.integers(1, 10 ** 9, size=(n_slots, n_opts)).astype(np.int64)

    loss = rng.uniform(0, 1, args.points)
    cost = rng.uniform(0, 1, args.points)
    order = np.lexsort((cost, loss))
    loss_s, cost_s = loss[order], cost[order]

    pop_loss = rng.uniform(0, 1, args.pop)
    pop_cost = rng.uniform(0, 1, args.pop)

    cases = [
        ("eval_batch", (choices, mse, macs, 1000), f"{args.points} genomes x {n_slots} slots"),
        ("pareto_mask_sorted", (loss_s, cost_s), f"{args.points} points"),
        ("nds_ranks", (pop_loss, pop_cost), f"{args.pop} points"),
    ]

    print(f"{'kernel':<22} {'size':<28} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, call_args, size in cases:
        impls = _kernels.implementations(name)
        t_py = bench(impls["numpy"], call_args, args.repeats)
        row = f"{name:<22} {size:<28} {t_py * 1e3:9.1f}ms"
        if "numba" in impls:
            t_nb = bench(impls["numba"], call_args, args.repeats)
            out_py = impls["numpy"](*call_args)
            out_nb = impls["numba"](*call_args)
            if isinstance(out_py, tuple):
                agree = all((a == b).all() for a, b in zip(out_py, out_nb))
            else:
                agree = (out_py == out_nb).all()
            row += f" {t_nb * 1e3:9.2f}ms {t_py / t_nb:8.1f}x"
            if not agree:
                row += "  MISMATCH"
        else:
            row += f" {'n/a':>10} {'n/a':>9}"
        print(row)


if __name__ == "__main__":
    main()
