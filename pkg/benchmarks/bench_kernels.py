"""Numpy vs numba timings for the GRU and angular-adjacency kernels.

    python benchmarks/bench_kernels.py [--repeat 20]

Shapes follow a long conversation: N utterances, hidden width d/2 for the
GRU, 3N graph nodes of width d for the adjacency. The first numba call
(compilation) is excluded; outputs of both backends are cross-checked.
"""
import argparse
import timeit

import numpy as np

from mmdfn.convgraph import edge_mask
from mmdfn.kernels import implementations


def gru_case(rng, n, hidden):
    gi = rng.standard_normal((n, 3 * hidden))
    w_hh = rng.standard_normal((3 * hidden, hidden)) / np.sqrt(hidden)
    b_hh = rng.standard_normal(3 * hidden)
    return gi, w_hh, b_hh


def run_gru(impl, gi, w_hh, b_hh):
    hs, r, z, n, ghn = impl.gru_forward(gi, w_hh, b_hh)
    impl.gru_backward(np.ones_like(hs), w_hh, hs, r, z, n, ghn)
    return hs


def run_adjacency(impl, x, mask):
    adj, theta = impl.angular_adjacency_forward(x, mask)
    impl.angular_adjacency_backward(np.ones_like(adj), x, mask, theta)
    return adj


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 110])
    args = ap.parse_args()

    impls = implementations()
    if "numba" not in impls:
        print("numba is not installed; only the numpy backend can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<10} {'N':>5} " + " ".join(f"{name + ' ms':>10}" for name in impls)
          + (f" {'speedup':>8}" if len(impls) > 1 else ""))
    for n in args.sizes:
        gru_args = gru_case(rng, n, args.d // 2)
        x = rng.standard_normal((3 * n, args.d))
        mask = edge_mask(n)
        for label, fn, fargs in (("gru", run_gru, gru_args), ("adjacency", run_adjacency, (x, mask))):
            outs = {name: fn(impl, *fargs) for name, impl in impls.items()}  # also compiles
            if len(outs) > 1:
                np.testing.assert_allclose(outs["numpy"], outs["numba"], rtol=0, atol=1e-12)
            times = {name: bench(lambda impl=impl: fn(impl, *fargs), args.repeat)
                     for name, impl in impls.items()}
            row = f"{label:<10} {n:>5} " + " ".join(f"{t:>10.3f}" for t in times.values())
            if len(times) > 1:
                row += f" {times['numpy'] / times['numba']:>7.1f}x"
            print(row)


if __name__ == "__main__":
    main()
