"""Time the numba kernels against their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--repeat R]

Each kernel is run once first (so JIT compilation is excluded), then timed
as the best of R runs. Outputs of the two backends are also checked for
bit-identity.
"""
import argparse
import timeit

import numpy as np

from ivysynth import _kernels as k


def cases(rows):
    rng = np.random.default_rng(0)
    t = rng.choice([-1, 1], rows).astype(np.int8)
    c = rng.choice([-1, 1], rows).astype(np.int8)
    W = rng.choice([-1, 1], size=(rows, 10)).astype(np.int8)
    members = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9])
    offsets = np.array([0, 4, 6, 7, 8, 9, 10])
    sizes = np.diff(offsets)
    toff = np.concatenate([[0], np.cumsum(2 ** sizes)[:-1]])
    lp = np.log(np.concatenate([rng.dirichlet(np.ones(2 ** s)) for s in sizes]))
    ln = np.log(np.concatenate([rng.dirichlet(np.ones(2 ** s)) for s in sizes]))
    key = k.stream_key(1, 2)
    return {
        "uniforms": (lambda: k._uniforms_nb(np.uint64(key), np.int64(0), np.int64(rows)),
                     lambda: k._uniforms_np(key, 0, rows)),
        "counts_2x2": (lambda: k._counts_2x2_nb(t, c), lambda: k._counts_2x2_np(t, c)),
        "clique_loglik": (lambda: k._clique_loglik_nb(W, members, offsets, lp, ln, toff),
                          lambda: k._clique_loglik_np(W, members, offsets, lp, ln, toff)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        print("numba backend unavailable (disabled or not installed); nothing to compare")
        return
    print(f"{'kernel':<15}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  identical")
    for name, (nb, npf) in cases(args.rows).items():
        same = np.array_equal(nb(), npf())  # also warms up the JIT
        t_nb = min(timeit.repeat(nb, number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(npf, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
