"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat 3]

Both backends run on identical inputs; the script checks that they agree
and prints the best wall time of each and the speed-up.
"""
import argparse
import time

import numpy as np

from adaptw import _kernels_py

try:
    from adaptw import _kernels
except ImportError:  # extension not built
    _kernels = None


def _groups(rng, n_groups, max_size, sort=True):
    sizes = rng.integers(1, max_size + 1, n_groups)
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    x = rng.random(ptr[-1])
    w = rng.random(ptr[-1]) + 0.05
    for i in range(n_groups):
        s = slice(ptr[i], ptr[i + 1])
        if sort:
            x[s] = np.sort(x[s])
        w[s] /= w[s].sum()
    return ptr, x, w


def cases(rng):
    m = n = 60
    a = rng.random(m) + 0.1
    b = rng.random(n) + 0.1
    a /= a.sum()
    b /= b.sum()
    C = np.abs(rng.random(m)[:, None] - rng.random(n)[None, :])
    yield "transport_simplex 60x60", "transport_simplex", (a, b, C)

    pa, xa, wa = _groups(rng, 300, 8)
    pb, xb, wb = _groups(rng, 300, 8)
    yield "w1_pairs 300x300 groups", "w1_pairs", (pa, xa, wa, pb, xb, wb)

    pa, _, wa = _groups(rng, 80, 5)
    pb, _, wb = _groups(rng, 80, 5)
    ia = rng.permutation(pa[-1]).astype(np.int64)
    ib = rng.permutation(pb[-1]).astype(np.int64)
    M = rng.random((pa[-1], pb[-1]))
    yield "dp_level 80x80 nodes", "dp_level", (pa, ia, wa, pb, ib, wb, M)


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':28s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s}  agree")
    for label, name, inputs in cases(rng):
        tc, oc = best_time(getattr(_kernels, name), inputs, args.repeat)
        tp, op = best_time(getattr(_kernels_py, name), inputs, args.repeat)
        if name == "transport_simplex":
            C = inputs[2]
            agree = abs(float(np.dot(oc[2], C[oc[0], oc[1]]))
                        - float(np.dot(op[2], C[op[0], op[1]]))) < 1e-12
        else:
            agree = np.allclose(oc, op, atol=1e-12, rtol=0)
        print(f"{label:28s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
