"""Time the compiled kernels against the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; sizes follow typical
account workloads (hundreds of movies, d around 5, n up to 3).
"""
import argparse
import timeit

import numpy as np

from housesplit import _pykernels
from housesplit.identification.gpca import monomial_exponents

try:
    from housesplit import _ckernels
except ImportError:
    _ckernels = None


def cases(m, d, n, seed=0):
    rng = np.random.default_rng(seed)
    X = np.c_[rng.standard_normal((m, d)), np.ones(m)]
    y = rng.standard_normal(m)
    groups = rng.integers(n, size=m)
    theta = rng.standard_normal((n, d + 1))
    Y = np.c_[X, y]
    exps = monomial_exponents(n, d + 2)
    coef = rng.standard_normal(len(exps))
    return {
        "grouped_normal_equations": lambda k: k.grouped_normal_equations(X, y, groups, n),
        "assign_min_residual": lambda k: k.assign_min_residual(X, y, theta),
        "veronese": lambda k: k.veronese(Y, exps),
        "veronese_gradient": lambda k: k.veronese_gradient(Y, exps, coef),
    }


def best_of(fn, repeat=5):
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--n", type=int, default=2)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"m={args.m} d={args.d} n={args.n}")
    print(f"{'kernel':<26}{'python us':>12}{'cython us':>12}{'speedup':>9}")
    for name, call in cases(args.m, args.d, args.n).items():
        tp = best_of(lambda: call(_pykernels)) * 1e6
        if _ckernels is None:
            print(f"{name:<26}{tp:>12.1f}{'-':>12}{'-':>9}")
            continue
        tc = best_of(lambda: call(_ckernels)) * 1e6
        print(f"{name:<26}{tp:>12.1f}{tc:>12.1f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
