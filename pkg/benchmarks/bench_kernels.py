"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--sizes 400 1600 3200] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from dbartau import _kernels_py

try:
    from dbartau import _kernels
except ImportError:
    _kernels = None


def cases(n, rng):
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    w = rng.random(n)
    F = rng.normal(size=(n, 2, 1)) + 1j * rng.normal(size=(n, 2, 1))
    G = rng.normal(size=(n, 2, 1)) + 1j * rng.normal(size=(n, 2, 1))
    DF = rng.normal(size=(n, 2, 1)) + 1j * rng.normal(size=(n, 2, 1))
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return {
        "cauchy_matrix": lambda m: m.cauchy_matrix(z, z + 0.01, w, 1),
        "cauchy_sum": lambda m: m.cauchy_sum(z, z + 0.01, c, 1),
        "integrable_kernel_matrix": lambda m: m.integrable_kernel_matrix(z, F, G, DF, np.sqrt(w), 1e-6),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[400, 1600, 3200])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<26}{'n':>6}{'numpy [ms]':>13}{'compiled [ms]':>15}{'speedup':>9}{'max diff':>11}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
            if _kernels is None:
                print(f"{name:<26}{n:>6}{1e3 * t_py:>13.2f}{'-':>15}{'-':>9}{'-':>11}")
                continue
            t_c = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
            diff = np.max(np.abs(fn(_kernels) - fn(_kernels_py)))
            print(f"{name:<26}{n:>6}{1e3 * t_py:>13.2f}{1e3 * t_c:>15.2f}{t_py / t_c:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
