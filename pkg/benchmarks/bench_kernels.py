"""Compare the compiled and pure-Python kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from ddtrigger import _kernels_py

try:
    from ddtrigger import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def cases():
    rng = np.random.default_rng(0)
    A = np.array([[1.0, 0.0995], [0.0, 0.99]])
    B = np.array([[0.0005], [0.00995]])
    K = np.array([[-3.75, -11.5]])
    Om = np.array([[2.0, 0.5], [0.5, 1.0]])
    x0 = np.array([3.0, -2.0])
    ets = (A, B, K, Om, x0, 4000, 2, 0.5, 0.5, 0.2, 2.0, 0.0, False)
    sts = (A, B @ K, Om, x0, 0.5, 0.5, 200)
    xseg = rng.normal(size=(60, 2))
    S = rng.normal(size=(8, 8))
    R = np.eye(2)
    dlf = (xseg, S, R, 2 * R)
    return {"ets_loop": ets, "sts_scan": sts, "dlf_segment": dlf}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<12} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, call_args in cases().items():
        py = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*call_args), number=1, repeat=args.repeat))
        if _kernels_c is None:
            print(f"{name:<12} {py * 1e3:12.3f} {'n/a':>12} {'n/a':>8}")
            continue
        cy = min(timeit.repeat(lambda: getattr(_kernels_c, name)(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<12} {py * 1e3:12.3f} {cy * 1e3:12.3f} {py / cy:8.1f}x")


if __name__ == "__main__":
    main()
