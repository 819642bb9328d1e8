"""Compare the compiled and pure-Python event kernels.

Usage: python benchmarks/bench_kernels.py [--pairs N] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from calib import _pykernels

try:
    from calib import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    rate = 17000.0
    t = np.sort(rng.uniform(0.0, n / rate, n))
    d1 = t[rng.random(n) < 0.25]
    return {
        "nonparalyzable_mask": (t, 50e-9),
        "paralyzable_mask": (t, 50e-9),
        "driver_accept": (d1, 10e-6, 1e4, 1.0, 1.0),
        "flip_mask": (t + 245e-9, d1, 155e-9, 335e-9),
        "match_coincidences": (d1, np.sort(t[rng.random(n) < 0.1] + 245e-9), 245e-9, 2.5e-9),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    inputs = _inputs(args.pairs)
    print(f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, call_args in inputs.items():
        py = min(timeit.repeat(lambda: getattr(_pykernels, name)(*call_args), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:<22}{py * 1e3:>14.2f}{'n/a':>14}{'':>10}")
            continue
        cy = min(timeit.repeat(lambda: getattr(_ckernels, name)(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<22}{py * 1e3:>14.2f}{cy * 1e3:>14.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
