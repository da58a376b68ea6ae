"""Compare the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is warmed up
once (so numba compilation is excluded), then timed as the best of several
repeats. Outputs of the two implementations are checked for agreement.
"""

import argparse
import timeit

import numpy as np

from eonoise import kernels
from eonoise._accel import HAS_NUMBA


def cases(n_time, n_freq, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.5e-9, 2e-9, n_time))
    u = rng.uniform(0.0, 1.0, n_time)
    x = rng.normal(size=(n_time, n_freq))
    a = float(np.exp(-0.2))
    y0 = np.zeros(n_freq)
    return {
        "first-order hold": (
            lambda: kernels.foh_response_jit(t, u, 20e-9, 1.0, 0.0),
            lambda: kernels.foh_response_numpy(t, u, 20e-9, 1.0, 0.0),
        ),
        "lock-in smoothing": (
            lambda: kernels.smoothing_jit(x, a, y0),
            lambda: kernels.smoothing_numpy(x, a, y0),
        ),
    }


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-time", type=int, default=200_000, help="samples per trace (default: %(default)s)")
    ap.add_argument("--n-freq", type=int, default=121, help="frequency columns for smoothing (default: %(default)s)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; both columns time the numpy fallback")
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, (jit, ref) in cases(args.n_time, args.n_freq, args.seed).items():
        diff = float(np.max(np.abs(jit() - ref())))  # also triggers compilation
        t_jit = best_of(jit, args.repeat, 1)
        t_ref = best_of(ref, args.repeat, 1)
        print(f"{name:<20}{t_jit * 1e3:>12.2f}{t_ref * 1e3:>12.2f}{t_ref / t_jit:>9.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
