"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--size 64]

Prints the median wall time per call for each kernel and backend, the
speedup of the compiled backend, and the max absolute difference between
the two outputs.
"""
import argparse
import statistics
import time

import numpy as np

from darksight.kernels import available_backends, get_backend


def _median_time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(size, rng):
    x16 = rng.normal(size=(16, size, size)).astype(np.float32)
    w = rng.normal(size=(32, 16, 3, 3)).astype(np.float32)
    b = rng.normal(size=32).astype(np.float32)
    k = rng.uniform(size=(size, size, 25)).astype(np.float32)
    x3 = rng.normal(size=(3, size, size)).astype(np.float32)
    return {
        "conv2d 16->32 3x3": lambda m: m.conv2d(x16, w, b, 1, 1),
        "conv2d 16->32 3x3 s2": lambda m: m.conv2d(x16, w, b, 2, 1),
        "avgpool 2x2": lambda m: m.pool2d(x16, False, 2, 2),
        "maxpool 2x2": lambda m: m.pool2d(x16, True, 2, 2),
        "adaptive filter 5x5": lambda m: m.adaptive_filter(x3, k, 5),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--size", type=int, default=64, help="spatial extent of the test maps")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy backend only")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>11}")
    for name, fn in cases(args.size, np.random.default_rng(args.seed)).items():
        times = {b: _median_time(lambda: fn(get_backend(b)), args.repeat) for b in backends}
        row = f"{name:<24}" + "".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
        if "cython" in times:
            diff = np.abs(fn(get_backend("cython")).astype(np.float64)
                          - fn(get_backend("python")).astype(np.float64)).max()
            row += f"{times['python'] / times['cython']:>9.1f}x{diff:>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
