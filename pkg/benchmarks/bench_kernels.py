"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from patchensemble import kernels


def cases(rng):
    matrix = rng.normal(-1.0, 1.5, (2000, 200))
    n = 20000
    pos = np.sort(np.round(rng.normal(1, 1, n), 2))
    neg = np.sort(np.round(rng.normal(-1, 1, n), 2))
    return {
        "aggregate proposed 2000x200": lambda m: m.aggregate_rows(matrix, kernels.MODE_PROPOSED, 1),
        "aggregate kthreshold:10 2000x200": lambda m: m.aggregate_rows(matrix, kernels.MODE_KTHRESHOLD, 10),
        "aggregate mean 2000x200": lambda m: m.aggregate_rows(matrix, kernels.MODE_MEAN, 1),
        "aggregate median 2000x200": lambda m: m.aggregate_rows(matrix, kernels.MODE_MEDIAN, 1),
        "mann-whitney 20000x20000": lambda m: m.mann_whitney_counts(pos, neg),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; timing the numpy fallback only")
    names = sorted(backends)
    print(f"{'case':36s}" + "".join(f"{n:>12s}" for n in names) + "     speedup")
    for label, fn in cases(np.random.default_rng(0)).items():
        results = [fn(backends[n]) for n in names]
        for r in results[1:]:
            np.testing.assert_array_equal(np.asarray(r), np.asarray(results[0]))
        times = {n: min(timeit.repeat(lambda: fn(backends[n]), number=1, repeat=args.repeat))
                 for n in names}
        row = f"{label:36s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if len(names) == 2:
            row += f"  {times['python'] / times['compiled']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
