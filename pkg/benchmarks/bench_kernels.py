"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Workloads mirror how the harness calls each kernel: ray solving and
clustering on per-trial batches of tens of rows, feature extraction on
classifier-sized batches.
"""
import argparse
import timeit

import numpy as np

from cfisac import _kernels_py as python_backend

try:
    from cfisac import _kernels as cython_backend
except ImportError:
    cython_backend = None


def workloads(rng):
    n = 75
    pd, pu = rng.uniform(0, 3000, (2, n, 3))
    ranges = np.linalg.norm(pd - pu, axis=1) + rng.uniform(10, 500, n)
    phi, theta = rng.uniform(-np.pi, np.pi, n), rng.uniform(-0.5, 0.5, n)
    points = rng.normal(0, 5, (60, 3)) + rng.integers(0, 3, (60, 1)) * 100.0
    s = (rng.choice([-1, 1], (256, 256)) + 1j * rng.choice([-1, 1], (256, 256))) / np.sqrt(2)
    r = s * (1.02 + 0.01j) + 0.05 * rng.standard_normal(s.shape)
    return {
        "solve_rays (75 rays)": lambda b: b.solve_rays(pd, pu, ranges, phi, theta),
        "single_linkage (60 points)": lambda b: b.single_linkage(points, 10.0),
        "residual_features (256 x 256)": lambda b: b.residual_features(r, s),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"python": python_backend}
    if cython_backend is not None:
        backends["cython"] = cython_backend
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':32} " + " ".join(f"{name:>12}" for name in backends) + "  speedup")
    for name, fn in workloads(np.random.default_rng(0)).items():
        times = {}
        for bname, backend in backends.items():
            timer = timeit.Timer(lambda: fn(backend))
            loops, _ = timer.autorange()
            times[bname] = min(timer.repeat(args.repeat, loops)) / loops
        cells = " ".join(f"{times[b] * 1e6:10.1f}us" for b in backends)
        speedup = f"{times['python'] / times['cython']:7.1f}x" if "cython" in times else ""
        print(f"{name:32} {cells}  {speedup}")


if __name__ == "__main__":
    main()
