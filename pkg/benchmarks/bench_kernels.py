"""Compare the compiled clustering kernels against the NumPy fallback.

Usage:
    python benchmarks/bench_kernels.py [--n 20000] [--d 64] [--k 8] [--repeats 5]

Times the three kernel primitives and a full k-means fit on synthetic blobs,
and checks that both backends land on the same objective value.
"""

import argparse
import time

import numpy as np

from detrac import _kernels_py
from detrac import decomposition as dc

try:
    from detrac import _native
except ImportError:
    _native = None


def blobs(rng, n, d, k):
    centers = rng.normal(size=(k, d)) * 10.0
    assign = rng.integers(0, k, size=n)
    return np.ascontiguousarray(centers[assign] + rng.normal(size=(n, d)))


def time_call(fn, *args, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_backend(impl, X, centroids, k, repeats):
    rows = {}
    rows["assign_nearest"], (labels, _) = time_call(
        impl.assign_nearest, X, centroids, repeats=repeats
    )
    rows["update_centroids"], _ = time_call(
        impl.update_centroids, X, labels, k, repeats=repeats
    )
    rows["sed_total"], _ = time_call(
        impl.sed_total, X, centroids, labels, repeats=repeats
    )
    return rows


def bench_full_fit(env_value, X, k, seed, repeats):
    """Time kmeans_fit with the backend forced via DETRAC_PURE_PYTHON."""
    import importlib
    import os

    import detrac.kernels as kernels_mod

    old = os.environ.get("DETRAC_PURE_PYTHON")
    os.environ["DETRAC_PURE_PYTHON"] = env_value
    try:
        importlib.reload(kernels_mod)
        if env_value == "" and kernels_mod.BACKEND != "native":
            return None, None
        cfg = dc.DecompositionConfig(seed=seed, restarts=4, k_per_class=k)
        elapsed, (model, _) = time_call(
            dc.kmeans_fit, X, k, cfg, repeats=repeats
        )
        return elapsed, model.inertia
    finally:
        if old is None:
            os.environ.pop("DETRAC_PURE_PYTHON", None)
        else:
            os.environ["DETRAC_PURE_PYTHON"] = old
        importlib.reload(kernels_mod)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--d", type=int, default=64)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    X = blobs(rng, args.n, args.d, args.k)
    centroids = np.ascontiguousarray(rng.normal(size=(args.k, args.d)) * 10.0)

    print(f"workload: n={args.n} d={args.d} k={args.k} (best of {args.repeats})")
    py_rows = bench_backend(_kernels_py, X, centroids, args.k, args.repeats)
    if _native is None:
        print("compiled extension not built; showing NumPy fallback only")
        for name, seconds in py_rows.items():
            print(f"  {name:<18} python {seconds * 1e3:9.3f} ms")
        return

    nat_rows = bench_backend(_native, X, centroids, args.k, args.repeats)
    print(f"  {'kernel':<18} {'python':>12} {'native':>12} {'speedup':>9}")
    for name in py_rows:
        py, nat = py_rows[name], nat_rows[name]
        print(
            f"  {name:<18} {py * 1e3:9.3f} ms {nat * 1e3:9.3f} ms {py / nat:8.2f}x"
        )

    py_fit, py_inertia = bench_full_fit("1", X, args.k, args.seed, max(1, args.repeats // 2))
    nat_fit, nat_inertia = bench_full_fit("", X, args.k, args.seed, max(1, args.repeats // 2))
    if nat_fit is not None:
        drift = abs(py_inertia - nat_inertia) / max(1.0, abs(py_inertia))
        print(
            f"  {'kmeans_fit':<18} {py_fit * 1e3:9.3f} ms {nat_fit * 1e3:9.3f} ms "
            f"{py_fit / nat_fit:8.2f}x"
        )
        print(f"  objective agreement: relative difference {drift:.3e}")


if __name__ == "__main__":
    main()
