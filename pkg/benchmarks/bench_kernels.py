#!/usr/bin/env python3
"""Benchmark the compiled geodesic kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--quick]

Times the three hot operations the evaluation pipeline leans on: element-wise
haversine over paired arrays, medoid distance sums (O(n^2)), and the
nearest-centroid scan used by the offline gazetteer provider.
"""
from __future__ import annotations

import argparse
import random
import time
from array import array

from geoloceval._kernels import pure

try:
    from geoloceval._kernels import _core as compiled
except ImportError:
    compiled = None


def coords(n: int, seed: int) -> tuple[array, array]:
    rng = random.Random(seed)
    return (
        array("d", (rng.uniform(-90, 90) for _ in range(n))),
        array("d", (rng.uniform(-180, 180) for _ in range(n))),
    )


def timeit(fn, *args, repeat: int = 3) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()

    scale = 0.2 if args.quick else 1.0
    cases = [
        ("haversine_pairs", int(200_000 * scale), None),
        ("distance_sums", int(2_000 * scale), None),
        ("nearest_indices", int(20_000 * scale), int(5_000 * scale)),
    ]

    print(f"{'kernel':<18} {'size':>12} {'pure (s)':>10} {'compiled (s)':>13} {'speedup':>9}")
    for name, n, m in cases:
        if name == "haversine_pairs":
            lat1, lon1 = coords(n, 1)
            lat2, lon2 = coords(n, 2)
            args_tuple = (lat1, lon1, lat2, lon2)
            size = f"{n:,}"
        elif name == "distance_sums":
            lats, lons = coords(n, 3)
            args_tuple = (lats, lons)
            size = f"{n:,}^2"
        else:
            qlats, qlons = coords(n, 4)
            glats, glons = coords(m, 5)
            args_tuple = (qlats, qlons, glats, glons)
            size = f"{n:,}x{m:,}"

        t_pure = timeit(getattr(pure, name), *args_tuple, repeat=1)
        if compiled is None:
            print(f"{name:<18} {size:>12} {t_pure:>10.3f} {'not built':>13} {'-':>9}")
            continue
        t_comp = timeit(getattr(compiled, name), *args_tuple)
        check_pure = getattr(pure, name)(*args_tuple)
        check_comp = getattr(compiled, name)(*args_tuple)
        if name == "nearest_indices":
            assert list(check_pure) == list(check_comp), "backend mismatch"
        else:
            assert all(
                abs(a - b) <= 1e-9 + 1e-12 * abs(a)
                for a, b in zip(check_pure, check_comp)
            ), "backend mismatch"
        print(
            f"{name:<18} {size:>12} {t_pure:>10.3f} {t_comp:>13.4f} "
            f"{t_pure / t_comp:>8.0f}x"
        )


if __name__ == "__main__":
    main()
