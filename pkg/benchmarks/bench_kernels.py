"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeats N]

Set CHANGEDIFF_DISABLE_NUMBA=1 to confirm the fallback is selected globally.
"""
import argparse
import time

import numpy as np

from changediff import _accel, kernels


def best_of(fn, repeats):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    gt = rng.integers(0, 5, size=(1024, 1024))
    pred = rng.integers(0, 5, size=(1024, 1024))
    rings = []
    for _ in range(200):
        cx, cy = rng.uniform(0, 1024, 2)
        ang = np.sort(rng.uniform(0, 2 * np.pi, 8))
        rad = rng.uniform(4, 20, 8)
        rings.append((cx + rad * np.cos(ang), cy + rad * np.sin(ang)))
    return {
        "confusion 1024^2, 5 classes": lambda nb: kernels.confusion_counts(gt, pred, 5, use_numba=nb),
        "fill 200 polygons on 1024^2": lambda nb: kernels.even_odd_fill(rings, 1024, 1024, use_numba=nb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"numba available: {_accel.HAS_NUMBA}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        t_np = best_of(lambda: fn(False), args.repeats)
        line = f"{name:<32} numpy {t_np * 1e3:8.2f} ms"
        if _accel.HAS_NUMBA:
            assert np.array_equal(fn(False), fn(True))
            t_nb = best_of(lambda: fn(True), args.repeats)
            line += f"   numba {t_nb * 1e3:8.2f} ms   speedup {t_np / t_nb:5.1f}x"
        print(line)


if __name__ == "__main__":
    main()
