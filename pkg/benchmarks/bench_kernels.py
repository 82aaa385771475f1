"""Timing comparison of the fused activation kernel backends.

Runs sigma_eval over network-shaped batches with both the compiled
extension and the numpy fallback, checks they agree to rounding, and
prints a throughput table.  Usage:

    python3 benchmarks/bench_kernels.py [--repeat 30] [--order 2]
"""

import argparse
import time

import numpy as np

from difno import _kernels_np


def load_compiled():
    try:
        from difno import _ckernels
        return _ckernels
    except ImportError:
        return None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=30)
    ap.add_argument("--order", type=int, default=2, choices=(0, 1, 2))
    args = ap.parse_args()

    compiled = load_compiled()
    if compiled is None:
        print("compiled backend unavailable; showing numpy only")

    shapes = [
        (8, 16, 32, 32),     # batch x width x grid, small 2d run
        (8, 32, 64, 64),     # mid-size 2d training step
        (2, 16, 16, 16, 16), # small 3d run
    ]
    kinds = [(0, "normal"), (1, "logistic"), (2, "tanh-cubic")]
    a1, a2 = 0.7978845608028654, 0.044715

    print(f"order={args.order}  repeat={args.repeat}  (best-of timings)")
    header = f"{'kind':>10} {'shape':>18} {'numpy ms':>10}"
    if compiled:
        header += f" {'cython ms':>10} {'speedup':>8}"
    print(header)

    rng = np.random.default_rng(0)
    for kind, kname in kinds:
        for shape in shapes:
            x = rng.standard_normal(shape)
            ref = _kernels_np.sigma_eval(kind, x, a1, a2, args.order)
            t_np = best_time(
                lambda: _kernels_np.sigma_eval(kind, x, a1, a2, args.order),
                args.repeat)
            line = f"{kname:>10} {str(shape):>18} {1e3 * t_np:10.3f}"
            if compiled:
                got = compiled.sigma_eval(kind, x, a1, a2, args.order)
                for r, g in zip(ref, got):
                    err = np.max(np.abs(r - g))
                    if err > 1e-12:
                        raise SystemExit(
                            f"backend mismatch: kind={kind} err={err:g}")
                t_cy = best_time(
                    lambda: compiled.sigma_eval(kind, x, a1, a2, args.order),
                    args.repeat)
                line += f" {1e3 * t_cy:10.3f} {t_np / t_cy:8.2f}x"
            print(line)


if __name__ == "__main__":
    main()
