#!/usr/bin/env python3
"""Timing comparison of the two kernel backends.

Runs every hot kernel (materialized and separable NUDFT applications,
circular finite differences and their adjoint, soft threshold) under the
JIT backend and the pure-numpy fallback on identically shaped inputs,
reporting best-of-N wall times, the speedup, and the cross-backend
agreement. The JIT path is compiled once before timing so compilation
cost never pollutes the numbers.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --samples 6656 --nx 256 --ny 128
"""

import argparse
import time

import numpy as np

from csrecon import kernels


def unit_phasors(rng, shape):
    return np.exp(-2j * np.pi * rng.random(shape))


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def build_cases(rng, m, nx, ny, coils):
    n = nx * ny
    matrix = unit_phasors(rng, (m, n))
    sens = random_complex(rng, (coils, nx, ny))
    sens_flat = np.ascontiguousarray(sens.reshape(coils, n))
    image = random_complex(rng, (nx, ny))
    image_flat = np.ascontiguousarray(image.ravel())
    data = random_complex(rng, (m, coils))
    phase0 = unit_phasors(rng, (m, nx))
    phase1 = unit_phasors(rng, (m, ny))
    phase1_t = np.ascontiguousarray(phase1.T)
    phase1_conj = np.ascontiguousarray(np.conj(phase1))
    diffs = random_complex(rng, (2, nx, ny))
    return [
        ("nudft forward (materialized)", "forward_mat",
         (matrix, sens_flat, image_flat)),
        ("nudft adjoint (materialized)", "adjoint_mat",
         (matrix, sens_flat, data)),
        ("nudft forward (separable)", "forward_sep",
         (phase0, phase1_t, sens, image)),
        ("nudft adjoint (separable)", "adjoint_sep",
         (phase0, phase1_conj, sens, data)),
        ("finite differences", "theta", (image,)),
        ("finite-difference adjoint", "theta_adj", (diffs,)),
        ("soft threshold", "soft", (diffs, 0.3)),
    ]


def best_seconds(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def fmt_seconds(seconds):
    if seconds >= 1.0:
        return f"{seconds:8.3f} s"
    return f"{seconds * 1e3:8.3f} ms"


def main():
    parser = argparse.ArgumentParser(
        description="Compare JIT and pure-numpy kernel backends")
    parser.add_argument("--samples", type=int, default=1664,
                        help="k-space samples (default 1664)")
    parser.add_argument("--nx", type=int, default=128)
    parser.add_argument("--ny", type=int, default=64)
    parser.add_argument("--coils", type=int, default=12)
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repeats per kernel, best kept (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = kernels.available_backends()
    rng = np.random.default_rng(args.seed)
    cases = build_cases(rng, args.samples, args.nx, args.ny, args.coils)

    print(f"problem: {args.samples} samples, {args.nx}x{args.ny} grid, "
          f"{args.coils} coils, best of {args.repeat}")
    print(f"backends: {', '.join(backends)}")
    if "numba" not in backends:
        print("numba is not importable; timing the numpy fallback only")
    header = f"{'kernel':<30}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}{'max rel diff':>14}"
    print(header)
    print("-" * len(header))

    for label, key, case_args in cases:
        results = {}
        times = {}
        for backend in backends:
            fn = kernels.get_impl(backend)[key]
            results[backend] = fn(*case_args)  # also compiles the JIT path
            times[backend] = best_seconds(fn, case_args, args.repeat)
        row = f"{label:<30}" + "".join(
            fmt_seconds(times[b]).rjust(12) for b in backends)
        if len(backends) > 1:
            ref = results["numpy"]
            scale = float(np.max(np.abs(ref))) or 1.0
            diff = float(np.max(np.abs(results["numba"] - ref))) / scale
            row += f"{times['numpy'] / times['numba']:>9.2f}x{diff:>14.2e}"
        print(row)


if __name__ == "__main__":
    main()
