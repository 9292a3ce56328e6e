#!/usr/bin/env python3
"""Benchmark the njit kernels against their pure-numpy fallbacks.

Runs both variants of every hot kernel on pipeline-scale inputs and prints
a table of per-call times and speedups. The numba variants are compiled
(and cached) on the first call; compilation time is excluded by a warmup
pass.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from aadkit import accel, kernels


def timeit(func, *args, repeats=5):
    func(*args)  # warmup / JIT
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    cases = []

    # 176 = 16 channels x 11 lags, the full-layout decoder dimension
    s = rng.standard_normal((176, 176))
    s = 0.5 * (s + s.T)
    cases.append((
        "jacobi eig 176x176",
        kernels._jacobi_driver_nb,
        kernels._jacobi_driver_np,
        lambda f: f(s.copy(), np.eye(176), 1e-13, 100),
    ))

    m = rng.standard_normal((176, 21))
    cases.append((
        "one-sided svd 176x21",
        kernels._svd_onesided_nb,
        kernels._svd_onesided_np,
        lambda f: f(m.copy(), np.eye(21), 1e-15, 60),
    ))

    a = rng.standard_normal((176, 176))
    a = a @ a.T + 176 * np.eye(176)
    cases.append((
        "cholesky 176x176",
        kernels._cholesky_nb,
        kernels._cholesky_np,
        lambda f: f(a.copy(), 1e-12),
    ))

    sos = np.array(
        [[0.2, 0.1, 0.05, -0.3, 0.2]] * 4
    )
    eeg = rng.standard_normal((3750, 16))  # one 30 s trial at 125 Hz
    cases.append((
        "sosfilt 4 sections, 3750x16",
        kernels._sosfilt_nb,
        kernels._sosfilt_np,
        lambda f: f(sos, eeg),
    ))

    audio = rng.standard_normal(16000)  # 1 s of audio
    poles = 0.98 * np.exp(2j * np.pi * np.linspace(0.01, 0.3, 17))
    gains = (1 - np.abs(poles)) ** 4
    cases.append((
        "gammatone 17 bands, 16k samples",
        kernels._resonator_mag_nb,
        kernels._resonator_mag_np,
        lambda f: f(audio, poles, gains, 4),
    ))

    h = np.kaiser(1813, 5.65) * np.sinc(0.036 * (np.arange(1813) - 906))
    cases.append((
        "polyphase fir 125->40 Hz, 3750x16",
        kernels._fir_resample_nb,
        kernels._fir_resample_np,
        lambda f: f(eeg, h, 8, 25, 1200),
    ))

    print(f"{'kernel':36s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, nb, np_impl, call in cases:
        t_nb = timeit(lambda: call(nb), repeats=args.repeats)
        t_np = timeit(lambda: call(np_impl), repeats=args.repeats)
        print(
            f"{name:36s} {t_nb * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms "
            f"{t_np / t_nb:7.1f}x"
        )


if __name__ == "__main__":
    main()
