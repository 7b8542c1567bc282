#!/usr/bin/env python3
"""Benchmark: numba-compiled kernels vs the plain numpy fallback.

Times the four hot kernels (LSTM layer forward/backward, output layer
forward/backward) at the shapes the trained ensemble actually runs:
23-wide input vectors, a 128-unit first recurrent layer, and the window
lengths used by the detector. Both variants wrap the same source
functions, so this measures exactly what FAASGUARD_BACKEND switches.

Usage:
    python3 benchmarks/bench_backends.py [--batch N] [--repeats N]
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from faasguard.autoencoder.backend import build_kernels
from faasguard.features import VECTOR_WIDTH, WINDOW_SIZES


@dataclass
class BenchmarkResult:
    kernel: str
    window: int
    backend: str
    time_per_call_ms: float
    calls_per_s: float


def layer_inputs(rng, T, B, d_in, hidden):
    X = rng.standard_normal((T, B, d_in))
    W = rng.standard_normal((1 + d_in + hidden, 4 * hidden)) * 0.1
    return X, W


def time_call(fn, args, repeats):
    fn(*args)  # warmup (includes JIT compilation on the numba path)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def bench_backend(name, kernels, batch, repeats, hidden):
    rng = np.random.default_rng(7)
    results = []
    for T in WINDOW_SIZES:
        X, W = layer_inputs(rng, T, batch, VECTOR_WIDTH, hidden)
        forward = kernels.lstm_layer_forward
        t = time_call(forward, (X, W), repeats)
        results.append(BenchmarkResult(
            "lstm_forward", T, name, t * 1e3, 1.0 / t))

        Hout, C, Ct, Gf, Hin = forward(X, W)
        dHout = rng.standard_normal(Hout.shape)
        t = time_call(kernels.lstm_layer_backward,
                      (dHout, W, Hout, C, Ct, Gf, Hin), repeats)
        results.append(BenchmarkResult(
            "lstm_backward", T, name, t * 1e3, 1.0 / t))

        Wo = rng.standard_normal((1 + hidden, VECTOR_WIDTH)) * 0.1
        t = time_call(kernels.dense_sigmoid_forward, (Hout, Wo), repeats)
        results.append(BenchmarkResult(
            "dense_forward", T, name, t * 1e3, 1.0 / t))

        Y, Haug = kernels.dense_sigmoid_forward(Hout, Wo)
        dY = rng.standard_normal(Y.shape)
        t = time_call(kernels.dense_sigmoid_backward,
                      (dY, Y, Haug, Wo), repeats)
        results.append(BenchmarkResult(
            "dense_backward", T, name, t * 1e3, 1.0 / t))
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256,
                        help="windows per call (default 256)")
    parser.add_argument("--repeats", type=int, default=20,
                        help="timed calls per kernel (default 20)")
    parser.add_argument("--hidden", type=int, default=128,
                        help="recurrent layer width (default 128)")
    args = parser.parse_args()

    numpy_results = bench_backend(
        "numpy", build_kernels(use_numba=False),
        args.batch, args.repeats, args.hidden)
    try:
        numba_results = bench_backend(
            "numba", build_kernels(use_numba=True),
            args.batch, args.repeats, args.hidden)
    except ImportError:
        numba_results = None
        print("numba is not importable; showing the numpy fallback only\n")

    header = (f"{'kernel':<16}{'window':>7}{'numpy ms':>12}"
              f"{'numba ms':>12}{'speedup':>10}")
    print(f"batch={args.batch} input={VECTOR_WIDTH} hidden={args.hidden} "
          f"repeats={args.repeats} (median)")
    print(header)
    print("-" * len(header))
    for i, base in enumerate(numpy_results):
        if numba_results is None:
            print(f"{base.kernel:<16}{base.window:>7}"
                  f"{base.time_per_call_ms:>12.3f}{'-':>12}{'-':>10}")
            continue
        other = numba_results[i]
        speedup = base.time_per_call_ms / other.time_per_call_ms
        print(f"{base.kernel:<16}{base.window:>7}"
              f"{base.time_per_call_ms:>12.3f}"
              f"{other.time_per_call_ms:>12.3f}{speedup:>9.2f}x")


if __name__ == "__main__":
    main()
