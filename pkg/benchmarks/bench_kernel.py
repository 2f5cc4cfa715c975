#!/usr/bin/env python3
"""Benchmark the batched fixed-point forward kernels.

Compares the compiled extension, the numpy fallback, and the scalar
reference executor on identical workloads and prints throughput.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qnncheck import kernel
from qnncheck.executor import forward_fxp, quantize_network
from qnncheck.fxp import FxpFormat, RoundingMode
from qnncheck.lut import build_table, default_spec, lut_to_fxp
from qnncheck.modes import FxpMode
from qnncheck.network import SIGMOID, ActivationKind
from qnncheck.zoo import random_net


def bench(label, fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return label, best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--scalar-samples", type=int, default=2_000,
                    help="the scalar path is timed on fewer samples and "
                         "extrapolated")
    ap.add_argument("--format", default="Q8.8")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    fmt = FxpFormat.parse(args.format)
    mode = FxpMode(fmt, RoundingMode.TRUNCATE)
    net = random_net(args.seed, [25, 10, 4, 5], hidden=SIGMOID,
                     weight_scale=0.5)
    table = lut_to_fxp(build_table(default_spec(SIGMOID, 8.0), 0.05),
                       fmt, mode.rounding)
    qnet = quantize_network(net, mode, {ActivationKind.SIGMOID: table})

    rng = np.random.default_rng(args.seed)
    X = rng.integers(fmt.min_raw, fmt.max_raw + 1,
                     size=(args.samples, net.input_dim), dtype=np.int64)
    Xs = X[: args.scalar_samples]

    rows = []
    if kernel.ACTIVE_IMPL == "cython":
        rows.append(bench("cython ", lambda: kernel.batch_forward_fxp(
            qnet, X, impl="cython")))
    rows.append(bench("numpy  ", lambda: kernel.batch_forward_fxp(
        qnet, X, impl="numpy")))
    label, t = bench("scalar ", lambda: [forward_fxp(qnet, r.tolist())
                                         for r in Xs], repeats=1)
    rows.append((label, t * args.samples / len(Xs)))

    # correctness cross-check on a slice before reporting numbers
    ref = np.array([forward_fxp(qnet, r.tolist()).outputs for r in X[:50]])
    for impl in ("numpy", "cython") if kernel.ACTIVE_IMPL == "cython" \
            else ("numpy",):
        got = kernel.batch_forward_fxp(qnet, X[:50], impl=impl)
        assert (got == ref).all(), f"{impl} kernel disagrees with scalar"

    print(f"network {net.name}, format {fmt}, "
          f"{args.samples} samples")
    base = rows[0][1]
    for label, t in rows:
        rate = args.samples / t
        print(f"  {label} {t:8.3f}s  {rate:12.0f} samples/s  "
              f"({t / base:6.1f}x)")


if __name__ == "__main__":
    main()
