#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times im2col / col2im / max-pool on representative shapes (stem, stage, and
ASPP dilation regimes) plus an end-to-end conv2d forward+backward through
each backend. Run after `pip install -e . --no-build-isolation`:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from segforge.kernels import numpy_backend

try:
    from segforge.kernels import _native as native_backend
except ImportError:
    native_backend = None

CASES = [
    # name, (n, c, h, w), k, stride, dilation
    ("stem 7x7/2", (1, 3, 678, 1286), 7, 2, 1),
    ("stage 3x3", (1, 64, 170, 322), 3, 1, 1),
    ("aspp d6", (1, 256, 54, 92), 3, 1, 6),
    ("aspp d18", (1, 256, 78, 116), 3, 1, 18),
    ("toy 3x3", (8, 32, 18, 18), 3, 1, 1),
]


def out_size(size, k, s, d):
    return (size - d * (k - 1) - 1) // s + 1


def timeit(fn, repeats):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_backend(backend, case, repeats):
    name, shape, k, s, d = case
    n, c, h, w = shape
    oh, ow = out_size(h, k, s, d), out_size(w, k, s, d)
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal(shape).astype(np.float32))
    cols = backend.im2col(x, k, k, s, s, d, d, oh, ow)
    times = {
        "im2col": timeit(lambda: backend.im2col(x, k, k, s, s, d, d, oh, ow), repeats),
        "col2im": timeit(
            lambda: backend.col2im(cols, n, c, h, w, k, k, s, s, d, d, oh, ow), repeats
        ),
    }
    if k <= 3:
        poh, pow_ = out_size(h, 3, 2, 1), out_size(w, 3, 2, 1)
        times["maxpool"] = timeit(lambda: backend.maxpool_forward(x, 3, 2, poh, pow_), repeats)
    return times


def bench_conv_end_to_end(repeats):
    """Full conv2d forward+backward per backend via the env-independent path."""
    import segforge.kernels as kernels
    from segforge import Tensor, backward, ops, reset_tape

    results = {}
    backends = {"numpy": numpy_backend}
    if native_backend is not None:
        backends["native"] = native_backend
    saved = (kernels.im2col, kernels.col2im, kernels.maxpool_forward, kernels.maxpool_backward)
    try:
        for name, backend in backends.items():
            kernels.im2col = backend.im2col
            kernels.col2im = backend.col2im
            kernels.maxpool_forward = backend.maxpool_forward
            kernels.maxpool_backward = backend.maxpool_backward
            rng = np.random.default_rng(1)
            x = Tensor(rng.standard_normal((4, 64, 48, 48)).astype(np.float32),
                       requires_grad=True)
            w = Tensor(rng.standard_normal((64, 64, 3, 3)).astype(np.float32) * 0.05,
                       requires_grad=True)

            def step():
                reset_tape()
                x.grad = None
                w.grad = None
                out = ops.conv2d(x, w, padding=1)
                backward(ops.tensor_sum(out))

            results[name] = timeit(step, repeats)
    finally:
        kernels.im2col, kernels.col2im, kernels.maxpool_forward, kernels.maxpool_backward = saved
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if native_backend is None:
        print("compiled backend not built; timing numpy fallback only\n")

    header = f"{'case':<14s}{'kernel':<10s}{'numpy':>12s}"
    if native_backend is not None:
        header += f"{'native':>12s}{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for case in CASES:
        np_times = bench_backend(numpy_backend, case, args.repeats)
        nat_times = bench_backend(native_backend, case, args.repeats) if native_backend else {}
        for kernel, np_t in np_times.items():
            row = f"{case[0]:<14s}{kernel:<10s}{np_t * 1e3:>10.2f}ms"
            if nat_times:
                nat_t = nat_times[kernel]
                row += f"{nat_t * 1e3:>10.2f}ms{np_t / nat_t:>9.2f}x"
            print(row)

    print()
    conv = bench_conv_end_to_end(args.repeats)
    line = f"{'conv fwd+bwd':<24s}{conv['numpy'] * 1e3:>10.2f}ms"
    if "native" in conv:
        line += f"{conv['native'] * 1e3:>10.2f}ms{conv['numpy'] / conv['native']:>9.2f}x"
    print(line)


if __name__ == "__main__":
    main()
