#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run after installing the package:

    python benchmarks/bench_kernels.py

Covers the three hot paths: the Jacobi Hermitian eigensolver (scalar
rotation loops, where the compiled core wins big), the unrolled-network
forward+backward pass (BLAS-bound, so the win is the fused elementwise
work and removed temporaries), and the ISTA iteration loop.
"""

import time

import numpy as np

from onebit_doa import _kernels_py as pure

try:
    from onebit_doa import _kernels as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats):
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench_jacobi(backend, m, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    h = (x + x.conj().T) / 2
    return timeit(lambda: backend.jacobi_eigh(h), repeats)


def bench_lista(backend, sensors, grid, depth, batch, repeats):
    rng = np.random.default_rng(1)
    dim = 2 * sensors * sensors
    weights = 0.01 * rng.standard_normal((depth, dim, grid))
    eta = np.full(depth, 0.01)
    phi = rng.standard_normal((dim, grid))
    c = rng.standard_normal((batch, dim))
    targets = np.abs(rng.standard_normal((batch, grid)))

    def run():
        o, u, r = backend.lista_forward_batch(weights, eta, phi, c)
        backend.lista_backward_batch(weights, eta, phi, o, u, r, targets)

    return timeit(run, repeats)


def bench_ista(backend, sensors, grid, iters, repeats):
    rng = np.random.default_rng(2)
    dim = 2 * sensors * sensors
    phi = rng.standard_normal((dim, grid))
    c = rng.standard_normal(dim)
    step = 1.0 / np.linalg.norm(phi, 2) ** 2
    return timeit(lambda: backend.ista_run(phi, c, 0.1, step, iters), repeats)


CASES = [
    ("jacobi_eigh 8x8", lambda b: bench_jacobi(b, 8, 200)),
    ("jacobi_eigh 16x16", lambda b: bench_jacobi(b, 16, 50)),
    ("lista fwd+bwd M=8 batch=32 I=10", lambda b: bench_lista(b, 8, 121, 10, 32, 20)),
    ("lista fwd+bwd M=16 batch=32 I=10", lambda b: bench_lista(b, 16, 121, 10, 32, 10)),
    ("ista_run M=8 2000 iters", lambda b: bench_ista(b, 8, 121, 2000, 3)),
]


def main():
    if compiled is None:
        print("compiled kernels not built; showing pure-python timings only\n")
    width = max(len(name) for name, _ in CASES)
    header = f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, runner in CASES:
        t_py = runner(pure)
        if compiled is not None:
            t_c = runner(compiled)
            print(f"{name:<{width}}  {t_py * 1e3:>8.2f}ms  {t_c * 1e3:>8.2f}ms  "
                  f"{t_py / t_c:>7.1f}x")
        else:
            print(f"{name:<{width}}  {t_py * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")


if __name__ == "__main__":
    main()
