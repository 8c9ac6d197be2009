"""Benchmark the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_backends.py

Covers the two hot paths (codebook assignment, tree split scan) at the sizes
the desk pipeline actually uses, plus an end-to-end boosted-tree fit with each
backend patched in.
"""

from __future__ import annotations

import time

import numpy as np

from biomech import _kernels_py as pyk
from biomech import backend
from biomech.gbdt import GBDTConfig, fit_gbdt

try:
    from biomech import _native as native
except ImportError:
    native = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_assign_codes():
    rng = np.random.default_rng(0)
    for n, k, d, label in ((512, 128, 64, "desk batch"), (7500, 128, 64, "full trial corpus")):
        z = rng.normal(size=(n, d))
        codes = rng.normal(size=(k, d))
        rows = [("python", timeit(lambda: pyk.assign_codes(z, codes)))]
        if native is not None:
            rows.append(("native", timeit(lambda: native.assign_codes(z, codes))))
            assert np.array_equal(pyk.assign_codes(z, codes), native.assign_codes(z, codes))
        report(f"assign_codes  {label:18s} (n={n}, K={k}, D={d})", rows)


def bench_best_split():
    rng = np.random.default_rng(1)
    for n, f, label in ((1300, 128, "task-sized node"), (5000, 128, "large node")):
        x = np.abs(rng.normal(size=(n, f)))
        x[x < 0.5] = 0.0  # histogram-like sparsity
        values_t = np.ascontiguousarray(x.T)
        order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
        mask = np.ones(n, dtype=np.uint8)
        grad = rng.normal(size=n)
        hess = np.abs(rng.normal(size=n)) + 0.1
        rows = [("python", timeit(lambda: pyk.best_split(values_t, order, mask, grad, hess, 5, 1.0)))]
        if native is not None:
            rows.append(("native", timeit(lambda: native.best_split(values_t, order, mask, grad, hess, 5, 1.0))))
            assert pyk.best_split(values_t, order, mask, grad, hess, 5, 1.0) == \
                native.best_split(values_t, order, mask, grad, hess, 5, 1.0)
        report(f"best_split    {label:18s} (n={n}, F={f})", rows)


def bench_gbdt_fit():
    rng = np.random.default_rng(2)
    x = rng.dirichlet(np.ones(32), size=600)
    labels = ["a" if v > np.median(x[:, 0]) else "b" for v in x[:, 0]]
    config = GBDTConfig(rounds=60, max_depth=3, seed=0)

    def fit_with(impl):
        saved = backend.best_split
        backend.best_split = impl.best_split
        try:
            return timeit(lambda: fit_gbdt(x, labels, config, "multiclass"), repeats=3)
        finally:
            backend.best_split = saved

    rows = [("python", fit_with(pyk))]
    if native is not None:
        rows.append(("native", fit_with(native)))
    report("fit_gbdt      end-to-end         (n=600, F=32, 60 rounds)", rows)


def report(label, rows):
    parts = [f"{name}: {dt * 1e3:9.2f} ms" for name, dt in rows]
    if len(rows) == 2:
        parts.append(f"speedup: {rows[0][1] / rows[1][1]:5.1f}x")
    print(f"{label:55s} " + "   ".join(parts))


if __name__ == "__main__":
    print(f"active backend: {backend.backend_name()}")
    if native is None:
        print("compiled extension not built; showing python fallback only")
    bench_assign_codes()
    bench_best_split()
    bench_gbdt_fit()
