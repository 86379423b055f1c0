"""Compiled vs pure-Python kernels on representative workloads.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per backend and the speedup. The compiled
backend must be built (``pip install --no-build-isolation -e .``).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rnnet import events as ev
from rnnet.reservoir import DeviceParams, ReservoirLayer, backend


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(kx):
    stream = ev.synthesize_moving_bar((128, 128), "right", 80.0, 1_500_000, event_rate=3, seed=0, noise_rate=5.0)
    t, node = stream.t, stream.node_index()
    reads = np.arange(30_000, 1_500_001, 30_000)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 16, 31, 31))
    pool_out = np.empty((16, 16, 15, 15))
    pool_idx = np.empty((16, 16, 15, 15), dtype=np.intc)
    cols = np.empty((16, 29, 29, 16, 3, 3))
    dx = np.zeros_like(x)

    def encode(kind, param):
        return lambda: ReservoirLayer(kind, (2, 128, 128), param, kernels=kx).run(t, node, reads)

    def col2im():
        dx[...] = 0
        kx.col2im(cols, 1, dx)

    return {
        f"RN encode, {len(stream):,} events 128x128": encode("RN", DeviceParams()),
        "TS encode, same stream": encode("TS", 60_000.0),
        "TAP encode, same stream": encode("TAP", 30_000),
        "maxpool 3x3/2 fwd, 16x16x31x31": lambda: kx.maxpool_fwd(x, 3, 2, pool_out, pool_idx),
        "im2col 3x3, 16x16x31x31": lambda: kx.im2col(x, 3, 1, cols),
        "col2im 3x3, 16x16x31x31": col2im,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in backend.BACKENDS:
        print("compiled backend not available; build the extension first")
        return
    results = {name: {} for name in workloads(backend.BACKENDS["python"])}
    for bname, kx in backend.BACKENDS.items():
        for name, fn in workloads(kx).items():
            results[name][bname] = best_of(fn, args.repeat)
    width = max(map(len, results))
    print(f"{'workload':<{width}}  {'python [ms]':>12}  {'cython [ms]':>12}  {'speedup':>8}")
    for name, r in results.items():
        print(f"{name:<{width}}  {r['python'] * 1e3:12.2f}  {r['cython'] * 1e3:12.2f}  {r['python'] / r['cython']:7.1f}x")


if __name__ == "__main__":
    main()
