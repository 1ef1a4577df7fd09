"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--full-run]

Times one client's local training (the per-round hot loop), a full-shard
loss pass, and optionally a complete default experiment under each backend
(the latter in a subprocess, since the backend is fixed at import).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fedsim.kernels import get_backend
from fedsim.model import epoch_order


def workload(n=32, d=8, k=12, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, k, n).astype(np.int64)
    W = rng.normal(0, 0.1, (k, d))
    b = np.zeros(k)
    return X, y, W, b


def bench_backend(name: str, repeat: int, n: int) -> dict:
    kern = get_backend(name)
    X, y, W0, b0 = workload(n)
    order = epoch_order(n, 5, 0)

    def train():
        W, b = W0.copy(), b0.copy()
        kern.sgd(W, b, X, y, order, 8, 0.05, 0.0)

    def evaluate():
        kern.loss_only(W0, b0, X, y, 0.0)

    number = 200
    out = {}
    for label, fn in (("sgd (5 epochs, batch 8)", train), ("loss pass", evaluate)):
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out[label] = best * 1e6
    return out


FULL_RUN = (
    "import time; from fedsim.config import ExperimentConfig; from fedsim.engine import run_single; "
    "t=time.perf_counter(); r=run_single(ExperimentConfig(rounds=50)); "
    "print(time.perf_counter()-t, r['final']['accuracy'])"
)


def full_run(name: str) -> tuple[float, float]:
    env = dict(os.environ, FEDSIM_KERNELS=name)
    out = subprocess.run([sys.executable, "-c", FULL_RUN], env=env, capture_output=True, text=True, check=True)
    secs, acc = out.stdout.split()
    return float(secs), float(acc)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=32, help="shard size (default: one default client)")
    ap.add_argument("--full-run", action="store_true", help="also time a 50-round default experiment")
    args = ap.parse_args(argv)

    try:
        get_backend("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled kernels not built; timing the numpy fallback only")
        backends = ["python"]

    results = {b: bench_backend(b, args.repeat, args.rows) for b in backends}
    print(f"{'kernel':<26}" + "".join(f"{b + ' (us)':>16}" for b in backends) + ("     speed-up" if len(backends) == 2 else ""))
    for label in results[backends[0]]:
        row = f"{label:<26}" + "".join(f"{results[b][label]:>16.1f}" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][label] / results['cython'][label]:>12.1f}x"
        print(row)

    if args.full_run:
        for b in backends:
            secs, acc = full_run(b)
            print(f"full 50-round default run [{b}]: {secs:.2f}s, final accuracy {acc:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
