"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Both backends get identical inputs; the script also reports the largest
output discrepancy so a speedup is never bought with a wrong answer.
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))

from jcas_unfold import kernels  # noqa: E402
from jcas_unfold.network import pgd_init  # noqa: E402
from jcas_unfold.problem import ColumnBatch, JcasProblem  # noqa: E402
from jcas_unfold.signals import chirp_benchmark, sample_channel, sample_qpsk_frame  # noqa: E402


def make_batch(n, k, m, rho, seed=0):
    rng = np.random.default_rng(seed)
    p = JcasProblem(sample_channel(k, n, rng), sample_qpsk_frame(k, m, rng), chirp_benchmark(n, m, 1.0), rho, 1.0)
    return ColumnBatch.from_frame(p)


def best_time(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def cases(n=8):
    batch = make_batch(n, 4, 160, 0.5)
    model = pgd_init(n, 10, 0.5, 1.0)
    zeros = np.zeros_like(batch.hts)
    amp = batch.amp
    delta = 1.0 / (2 * amp**2 * (0.5 * np.linalg.eigvalsh(batch.gram).max() + 0.5))
    tiny = make_batch(2, 1, 2, 0.5, seed=1)
    return {
        f"pgd (160 cols, N={n}, 500 it)": lambda k: k.pgd(
            batch.gram, batch.hts, batch.x0bar, batch.sbar_sq, 0.5, amp, delta, 500, 0.0, 20, batch.x0bar.copy()
        ),
        f"unfold_forward (160 cols, N={n}, L=10)": lambda k: k.unfold_forward(
            model.weights, model.biases, batch.gram, batch.hts, batch.x0bar, zeros
        ),
        f"unfold_loss_grad (160 cols, N={n}, L=10)": lambda k: k.unfold_loss_grad(
            model.weights, model.biases, batch.gram, batch.hts, batch.x0bar, batch.sbar_sq, 0.5, amp, zeros
        ),
        "phase_grid (N=2, 720 points)": lambda k: k.phase_grid(
            tiny.gram[0], tiny.hts[0], tiny.x0bar[0], float(tiny.sbar_sq[0]), 0.5, tiny.amp, 720
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':42s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, call in cases().items():
        tp = best_time(lambda: call(kernels.python), args.repeats)
        tc = best_time(lambda: call(kernels.compiled), args.repeats)
        diff = max_diff(call(kernels.python), call(kernels.compiled))
        print(f"{name:42s} {tp * 1e3:11.3f} {tc * 1e3:12.3f} {tp / tc:7.1f}x {diff:11.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
