"""Compare the two moment-accumulation paths.

The streaming path folds one rho^{\\otimes t} per call (repeated np.kron,
one temporary per sample); the blocked path contracts the sample axis of
a whole stack with one tensordot, which BLAS executes as a GEMM.  The
blocked path is what makes 2e4-sample sweeps at D^t ~ 1000 affordable,
and is why the hot kernels stay numpy calls instead of hand-written
compiled loops: the work is already inside BLAS/LAPACK.

Run:  python benchmarks/moment_paths.py
"""

import time

import numpy as np

from thermal_designs.design import MomentAccumulator, tensor_power_block_sum


def random_densities(rng, count, D):
    a = rng.normal(size=(count, D, D)) + 1j * rng.normal(size=(count, D, D))
    rho = a @ a.conj().transpose(0, 2, 1)
    rho /= np.trace(rho, axis1=1, axis2=2).real[:, None, None]
    return rho


def bench(D, t, count, repeat=3):
    rng = np.random.default_rng(0)
    rhos = random_densities(rng, count, D)

    def streaming():
        acc = MomentAccumulator(D, t)
        for rho in rhos:
            acc.update(rho)
        return acc.mean

    def blocked():
        return tensor_power_block_sum(rhos, t) / count

    results = {}
    for name, fn in (("streaming", streaming), ("blocked", blocked)):
        best = min(_timed(fn) for _ in range(repeat))
        results[name] = best
    gap = np.max(np.abs(streaming() - blocked()))
    speedup = results["streaming"] / results["blocked"]
    print(f"D={D:3d} t={t}  D^t={D**t:5d}  N={count:5d}   "
          f"streaming {results['streaming']:8.3f}s   "
          f"blocked {results['blocked']:8.3f}s   "
          f"speedup {speedup:5.1f}x   max|diff| {gap:.2e}")


def _timed(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


if __name__ == "__main__":
    print("moment accumulation: per-sample streaming vs blocked tensordot")
    bench(4, 2, 2000)
    bench(8, 2, 1000)
    bench(32, 2, 500)
    bench(8, 3, 200)
    bench(4, 5, 100)
