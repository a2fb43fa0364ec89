"""Compare the compiled and pure-numpy batch loss kernels.

Run: python3 benchmarks/bench_kernels.py [--sizes 1000,100000] [--repeats 5]
Both paths are imported directly so the benchmark is independent of the
CCLKIT_DISABLE_NUMBA environment flag.
"""

import argparse
import time

import numpy as np

from cclkit.kernels import BASE_CE, CONC_QUAD, loss_batch_numpy
from cclkit.numerics import rng_stream, softmax

try:
    from cclkit.kernels import loss_batch_numba
except ImportError:
    loss_batch_numba = None


def _inputs(n, k, rng):
    probs = softmax(rng.normal(0.0, 3.0, size=(n, k)), axis=1)
    ys = rng.integers(0, k, size=n)
    return probs, ys


def _time(fn, probs, ys, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(probs, ys, BASE_CE, 2.0, CONC_QUAD, 0.5, 1.0)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="1000,10000,100000,1000000")
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = rng_stream(0, 0)
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"{'n':>9}  {'numpy (ms)':>11}  {'numba (ms)':>11}  {'speedup':>8}")
    for n in sizes:
        probs, ys = _inputs(n, args.classes, rng)
        t_np = _time(loss_batch_numpy, probs, ys, args.repeats)
        if loss_batch_numba is None:
            print(f"{n:>9}  {t_np * 1e3:>11.3f}  {'n/a':>11}  {'n/a':>8}")
            continue
        loss_batch_numba(probs[:2], ys[:2], BASE_CE, 2.0, CONC_QUAD, 0.5, 1.0)  # warm JIT
        t_nb = _time(loss_batch_numba, probs, ys, args.repeats)
        v_np, g_np = loss_batch_numpy(probs, ys, BASE_CE, 2.0, CONC_QUAD, 0.5, 1.0)
        v_nb, g_nb = loss_batch_numba(probs, ys, BASE_CE, 2.0, CONC_QUAD, 0.5, 1.0)
        assert np.allclose(v_np, v_nb, atol=1e-12) and np.allclose(g_np, g_nb, atol=1e-12)
        print(f"{n:>9}  {t_np * 1e3:>11.3f}  {t_nb * 1e3:>11.3f}  {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
