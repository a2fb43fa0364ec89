"""Hot per-sample loss kernels: batched loss values and logit-gradients.

Two implementations of the same kernel live here: a numba @njit loop and a
pure-numpy vectorized path. The active one is chosen at import time; set
CCLKIT_DISABLE_NUMBA=1 to force the numpy path (also used automatically when
numba is not importable). `benchmarks/bench_kernels.py` compares the two.

Kinds are integer-encoded so the numba signature stays simple:
  base:    0 = cross-entropy, 1 = focal(gamma)
  concave: 0 = none, 1 = negative-exponential, 2 = quadratic
"""

from __future__ import annotations

import os

import numpy as np

PROB_FLOOR = 1e-12

BASE_CE = 0
BASE_FOCAL = 1

CONC_NONE = 0
CONC_EXP = 1
CONC_QUAD = 2


def loss_batch_numpy(P, y, base, gamma, concave, alpha, scale):
    """Per-sample loss values and logit-gradients for a batch.

    P: (n, K) softmax probabilities; y: (n,) int class indices.
    Returns (values (n,), grads (n, K)) where grads are d loss / d logits.
    """
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, k = P.shape
    rows = np.arange(n)
    py_raw = P[rows, y]
    py = np.clip(py_raw, PROB_FLOOR, 1.0)

    if base == BASE_CE:
        base_val = -np.log(py)
        base_deriv = -1.0 / py
    else:
        omp = 1.0 - py
        base_val = -(omp**gamma) * np.log(py)
        base_deriv = gamma * omp ** (gamma - 1.0) * np.log(py) - (omp**gamma) / py

    if concave == CONC_NONE:
        values = scale * base_val
        g = scale * base_deriv
    else:
        if concave == CONC_EXP:
            conc_val = -np.exp(py)
            conc_deriv = -np.exp(py)
        else:
            conc_val = -py - 0.5 * py * py
            conc_deriv = -1.0 - py
        values = scale * (alpha * base_val + (1.0 - alpha) * conc_val)
        g = scale * (alpha * base_deriv + (1.0 - alpha) * conc_deriv)

    # d p_y / d z_j = p_y (delta_jy - p_j)
    grads = (-(g * py_raw))[:, None] * P
    grads[rows, y] += g * py_raw
    return values, grads


try:
    if os.environ.get("CCLKIT_DISABLE_NUMBA"):
        raise ImportError("numba disabled by CCLKIT_DISABLE_NUMBA")
    from numba import njit

    @njit(cache=True)
    def loss_batch_numba(P, y, base, gamma, concave, alpha, scale):
        n, k = P.shape
        values = np.empty(n)
        grads = np.empty((n, k))
        for i in range(n):
            py_raw = P[i, y[i]]
            py = py_raw
            if py < PROB_FLOOR:
                py = PROB_FLOOR
            elif py > 1.0:
                py = 1.0

            if base == 0:
                base_val = -np.log(py)
                base_deriv = -1.0 / py
            else:
                omp = 1.0 - py
                base_val = -(omp**gamma) * np.log(py)
                base_deriv = gamma * omp ** (gamma - 1.0) * np.log(py) - (omp**gamma) / py

            if concave == 0:
                values[i] = scale * base_val
                g = scale * base_deriv
            else:
                if concave == 1:
                    conc_val = -np.exp(py)
                    conc_deriv = -np.exp(py)
                else:
                    conc_val = -py - 0.5 * py * py
                    conc_deriv = -1.0 - py
                values[i] = scale * (alpha * base_val + (1.0 - alpha) * conc_val)
                g = scale * (alpha * base_deriv + (1.0 - alpha) * conc_deriv)

            for j in range(k):
                grads[i, j] = -g * py_raw * P[i, j]
            grads[i, y[i]] += g * py_raw
        return values, grads

    loss_batch = loss_batch_numba
    USING_NUMBA = True
except ImportError:
    loss_batch_numba = None
    loss_batch = loss_batch_numpy
    USING_NUMBA = False
