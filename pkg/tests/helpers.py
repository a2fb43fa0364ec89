"""Shared test oracles, independent of the library code paths they check."""

import numpy as np

from cclkit.losses import LossSpec


def softmax_ld(z):
    z = np.asarray(z, dtype=np.longdouble)
    e = np.exp(z - z.max())
    return e / e.sum()


def loss_value_ld(spec: LossSpec, z, y: int):
    """Extended-precision loss(softmax(z), y), mirroring the spec formula."""
    p = softmax_ld(z)
    py = min(max(p[y], np.longdouble(1e-12)), np.longdouble(1.0))
    if spec.base.kind == "ce":
        bv = -np.log(py)
    else:
        bv = -((1 - py) ** np.longdouble(spec.base.gamma)) * np.log(py)
    if spec.concave is None:
        return np.longdouble(spec.scale) * bv
    if spec.concave.kind == "cel":
        cv = -np.exp(py)
    else:
        cv = -py - np.longdouble(0.5) * py * py
    a = np.longdouble(spec.alpha)
    return np.longdouble(spec.scale) * (a * bv + (1 - a) * cv)


def fd_grad_logits(spec: LossSpec, z, y: int, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of loss(softmax(z), y), extended precision."""
    z = np.asarray(z, dtype=np.longdouble)
    h = np.longdouble(step)
    g = np.zeros_like(z)
    for j in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        g[j] = (loss_value_ld(spec, zp, y) - loss_value_ld(spec, zm, y)) / (2 * h)
    return np.asarray(g, dtype=np.float64)


def grad_rel_err(analytic: np.ndarray, oracle: np.ndarray) -> float:
    """Inf-norm relative disagreement."""
    denom = max(float(np.max(np.abs(oracle))), 1e-12)
    return float(np.max(np.abs(analytic - oracle))) / denom


def logits_for_probs(p) -> np.ndarray:
    """Logits whose softmax is exactly (up to float) the given simplex point."""
    return np.log(np.asarray(p, dtype=np.float64))
