"""Shared numeric kernel: softmax, distribution stats, normal CDF, seeded RNG streams.

Everything here is pure and reentrant; arrays are treated as read-only inputs.
Probabilities destined for a logarithm are clamped to [PROB_FLOOR, 1] because
float softmax can underflow to exact zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

PROB_FLOOR = 1e-12


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Seeded generator; the same (seed, stream_id) pair reproduces the same
    sequence, distinct stream ids are statistically independent."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def clamp_probs(p):
    """Clamp probabilities into [PROB_FLOOR, 1] before taking logs."""
    return np.clip(p, PROB_FLOOR, 1.0)


def softmax(z, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtraction) along `axis`."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(frozen=True)
class DistStats:
    """Population mean/variance of a sample of reals."""

    mean: float
    var: float
    count: int


def dist_stats(xs) -> DistStats:
    """Population mean and variance (two-pass)."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise ValueError("dist_stats: empty input")
    mean = float(xs.mean())
    var = float(np.mean((xs - mean) ** 2))
    return DistStats(mean=mean, var=var, count=int(xs.size))


def erf(x):
    """Error function, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return math.erf(float(x))
    return np.vectorize(math.erf)(x)


def std_normal_cdf(x):
    """Standard normal CDF Phi(x) = (1 + erf(x / sqrt(2))) / 2."""
    return ndtr(x)


def std_normal_icdf(q):
    """Inverse standard normal CDF."""
    return ndtri(q)
