"""Loss zoo: convex bases, concave terms, the convex-concave mixture, and the
regularized baselines (label smoothing, confidence penalty).

A loss here is a function of the true-class confidence p_y only (plus the
entropy term for the confidence penalty). Logit-gradients follow from
d p_y / d z_j = p_y (delta_jy - p_j); for a mixture with cross-entropy base the
gradient factors as c(p_y) * (p - onehot(y)) * scale with
c(p_y) = alpha - (1 - alpha) * p_y * conc'(p_y), which is sandwiched in
[alpha, alpha + A (1 - alpha)] for A = -conc'(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import clamp_probs, softmax


@dataclass(frozen=True)
class ConvexBase:
    """Strictly convex base loss of p_y: cross-entropy or focal."""

    kind: str  # "ce" | "focal"
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in ("ce", "focal"):
            raise ValueError(f"unknown base loss: {self.kind!r}")
        if self.kind == "focal" and self.gamma < 0:
            raise ValueError("focal gamma must be >= 0")

    def value(self, p):
        p = clamp_probs(p)
        if self.kind == "ce":
            return -np.log(p)
        return -((1.0 - p) ** self.gamma) * np.log(p)

    def deriv(self, p):
        p = clamp_probs(p)
        if self.kind == "ce":
            return -1.0 / p
        omp = 1.0 - p
        return self.gamma * omp ** (self.gamma - 1.0) * np.log(p) - (omp**self.gamma) / p

    @property
    def code(self) -> int:
        return kernels.BASE_CE if self.kind == "ce" else kernels.BASE_FOCAL


@dataclass(frozen=True)
class ConcaveTerm:
    """Decreasing strictly concave term of p_y on [0, 1]."""

    kind: str  # "cel" | "cql"

    def __post_init__(self):
        if self.kind not in ("cel", "cql"):
            raise ValueError(f"unknown concave term: {self.kind!r}")

    def value(self, p):
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "cel":
            return -np.exp(p)
        return -p - 0.5 * p * p

    def deriv(self, p):
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "cel":
            return -np.exp(p)
        return -1.0 - p

    @property
    def a_const(self) -> float:
        """A = -deriv(1) > 0, the tangent slope magnitude at p_y = 1."""
        return float(-self.deriv(1.0))

    @property
    def code(self) -> int:
        return kernels.CONC_EXP if self.kind == "cel" else kernels.CONC_QUAD


@dataclass(frozen=True)
class LossSpec:
    """Named, parameterized training loss: scale * [alpha * base + (1-alpha) * concave].

    With no concave term the spec degenerates to scale * base regardless of alpha.
    """

    base: ConvexBase
    concave: ConcaveTerm | None = None
    alpha: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.scale <= 0.0:
            raise ValueError("scale must be > 0")

    @property
    def name(self) -> str:
        b = self.base.kind
        if self.concave is None:
            return b
        return f"c{b}+{self.concave.kind}(a={self.alpha:g})"

    def to_config(self) -> dict:
        return {
            "base": self.base.kind,
            "gamma": self.base.gamma,
            "concave": self.concave.kind if self.concave else "none",
            "alpha": self.alpha,
            "scale": self.scale,
        }

    @staticmethod
    def from_config(cfg: dict) -> "LossSpec":
        base = ConvexBase(cfg.get("base", "ce"), float(cfg.get("gamma", 2.0)))
        conc = cfg.get("concave", "none")
        concave = None if conc in (None, "none", "") else ConcaveTerm(conc)
        return LossSpec(
            base=base,
            concave=concave,
            alpha=float(cfg.get("alpha", 1.0)),
            scale=float(cfg.get("scale", 1.0)),
        )


def _check_class(p, y):
    p = np.asarray(p, dtype=np.float64)
    y = int(y)
    if not 0 <= y < p.shape[-1]:
        raise ValueError(f"class index {y} out of range for {p.shape[-1]} classes")
    return p, y


def loss_value(spec: LossSpec, p, y) -> float:
    """Loss of one probability vector at true class y."""
    p, y = _check_class(p, y)
    py = float(clamp_probs(p[y]))
    val = float(spec.base.value(py))
    if spec.concave is None:
        return spec.scale * val
    return spec.scale * (spec.alpha * val + (1.0 - spec.alpha) * float(spec.concave.value(py)))


def dloss_dpy(spec: LossSpec, py) -> float | np.ndarray:
    """Derivative of the (scaled, mixed) loss w.r.t. the true-class confidence."""
    py = clamp_probs(py)
    d = spec.base.deriv(py)
    if spec.concave is not None:
        d = spec.alpha * d + (1.0 - spec.alpha) * spec.concave.deriv(py)
    return spec.scale * d


def loss_grad_logits(spec: LossSpec, z, y) -> np.ndarray:
    """Analytic gradient of the loss w.r.t. the logits."""
    z = np.asarray(z, dtype=np.float64)
    p = softmax(z)
    p, y = _check_class(p, y)
    py = p[y]
    g = float(dloss_dpy(spec, py))
    grad = -g * py * p
    grad[y] += g * py
    return grad


def loss_batch(spec: LossSpec, P, y) -> tuple[np.ndarray, np.ndarray]:
    """Batched (values, logit-gradients) via the active kernel backend."""
    conc_code = kernels.CONC_NONE if spec.concave is None else spec.concave.code
    return kernels.loss_batch(
        np.ascontiguousarray(P, dtype=np.float64),
        np.asarray(y, dtype=np.int64),
        spec.base.code,
        float(spec.base.gamma),
        conc_code,
        float(spec.alpha),
        float(spec.scale),
    )


def acceleration_coefficient(spec: LossSpec, py) -> float | np.ndarray:
    """c(p_y) = alpha - (1 - alpha) * p_y * conc'(p_y); the factor by which the
    mixture rescales the plain cross-entropy logit gradient."""
    if spec.concave is None:
        raise ValueError("acceleration coefficient needs a concave term")
    py = clamp_probs(py)
    return spec.alpha - (1.0 - spec.alpha) * py * spec.concave.deriv(py)


def grad_bound_check(spec: LossSpec, z, y, tol: float = 1e-9) -> bool:
    """True iff c(p_y) lies in [alpha, alpha + A(1-alpha)] and the mixture
    gradient agrees in sign with the cross-entropy gradient componentwise."""
    if spec.concave is None:
        raise ValueError("grad_bound_check needs a concave term")
    z = np.asarray(z, dtype=np.float64)
    p = softmax(z)
    p, y = _check_class(p, y)
    c = float(acceleration_coefficient(spec, p[y]))
    a_const = spec.concave.a_const
    lo, hi = spec.alpha, spec.alpha + a_const * (1.0 - spec.alpha)
    if not (lo - tol <= c <= hi + tol):
        return False
    ce_grad = p.copy()
    ce_grad[y] -= 1.0
    mix_grad = loss_grad_logits(spec, z, y)
    return bool(np.all(mix_grad * ce_grad >= -tol))


def shannon_entropy(p) -> float:
    p = clamp_probs(np.asarray(p, dtype=np.float64))
    return float(-np.sum(p * np.log(p)))


def label_smoothing_value(p, y, smoothing: float) -> float:
    """Cross-entropy against (1-s) * onehot + s/K soft targets."""
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must be in [0, 1)")
    p, y = _check_class(p, y)
    k = p.shape[-1]
    q = np.full(k, smoothing / k)
    q[y] += 1.0 - smoothing
    return float(-np.sum(q * np.log(clamp_probs(p))))


def confidence_penalty_value(p, y, beta: float) -> float:
    """Cross-entropy minus beta times the Shannon entropy of the prediction."""
    if beta < 0.0:
        raise ValueError("penalty weight must be >= 0")
    p, y = _check_class(p, y)
    py = float(clamp_probs(p[y]))
    return -math.log(py) - beta * shannon_entropy(p)


def baseline_loss(kind: str, params: dict, p, y) -> float:
    """Dispatch for the regularized baseline losses."""
    if kind == "label_smoothing":
        return label_smoothing_value(p, y, float(params.get("smoothing", 0.0)))
    if kind == "confidence_penalty":
        return confidence_penalty_value(p, y, float(params.get("beta", 0.0)))
    raise ValueError(f"unknown baseline loss: {kind!r}")


@dataclass(frozen=True)
class Objective:
    """Training objective: a LossSpec or one of the regularized baselines."""

    kind: str = "spec"  # "spec" | "label_smoothing" | "confidence_penalty"
    spec: LossSpec | None = None
    smoothing: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == "spec":
            if self.spec is None:
                raise ValueError("spec objective needs a LossSpec")
        elif self.kind == "label_smoothing":
            if not 0.0 <= self.smoothing < 1.0:
                raise ValueError("smoothing must be in [0, 1)")
        elif self.kind == "confidence_penalty":
            if self.beta < 0.0:
                raise ValueError("penalty weight must be >= 0")
        else:
            raise ValueError(f"unknown objective kind: {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "spec":
            return self.spec.name
        if self.kind == "label_smoothing":
            return f"ls(s={self.smoothing:g})"
        return f"cp(b={self.beta:g})"


def objective_batch(obj: Objective, P, y) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample values and logit-gradients of a training objective."""
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if obj.kind == "spec":
        return loss_batch(obj.spec, P, y)

    n, k = P.shape
    rows = np.arange(n)
    pc = clamp_probs(P)
    onehot = np.zeros((n, k))
    onehot[rows, y] = 1.0
    if obj.kind == "label_smoothing":
        q = (1.0 - obj.smoothing) * onehot + obj.smoothing / k
        values = -np.sum(q * np.log(pc), axis=1)
        grads = P - q
        return values, grads
    # confidence penalty
    logp = np.log(pc)
    entropy = -np.sum(pc * logp, axis=1)
    values = -logp[rows, y] - obj.beta * entropy
    grads = (P - onehot) + obj.beta * P * (logp + entropy[:, None])
    return values, grads
