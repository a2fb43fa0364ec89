"""Evaluation metrics (membership advantage, P1) and the closed-form /
delta-method machinery used by the theory checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import clamp_probs, std_normal_cdf, std_normal_icdf


def membership_advantage(pred, truth) -> float:
    """TPR - FPR of a binary membership predictor."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("pred/truth length mismatch")
    members = truth == 1
    if not members.any() or members.all():
        raise ValueError("truth must contain both members and non-members")
    tpr = float(np.mean(pred[members] == 1))
    fpr = float(np.mean(pred[~members] == 1))
    return tpr - fpr


def tpr_fpr(pred, truth) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    members = truth == 1
    return float(np.mean(pred[members] == 1)), float(np.mean(pred[~members] == 1))


def p1_score(acc: float, adv: float) -> float:
    """Harmonic-mean combination of utility (test accuracy) and privacy (1 - Adv)."""
    if not 0.0 <= acc <= 1.0 or not 0.0 <= adv <= 1.0:
        raise ValueError("acc and adv must be in [0, 1]")
    denom = acc + (1.0 - adv)
    if denom == 0.0:
        return 0.0
    return 2.0 * acc * (1.0 - adv) / denom


@dataclass(frozen=True)
class GaussianLossModel:
    """Member losses ~ N(mu_s, sigma_s^2), non-member losses ~ N(mu_d, sigma_d^2)."""

    mu_s: float
    sigma_s: float
    mu_d: float
    sigma_d: float

    def __post_init__(self):
        if self.sigma_s <= 0 or self.sigma_d <= 0:
            raise ValueError("sigmas must be > 0")


def gaussian_advantage(model: GaussianLossModel, tau: float) -> float:
    """Advantage of the threshold-on-loss attack under the Gaussian model:
    Phi((tau - mu_s)/sigma_s) - Phi((tau - mu_d)/sigma_d)."""
    return float(
        std_normal_cdf((tau - model.mu_s) / model.sigma_s)
        - std_normal_cdf((tau - model.mu_d) / model.sigma_d)
    )


def gaussian_advantage_at_fpr(model: GaussianLossModel, alpha_fpr: float) -> float:
    """Advantage when tau is pinned to a fixed false positive rate:
    Phi((Phi^-1(a) sigma_d + mu_d - mu_s) / sigma_s) - a."""
    if not 0.0 < alpha_fpr < 1.0:
        raise ValueError("alpha_fpr must be in (0, 1)")
    num = std_normal_icdf(alpha_fpr) * model.sigma_d + model.mu_d - model.mu_s
    return float(std_normal_cdf(num / model.sigma_s) - alpha_fpr)


def _entropy_jacobian(mu: np.ndarray) -> np.ndarray:
    return -(1.0 + np.log(clamp_probs(mu)))


def _fd_jacobian(f, mu: np.ndarray, step: float = 1e-6) -> np.ndarray:
    jac = np.empty_like(mu)
    for i in range(mu.size):
        hi = mu.copy()
        lo = mu.copy()
        hi[i] += step
        lo[i] -= step
        jac[i] = (f(hi) - f(lo)) / (2.0 * step)
    return jac


def delta_variance(metric, mu, sigma, y: int | None = None) -> float:
    """First-order variance propagation J(mu)^T Sigma J(mu).

    `metric` is "entropy", "confidence" (needs y), or any callable f(P) -> real
    (finite-difference Jacobian fallback).
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (mu.size, mu.size):
        raise ValueError("Sigma must be K x K")
    if not np.allclose(sigma, sigma.T, atol=1e-12):
        raise ValueError("Sigma must be symmetric")
    if np.min(np.linalg.eigvalsh(sigma)) < -1e-9:
        raise ValueError("Sigma must be positive semidefinite")

    if metric == "entropy":
        jac = _entropy_jacobian(mu)
    elif metric == "confidence":
        if y is None:
            raise ValueError("confidence metric needs the true class index")
        jac = np.zeros_like(mu)
        jac[y] = 1.0
    elif callable(metric):
        jac = _fd_jacobian(metric, mu)
    else:
        raise ValueError(f"unknown metric for delta_variance: {metric!r}")
    return float(jac @ sigma @ jac)


def dirichlet_moments(alphas) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of Dirichlet(alphas)."""
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(alphas <= 0):
        raise ValueError("Dirichlet parameters must be > 0")
    a0 = float(alphas.sum())
    mu = alphas / a0
    cov = -np.outer(mu, mu) / (a0 + 1.0)
    np.fill_diagonal(cov, mu * (1.0 - mu) / (a0 + 1.0))
    return mu, cov
