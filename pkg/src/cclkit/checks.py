"""Executable Monte-Carlo verification of the theory: the loss-variance bounds,
the gradient sandwich, the Gaussian attack-advantage forms, and the delta-method
variance machinery. Each check returns a machine-readable verdict."""

from __future__ import annotations

import numpy as np

from .losses import ConcaveTerm, ConvexBase, LossSpec, acceleration_coefficient
from .numerics import clamp_probs, rng_stream, softmax, std_normal_icdf
from .theory import (
    GaussianLossModel,
    delta_variance,
    dirichlet_moments,
    gaussian_advantage,
    gaussian_advantage_at_fpr,
)

DEFAULT_TERMS = (ConcaveTerm("cel"), ConcaveTerm("cql"))


def _sample_beta_params(rng, n_dists):
    a = rng.uniform(0.3, 8.0, size=n_dists)
    b = rng.uniform(0.3, 8.0, size=n_dists)
    return a, b


def check_convex_lower_bound(rng, samples: int, n_dists: int = 50) -> dict:
    """Cross-entropy expectation dominates eps + (eps^2 + sigma^2)/2 for
    confidences drawn from random Beta distributions."""
    a, b = _sample_beta_params(rng, n_dists)
    worst = np.inf
    for ai, bi in zip(a, b):
        p = clamp_probs(rng.beta(ai, bi, size=samples))
        lhs = float(np.mean(-np.log(p)))
        eps = float(np.mean(1.0 - p))
        second = float(np.mean((1.0 - p) ** 2))
        slack = lhs - (eps + 0.5 * second)
        worst = min(worst, slack)
    return {
        "name": "convex_loss_lower_bound",
        "passed": bool(worst >= -1e-3),
        "details": {"min_slack": worst, "distributions": n_dists, "samples": samples},
    }


def check_concave_tangent_bound(rng, samples: int, n_dists: int = 50, terms=DEFAULT_TERMS) -> dict:
    """Shifted concave-term expectation stays below A * eps (tangent line at 1)."""
    a, b = _sample_beta_params(rng, n_dists)
    worst = -np.inf
    for term in terms:
        a_const = -float(term.deriv(1.0))
        for ai, bi in zip(a, b):
            p = rng.beta(ai, bi, size=samples)
            lhs = float(np.mean(term.value(p) - term.value(1.0)))
            eps = float(np.mean(1.0 - p))
            worst = max(worst, lhs - a_const * eps)
    return {
        "name": "concave_loss_tangent_bound",
        "passed": bool(worst <= 1e-3),
        "details": {"max_excess": worst, "distributions": n_dists, "samples": samples},
    }


def check_gradient_sandwich(rng, samples: int, terms=DEFAULT_TERMS, tol: float = 1e-9) -> dict:
    """c(p_y) in [alpha, alpha + A(1-alpha)] and componentwise sign agreement
    with the cross-entropy gradient, over random logits/labels/alphas."""
    violations = 0
    n = int(samples)
    for term in terms:
        k = int(rng.integers(3, 8))
        z = rng.normal(0.0, 3.0, size=(n, k))
        y = rng.integers(0, k, size=n)
        alpha = rng.uniform(0.0, 1.0, size=n)
        p = softmax(z, axis=1)
        py = clamp_probs(p[np.arange(n), y])
        c = alpha - (1.0 - alpha) * py * term.deriv(py)
        a_const = -float(term.deriv(1.0))
        hi = alpha + a_const * (1.0 - alpha)
        bad_range = (c < alpha - tol) | (c > hi + tol)
        # mixture gradient = c * ce gradient componentwise, so sign agreement
        # fails exactly when c < 0
        bad_sign = c < -tol
        violations += int(np.sum(bad_range | bad_sign))
    return {
        "name": "gradient_sandwich",
        "passed": violations == 0,
        "details": {"violations": violations, "inputs_per_term": n},
    }


def check_gaussian_advantage(rng, samples: int, n_models: int = 50, tol: float = 3e-3) -> dict:
    """Closed-form advantage vs empirical thresholding of sampled losses."""
    worst = 0.0
    for _ in range(n_models):
        model = GaussianLossModel(
            mu_s=float(rng.uniform(-1.0, 1.0)),
            sigma_s=float(rng.uniform(0.2, 2.0)),
            mu_d=float(rng.uniform(-1.0, 2.0)),
            sigma_d=float(rng.uniform(0.2, 2.0)),
        )
        tau = float(rng.uniform(-2.0, 3.0))
        closed = gaussian_advantage(model, tau)
        ls = rng.normal(model.mu_s, model.sigma_s, size=samples)
        ld = rng.normal(model.mu_d, model.sigma_d, size=samples)
        emp = float(np.mean(ls <= tau) - np.mean(ld <= tau))
        worst = max(worst, abs(closed - emp))
    return {
        "name": "gaussian_advantage_closed_form",
        "passed": bool(worst <= tol),
        "details": {"max_abs_diff": worst, "models": n_models, "samples": samples},
    }


def check_advantage_sigma_monotone(rng, n_settings: int = 10, grid: int = 20) -> dict:
    """At fixed FPR, advantage strictly decreases in sigma_s whenever the
    numerator Phi^-1(a) sigma_d + mu_d - mu_s is positive."""
    failures = 0
    tested = 0
    for _ in range(n_settings):
        alpha = float(rng.uniform(0.01, 0.3))
        mu_d = float(rng.uniform(0.5, 2.0))
        mu_s = float(rng.uniform(-1.0, mu_d))
        sigma_d = float(rng.uniform(0.2, 2.0))
        if std_normal_icdf(alpha) * sigma_d + mu_d - mu_s <= 0:
            continue
        sigmas = np.linspace(0.2, 3.0, grid)
        advs = [
            gaussian_advantage_at_fpr(GaussianLossModel(mu_s, s, mu_d, sigma_d), alpha)
            for s in sigmas
        ]
        tested += 1
        if not all(b < a for a, b in zip(advs[:-1], advs[1:])):
            failures += 1
    return {
        "name": "advantage_decreases_in_sigma",
        "passed": failures == 0 and tested > 0,
        "details": {"settings_tested": tested, "failures": failures, "grid": grid},
    }


def check_delta_method_entropy(rng, samples: int, rel_tol: float = 0.10) -> dict:
    """Delta-method variance of the entropy under a skewed Dirichlet vs
    Monte-Carlo. Evaluated away from the uniform mean: at a uniform mean the
    entropy gradient is parallel to the all-ones vector, which the simplex
    covariance annihilates, so the first-order term degenerates to zero."""
    alphas = np.array([8.0, 4.0, 2.0])
    mu, cov = dirichlet_moments(alphas)
    approx = delta_variance("entropy", mu, cov)
    draws = rng.dirichlet(alphas, size=samples)
    pc = clamp_probs(draws)
    ent = -np.sum(pc * np.log(pc), axis=1)
    mc = float(np.var(ent))
    rel = abs(approx - mc) / mc
    return {
        "name": "delta_method_entropy_variance",
        "passed": bool(rel <= rel_tol),
        "details": {"delta": approx, "monte_carlo": mc, "rel_err": rel, "samples": samples},
    }


def check_dirichlet_variance_ordering(rng, n_pairs: int = 20) -> dict:
    """Equal-mean Dirichlet pairs with larger concentration give strictly
    smaller delta-method variance for entropy and confidence."""
    failures = 0
    for _ in range(n_pairs):
        k = int(rng.integers(3, 6))
        mean = rng.dirichlet(np.ones(k) * 2.0)
        mean = np.clip(mean, 0.02, None)
        mean /= mean.sum()
        a0 = float(rng.uniform(5.0, 20.0))
        b0 = float(rng.uniform(1.0, a0 - 1.0))
        _, cov_a = dirichlet_moments(mean * a0)
        _, cov_b = dirichlet_moments(mean * b0)
        for metric, y in (("entropy", None), ("confidence", 0)):
            va = delta_variance(metric, mean, cov_a, y=y)
            vb = delta_variance(metric, mean, cov_b, y=y)
            if not va < vb:
                failures += 1
    return {
        "name": "dirichlet_variance_ordering",
        "passed": failures == 0,
        "details": {"pairs": n_pairs, "failures": failures},
    }


def run_theory_checks(seed: int, samples: int, terms=DEFAULT_TERMS) -> dict:
    """All checks with one RNG stream; `samples` is the Monte-Carlo size."""
    if samples < 10**5:
        raise ValueError("theory checks need at least 1e5 samples")
    rng = rng_stream(seed, 5)
    checks = [
        check_convex_lower_bound(rng, samples),
        check_concave_tangent_bound(rng, samples, terms=terms),
        check_gradient_sandwich(rng, min(samples, 10**5), terms=terms),
        check_gaussian_advantage(rng, samples),
        check_advantage_sigma_monotone(rng),
        check_delta_method_entropy(rng, samples),
        check_dirichlet_variance_ordering(rng),
    ]
    return {
        "seed": seed,
        "samples": samples,
        "all_passed": all(c["passed"] for c in checks),
        "checks": checks,
    }
