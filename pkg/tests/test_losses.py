import numpy as np
import pytest
from helpers import fd_grad_logits, grad_rel_err, logits_for_probs

from cclkit.kernels import loss_batch_numpy
from cclkit.losses import (
    ConcaveTerm,
    ConvexBase,
    LossSpec,
    Objective,
    acceleration_coefficient,
    baseline_loss,
    confidence_penalty_value,
    grad_bound_check,
    label_smoothing_value,
    loss_batch,
    loss_grad_logits,
    loss_value,
    objective_batch,
)
from cclkit.numerics import rng_stream, softmax

CE = ConvexBase("ce")
FOCAL = ConvexBase("focal", 2.0)
CEL = ConcaveTerm("cel")
CQL = ConcaveTerm("cql")


def all_mixture_specs(alphas=(0.0, 0.25, 0.5, 0.75, 1.0)):
    specs = [LossSpec(CE), LossSpec(FOCAL)]
    for conc in (CEL, CQL):
        specs.extend(LossSpec(CE, conc, a) for a in alphas)
    return specs


class TestLossValue:
    def test_alpha_one_is_base(self):
        p = np.array([0.6, 0.3, 0.1])
        for conc in (CEL, CQL):
            spec = LossSpec(CE, conc, alpha=1.0, scale=2.0)
            assert loss_value(spec, p, 0) == pytest.approx(2.0 * -np.log(0.6), abs=1e-12)

    def test_cql_at_one(self):
        assert CQL.value(1.0) == pytest.approx(-1.5, abs=1e-15)

    def test_mixture_frozen(self):
        # 0.5 * ln 2 - 0.5 * 0.625, 30-digit oracle
        spec = LossSpec(CE, CQL, alpha=0.5, scale=1.0)
        p = np.array([0.5, 0.25, 0.25])
        assert loss_value(spec, p, 0) == pytest.approx(0.034073590279972655, abs=1e-12)

    def test_bad_class_index(self):
        with pytest.raises(ValueError):
            loss_value(LossSpec(CE), np.array([0.5, 0.5]), 2)

    def test_no_concave_degenerates(self):
        spec = LossSpec(CE, None, alpha=0.3)
        p = np.array([0.5, 0.5])
        assert loss_value(spec, p, 0) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            LossSpec(CE, CQL, alpha=1.5)
        with pytest.raises(ValueError):
            LossSpec(CE, scale=0.0)
        with pytest.raises(ValueError):
            ConvexBase("hinge")
        with pytest.raises(ValueError):
            ConcaveTerm("cubic")

    def test_config_roundtrip(self):
        spec = LossSpec(FOCAL, CEL, alpha=0.25, scale=0.01)
        again = LossSpec.from_config(spec.to_config())
        assert again == spec


class TestGradients:
    def test_ce_hand_value(self):
        z = logits_for_probs([0.7, 0.2, 0.1])
        grad = loss_grad_logits(LossSpec(CE), z, 0)
        np.testing.assert_allclose(grad, [-0.3, 0.2, 0.1], atol=1e-9)
        fd = fd_grad_logits(LossSpec(CE), z, 0)
        np.testing.assert_allclose(grad, fd, atol=1e-6)

    def test_cql_term_alone_sign_pattern(self):
        # pure concave term: true class p(1-p) * conc' = 0.7*0.3*(-1.7),
        # off class -p_j p_y conc' = +0.238 at p_j = 0.2
        spec = LossSpec(CE, CQL, alpha=0.0)
        z = logits_for_probs([0.7, 0.2, 0.1])
        grad = loss_grad_logits(spec, z, 0)
        assert grad[0] == pytest.approx(-0.357, abs=1e-9)
        assert grad[1] == pytest.approx(0.238, abs=1e-9)
        np.testing.assert_allclose(grad, fd_grad_logits(spec, z, 0), atol=1e-6)

    def test_gradient_vanishes_at_optimum(self):
        z = np.array([30.0, 0.0, 0.0])
        for spec in all_mixture_specs((0.25, 0.75)):
            assert np.max(np.abs(loss_grad_logits(spec, z, 0))) < 1e-10

    def test_finite_difference_agreement(self):
        rng = rng_stream(7, 0)
        for spec in all_mixture_specs():
            for _ in range(40):
                z = rng.normal(0.0, 3.0, size=5)
                y = int(rng.integers(5))
                grad = loss_grad_logits(spec, z, y)
                assert grad_rel_err(grad, fd_grad_logits(spec, z, y)) < 1e-5

    def test_scaled_focal_grad(self):
        spec = LossSpec(FOCAL, CEL, alpha=0.5, scale=0.01)
        z = np.array([1.2, -0.7, 0.3, 0.0])
        np.testing.assert_allclose(
            loss_grad_logits(spec, z, 2), fd_grad_logits(spec, z, 2), atol=1e-8
        )


class TestBatchKernel:
    def test_matches_scalar_path(self):
        rng = rng_stream(3, 0)
        for spec in all_mixture_specs((0.0, 0.5, 1.0)):
            z = rng.normal(0.0, 2.0, size=(50, 4))
            y = rng.integers(0, 4, size=50)
            p = softmax(z, axis=1)
            values, grads = loss_batch(spec, p, y)
            for i in range(50):
                assert values[i] == pytest.approx(loss_value(spec, p[i], y[i]), rel=1e-12)
                np.testing.assert_allclose(
                    grads[i], loss_grad_logits(spec, z[i], int(y[i])), atol=1e-12
                )

    def test_numba_and_numpy_paths_agree(self):
        from cclkit import kernels

        if kernels.loss_batch_numba is None:
            pytest.skip("numba backend not active")
        rng = rng_stream(5, 0)
        p = softmax(rng.normal(0.0, 2.0, size=(200, 6)), axis=1)
        y = rng.integers(0, 6, size=200)
        for base, conc, alpha in [(0, 0, 1.0), (1, 0, 1.0), (0, 1, 0.4), (0, 2, 0.7)]:
            v1, g1 = kernels.loss_batch_numba(p, y, base, 2.0, conc, alpha, 0.5)
            v2, g2 = loss_batch_numpy(p, y, base, 2.0, conc, alpha, 0.5)
            np.testing.assert_allclose(v1, v2, atol=1e-13)
            np.testing.assert_allclose(g1, g2, atol=1e-13)


class TestSandwich:
    def test_known_coefficient(self):
        spec = LossSpec(CE, CQL, alpha=0.5)
        assert acceleration_coefficient(spec, 0.7) == pytest.approx(1.095, abs=1e-12)
        z = logits_for_probs([0.7, 0.2, 0.1])
        assert grad_bound_check(spec, z, 0)

    def test_alpha_one_identity(self):
        spec = LossSpec(CE, CQL, alpha=1.0)
        assert acceleration_coefficient(spec, 0.3) == pytest.approx(1.0, abs=1e-15)
        assert grad_bound_check(spec, np.array([1.0, -1.0]), 0)

    def test_requires_concave(self):
        with pytest.raises(ValueError):
            grad_bound_check(LossSpec(CE), np.array([0.0, 0.0]), 0)
        with pytest.raises(ValueError):
            acceleration_coefficient(LossSpec(CE), 0.5)

    def test_randomized_always_true(self):
        rng = rng_stream(11, 0)
        for conc in (CEL, CQL):
            for _ in range(500):
                alpha = float(rng.uniform(0.0, 1.0))
                spec = LossSpec(CE, conc, alpha)
                z = rng.normal(0.0, 4.0, size=int(rng.integers(2, 8)))
                y = int(rng.integers(z.size))
                assert grad_bound_check(spec, z, y)

    def test_gradient_is_scaled_ce_gradient(self):
        rng = rng_stream(13, 0)
        for _ in range(200):
            alpha = float(rng.uniform(0.0, 1.0))
            spec = LossSpec(CE, CEL, alpha)
            z = rng.normal(0.0, 3.0, size=5)
            y = int(rng.integers(5))
            p = softmax(z)
            ce_grad = p.copy()
            ce_grad[y] -= 1.0
            c = acceleration_coefficient(spec, p[y])
            np.testing.assert_allclose(loss_grad_logits(spec, z, y), c * ce_grad, atol=1e-12)
            a_const = spec.concave.a_const
            assert alpha - 1e-12 <= c <= alpha + a_const * (1 - alpha) + 1e-12

    def test_acceleration_monotone_in_confidence(self):
        grid = np.linspace(0.001, 1.0, 500)
        for conc in (CEL, CQL):
            for alpha in (0.0, 0.3, 0.7):
                c = acceleration_coefficient(LossSpec(CE, conc, alpha), grid)
                assert np.all(np.diff(c) >= -1e-12)


class TestCurvatureCertificates:
    def test_concave_terms_negative_second_difference(self):
        grid = np.linspace(0.01, 0.99, 99)
        h = 1e-4
        for term in (CEL, CQL):
            d2 = (term.value(grid + h) - 2 * term.value(grid) + term.value(grid - h)) / h**2
            assert np.all(d2 < 0)
            assert np.all(term.deriv(grid) < 0)

    def test_convex_bases_positive_second_difference(self):
        grid = np.linspace(0.01, 0.999, 200)
        h = 1e-4
        for base in (CE, FOCAL):
            d2 = (base.value(grid + h) - 2 * base.value(grid) + base.value(grid - h)) / h**2
            assert np.all(d2 > 0)
            assert np.all(base.deriv(grid) < 0)


class TestExpectationBounds:
    def test_convex_lower_bound_monte_carlo(self):
        # E[-log p] >= eps + (eps^2 + sigma^2)/2 for Beta-distributed confidence
        rng = rng_stream(17, 0)
        for a, b in [(2.0, 5.0), (5.0, 2.0), (0.5, 0.5), (8.0, 1.0)]:
            p = np.clip(rng.beta(a, b, size=10**5), 1e-12, 1.0)
            lhs = np.mean(-np.log(p))
            rhs = np.mean(1.0 - p) + 0.5 * np.mean((1.0 - p) ** 2)
            assert lhs - rhs >= -1e-3

    def test_concave_tangent_bound_monte_carlo(self):
        rng = rng_stream(19, 0)
        for term in (CEL, CQL):
            a_const = term.a_const
            for a, b in [(2.0, 5.0), (5.0, 2.0), (1.0, 1.0), (8.0, 1.0)]:
                p = rng.beta(a, b, size=10**5)
                lhs = np.mean(term.value(p) - term.value(1.0))
                assert lhs - a_const * np.mean(1.0 - p) <= 1e-3


class TestBaselineLosses:
    def test_zero_smoothing_is_ce(self):
        p = np.array([0.6, 0.4])
        assert label_smoothing_value(p, 0, 0.0) == pytest.approx(-np.log(0.6), abs=1e-12)

    def test_zero_beta_is_ce(self):
        p = np.array([0.6, 0.4])
        assert confidence_penalty_value(p, 0, 0.0) == pytest.approx(-np.log(0.6), abs=1e-12)

    def test_label_smoothing_frozen(self):
        # 0.9*(-ln 0.7) + 0.1*(-ln 0.3), 30-digit oracle
        p = np.array([0.7, 0.3])
        assert label_smoothing_value(p, 0, 0.2) == pytest.approx(0.441404729977452740, abs=1e-12)

    def test_param_range_errors(self):
        p = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            label_smoothing_value(p, 0, 1.0)
        with pytest.raises(ValueError):
            confidence_penalty_value(p, 0, -0.1)
        with pytest.raises(ValueError):
            baseline_loss("mixup", {}, p, 0)

    def test_dispatcher(self):
        p = np.array([0.7, 0.3])
        assert baseline_loss("label_smoothing", {"smoothing": 0.2}, p, 0) == pytest.approx(
            0.441404729977452740, abs=1e-12
        )
        assert baseline_loss("confidence_penalty", {"beta": 0.0}, p, 0) == pytest.approx(
            -np.log(0.7), abs=1e-12
        )

    def test_objective_batch_grads_match_finite_differences(self):
        rng = rng_stream(23, 0)
        objs = [
            Objective("label_smoothing", smoothing=0.2),
            Objective("confidence_penalty", beta=0.7),
        ]
        for obj in objs:
            for _ in range(30):
                z = rng.normal(0.0, 2.0, size=4)
                y = int(rng.integers(4))
                _, grads = objective_batch(obj, softmax(z)[None, :], np.array([y]))
                h = 1e-6
                fd = np.zeros(4)
                for j in range(4):
                    zp, zm = z.copy(), z.copy()
                    zp[j] += h
                    zm[j] -= h
                    vp, _ = objective_batch(obj, softmax(zp)[None, :], np.array([y]))
                    vm, _ = objective_batch(obj, softmax(zm)[None, :], np.array([y]))
                    fd[j] = (vp[0] - vm[0]) / (2 * h)
                np.testing.assert_allclose(grads[0], fd, atol=1e-6)
