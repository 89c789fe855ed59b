"""Monte Carlo prediction, sound certification, and the plug-in radius."""

import math

import numpy as np
import pytest

from smoothcert.classifiers import (TinyMLP, affine_softmax_classifier,
                                    constant_classifier,
                                    hard_halfspace_classifier, mlp_classifier,
                                    nested_ball_classifier,
                                    probit_halfspace_classifier)
from smoothcert.smoothing import (ABSTAIN, CertificationOutcome,
                                  GaussianCertConfig, NoiseBatch, certify_l1,
                                  certify_l2, draw_noise, proxy_radius,
                                  proxy_radius_l1, rng_for_input, smooth_predict,
                                  vote_counts)
from smoothcert.stats import P_CLAMP, binom_lower_confidence, std_normal_quantile


class TestConfigAndOutcome:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            GaussianCertConfig(sigma=0.0)
        with pytest.raises(ValueError):
            GaussianCertConfig(sigma=0.5, n0=0)
        with pytest.raises(ValueError):
            GaussianCertConfig(sigma=0.5, n0=100, n_cert=50)
        with pytest.raises(ValueError):
            GaussianCertConfig(sigma=0.5, alpha_fail=1.0)

    def test_outcome_invariants(self):
        with pytest.raises(ValueError):
            CertificationOutcome(ABSTAIN, 0.5, 0.4, 0.25, "l2", 100)
        out = CertificationOutcome(ABSTAIN, 0.0, 0.4, 0.25, "l2", 100)
        assert out.abstained and out.radius == 0.0

    def test_noise_batch_validation(self):
        with pytest.raises(ValueError):
            NoiseBatch("poisson", np.zeros((3, 2)))
        with pytest.raises(ValueError):
            NoiseBatch("gaussian", np.zeros((0, 2)))


class TestSeeding:
    def test_counter_based_streams_are_reproducible(self):
        a = rng_for_input(7, 3).standard_normal(5)
        b = rng_for_input(7, 3).standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ_across_inputs_and_channels(self):
        a = rng_for_input(7, 3).standard_normal(5)
        b = rng_for_input(7, 4).standard_normal(5)
        c = rng_for_input(7, 3, stream=1).standard_normal(5)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSmoothPredict:
    def test_unanimous_constant(self):
        c = constant_classifier([1.0, 0.0], dim=2)
        cfg = GaussianCertConfig(sigma=0.5, n0=100, n_cert=100, seed=0)
        assert smooth_predict(c, [0.0, 0.0], cfg) == 0

    def test_exact_tie_abstains(self):
        # choose the halfspace offset so the realized n0 votes split 50/50
        sigma, n0, seed = 0.5, 100, 11
        x = np.zeros(2)
        w = np.array([1.0, 0.0])
        draws = rng_for_input(seed, 0).standard_normal((n0, 2))
        proj = np.sort((x[None, :] + sigma * draws) @ w)
        b = 0.5 * (proj[n0 // 2 - 1] + proj[n0 // 2])
        c = hard_halfspace_classifier(w, b)
        counts = vote_counts(c, x, sigma, n0, rng_for_input(seed, 0))
        assert counts[0] == counts[1] == n0 // 2
        cfg = GaussianCertConfig(sigma=sigma, n0=n0, n_cert=n0,
                                 alpha_fail=0.001, seed=seed)
        assert smooth_predict(c, x, cfg) == ABSTAIN

    def test_halfspace_three_sigma_margin(self):
        sigma = 0.4
        c = hard_halfspace_classifier([1.0, 0.0], 0.0)
        cfg = GaussianCertConfig(sigma=sigma, n0=100, n_cert=100,
                                 alpha_fail=0.001, seed=5)
        # margin 3*sigma: votes ~ Bin(100, Phi(3)), overwhelmingly class 1
        assert smooth_predict(c, [3.0 * sigma, 0.0], cfg) == 1


class TestCertifyL2:
    def test_constant_classifier_exact_radius(self):
        # unanimous votes: p_lower = alpha ** (1/n_cert) exactly
        c = constant_classifier([0.0, 1.0], dim=2)
        cfg = GaussianCertConfig(sigma=0.5, n0=100, n_cert=1000,
                                 alpha_fail=0.01, seed=2)
        out = certify_l2(c, [0.3, -0.4], cfg)
        p = 0.01 ** (1.0 / 1000)
        assert out.prediction == 1
        assert out.p_lower == pytest.approx(p, abs=1e-12)
        assert out.radius == pytest.approx(
            0.5 * std_normal_quantile(min(p, 1.0 - P_CLAMP)), abs=1e-12)
        assert out.samples_used == 1100

    def test_boundary_abstains(self):
        # at the decision boundary p_lower < 0.5 essentially always
        c = hard_halfspace_classifier([1.0, 0.0], 0.0)
        cfg = GaussianCertConfig(sigma=0.5, n0=100, n_cert=5000,
                                 alpha_fail=0.001, seed=3)
        out = certify_l2(c, [0.0, 0.0], cfg)
        assert out.prediction == ABSTAIN
        assert out.radius == 0.0

    def test_soundness_on_margin_one(self):
        # certified radius must not exceed the true robust radius (the margin)
        c = hard_halfspace_classifier([1.0, 0.0], 0.0)
        cfg = GaussianCertConfig(sigma=0.25, n0=100, n_cert=20_000,
                                 alpha_fail=0.001)
        for seed in range(20):
            out = certify_l2(c, [1.0, 0.0],
                             GaussianCertConfig(sigma=0.25, n0=100,
                                                n_cert=20_000,
                                                alpha_fail=0.001, seed=seed))
            assert out.radius <= 1.0

    def test_bit_reproducible(self):
        c = probit_halfspace_classifier([1.0, 0.0], 0.0, 0.5)
        cfg = GaussianCertConfig(sigma=0.3, n0=100, n_cert=2000, seed=17)
        a = certify_l2(c, [0.7, 0.1], cfg, input_index=4)
        b = certify_l2(c, [0.7, 0.1], cfg, input_index=4)
        assert a == b

    def test_dimension_mismatch(self):
        c = constant_classifier([1.0], dim=3)
        cfg = GaussianCertConfig(sigma=0.5, n0=10, n_cert=10)
        with pytest.raises(ValueError):
            certify_l2(c, [1.0, 2.0], cfg)


class TestCertifyL1:
    def test_unanimous_radius_formula(self):
        c = constant_classifier([0.0, 1.0], dim=2)
        lam = 0.8
        cfg = GaussianCertConfig(sigma=1.0, n0=50, n_cert=500,
                                 alpha_fail=0.01, seed=4)
        out = certify_l1(c, [0.0, 0.0], lam, cfg)
        p = 0.01 ** (1.0 / 500)
        assert out.norm == "l1"
        assert out.radius == pytest.approx(lam * (2 * min(p, 1 - P_CLAMP) - 1),
                                           abs=1e-12)

    def test_boundary_abstains(self):
        # true pA = 1/2 at the threshold, so p_lower <= 1/2 and we abstain
        c = hard_halfspace_classifier([1.0], 0.0)
        cfg = GaussianCertConfig(sigma=1.0, n0=100, n_cert=2000,
                                 alpha_fail=0.001, seed=6)
        out = certify_l1(c, [0.0], 1.0, cfg)
        assert out.prediction == ABSTAIN and out.radius == 0.0

    def test_axis_threshold_matches_uniform_cdf(self):
        # classifier 1{x1 > 0} at x1 = 0.5 under lam = 1:
        # true pA = (0.5 + 1) / 2 = 0.75, radius about 2*pA - 1 = 0.5
        c = hard_halfspace_classifier([1.0, 0.0], 0.0)
        cfg = GaussianCertConfig(sigma=1.0, n0=100, n_cert=50_000,
                                 alpha_fail=0.001, seed=8)
        out = certify_l1(c, [0.5, 0.0], 1.0, cfg)
        assert out.prediction == 1
        assert out.radius == pytest.approx(0.5, abs=0.02)
        assert out.radius < 0.5  # confidence slack keeps it below the truth

    def test_nonpositive_lambda(self):
        c = constant_classifier([1.0, 0.0], dim=1)
        cfg = GaussianCertConfig(sigma=1.0, n0=10, n_cert=10)
        with pytest.raises(ValueError):
            certify_l1(c, [0.0], 0.0, cfg)

    def test_radius_nonnegative_and_zero_iff_not_confident(self):
        rng = np.random.default_rng(30)
        cfg = GaussianCertConfig(sigma=1.0, n0=50, n_cert=400,
                                 alpha_fail=0.01, seed=9)
        c = hard_halfspace_classifier([1.0], 0.0)
        for i in range(25):
            x = rng.uniform(-1.5, 1.5, size=1)
            out = certify_l1(c, x, 1.0, cfg, input_index=i)
            assert out.radius >= 0.0
            if out.p_lower <= 0.5:
                assert out.radius == 0.0 and out.prediction == ABSTAIN
            else:
                assert out.radius > 0.0


class TestProxyRadius:
    def test_two_class_quantile_gap(self):
        c = constant_classifier([0.9, 0.1], dim=2)
        noise = draw_noise(np.random.default_rng(0), 50, 2)
        r, top = proxy_radius(c, [0.0, 0.0], 1.0, noise)
        assert top == 0
        assert r == pytest.approx(std_normal_quantile(0.9), abs=1e-12)
        assert r == pytest.approx(1.28155, abs=1e-5)

    def test_zero_gap(self):
        c = constant_classifier([0.5, 0.5], dim=2)
        noise = draw_noise(np.random.default_rng(0), 50, 2)
        r, _ = proxy_radius(c, [0.0, 0.0], 1.0, noise)
        assert r == 0.0

    def test_probit_closed_form(self):
        # R(sigma) = sigma * m / sqrt(s^2 + sigma^2) with m = 1, s = 0.5
        c = probit_halfspace_classifier([1.0, 0.0], 0.0, 0.5)
        noise = draw_noise(np.random.default_rng(42), 100_000, 2)
        r, top = proxy_radius(c, [1.0, 0.0], 1.0, noise)
        assert top == 1
        assert r == pytest.approx(1.0 / math.sqrt(1.25), rel=0.01)

    def test_continuous_in_sigma_with_fixed_noise(self):
        builtins = [
            constant_classifier([0.7, 0.3], dim=2),
            affine_softmax_classifier([[1.0, 0.0], [-0.5, 0.8]], [0.0, 0.1]),
            probit_halfspace_classifier([1.0, 0.0], 0.0, 0.5),
            hard_halfspace_classifier([1.0, 0.0], 0.0),
            nested_ball_classifier(1.0, dim=2),
            mlp_classifier(TinyMLP(2, 8, 2, rng=np.random.default_rng(1))),
        ]
        noise = draw_noise(np.random.default_rng(5), 2000, 2)
        x = np.array([0.4, -0.2])
        for c in builtins:
            for sigma in np.linspace(0.05, 2.0, 40):
                r0, _ = proxy_radius(c, x, float(sigma), noise)
                r1, _ = proxy_radius(c, x, float(sigma) + 1e-6, noise)
                assert abs(r1 - r0) <= 1e-3

    def test_l1_proxy_gap(self):
        c = constant_classifier([0.8, 0.2], dim=2)
        noise = draw_noise(np.random.default_rng(0), 50, 2, kind="uniform")
        r, top = proxy_radius_l1(c, [0.0, 0.0], 0.5, noise)
        assert top == 0
        assert r == pytest.approx(0.5 * 0.6, abs=1e-12)

    def test_wrong_noise_kind_rejected(self):
        c = constant_classifier([0.8, 0.2], dim=2)
        g = draw_noise(np.random.default_rng(0), 10, 2, kind="gaussian")
        u = draw_noise(np.random.default_rng(0), 10, 2, kind="uniform")
        with pytest.raises(ValueError):
            proxy_radius(c, [0.0, 0.0], 0.5, u)
        with pytest.raises(ValueError):
            proxy_radius_l1(c, [0.0, 0.0], 0.5, g)
