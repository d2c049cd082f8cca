"""Mixture densities, scores, posterior quantities and surface certificates."""

import math

import mpmath as mp
import numpy as np
import pytest

from guidance_lab.mixture import (
    GaussianMixture,
    classify_component,
    finite_diff_score,
    log_density_t,
    posterior_mean_x0,
    posterior_weights,
    project_onto_hull,
    score_conditional,
    score_unconditional,
    surface_certificate,
)

PAIR_1D = GaussianMixture(dim=1, means=[[-1.0], [1.0]], weights=[0.5, 0.5])
SQUARE = GaussianMixture(
    dim=2, means=[[1, 1], [1, -1], [-1, 1], [-1, -1]], weights=[0.25] * 4
)


def random_cases(n, seed, max_dim=8, max_components=6, alpha_lo=0.02, alpha_hi=0.99):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        dim = int(rng.integers(1, max_dim + 1))
        n_comp = int(rng.integers(1, max_components + 1))
        means = rng.standard_normal((n_comp, dim))
        means *= (rng.uniform(0, 5, n_comp) / np.maximum(np.linalg.norm(means, axis=1), 1e-12))[:, None]
        weights = rng.dirichlet(np.ones(n_comp))
        gmm = GaussianMixture(dim=dim, means=means, weights=weights / weights.sum())
        x = rng.standard_normal(dim)
        x *= rng.uniform(0, 10) / max(np.linalg.norm(x), 1e-12)
        alpha_bar = float(rng.uniform(alpha_lo, alpha_hi))
        condition = int(rng.integers(0, n_comp))
        yield gmm, x, alpha_bar, condition


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            GaussianMixture(dim=1, means=[[0.0], [1.0]], weights=[0.5, 0.4])

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            GaussianMixture(dim=1, means=[[0.0], [1.0]], weights=[1.0, 0.0])

    def test_mean_shape_checked(self):
        with pytest.raises(ValueError, match="shape"):
            GaussianMixture(dim=3, means=[[0.0, 1.0]], weights=[1.0])

    def test_point_dimension_checked(self):
        with pytest.raises(ValueError, match="dimension"):
            log_density_t(PAIR_1D, np.zeros(2), 0.5)

    def test_component_index_checked(self):
        with pytest.raises(ValueError, match="component index"):
            score_conditional(PAIR_1D, np.zeros(1), 0.5, 2)

    def test_alpha_bar_range(self):
        with pytest.raises(ValueError, match="alpha_bar"):
            log_density_t(PAIR_1D, np.zeros(1), 0.0)
        with pytest.raises(ValueError, match="alpha_bar"):
            log_density_t(PAIR_1D, np.zeros(1), 1.2)


class TestLogDensity:
    def test_standard_normal_at_mode(self):
        g = GaussianMixture(dim=1, means=[[0.0]], weights=[1.0])
        assert log_density_t(g, np.array([0.0]), 1.0) == pytest.approx(
            -0.5 * math.log(2 * math.pi), abs=1e-12
        )

    def test_point_at_scaled_mean(self):
        # x equals sqrt(0.25) * (2, 0), so only the normalizer remains
        g = GaussianMixture(dim=2, means=[[2.0, 0.0]], weights=[1.0])
        assert log_density_t(g, np.array([1.0, 0.0]), 0.25) == pytest.approx(
            -math.log(2 * math.pi), abs=1e-12
        )

    def test_mixture_against_direct_summation(self):
        # extended-precision direct summation oracle
        mp.mp.dps = 40
        def npdf(x, m):
            return mp.exp(-((x - m) ** 2) / 2) / mp.sqrt(2 * mp.pi)
        expected = float(mp.log(mp.mpf("0.5") * npdf(mp.mpf("0.5"), 1) + mp.mpf("0.5") * npdf(mp.mpf("0.5"), -1)))
        value = log_density_t(PAIR_1D, np.array([0.5]), 1.0)
        assert value == pytest.approx(expected, abs=1e-14)
        assert value == pytest.approx(-1.4238240262463952, abs=1e-12)

    def test_large_point_stays_finite(self):
        value = log_density_t(PAIR_1D, np.array([1e4]), 0.5)
        assert math.isfinite(value)

    def test_batch_matches_single(self):
        xs = np.array([[0.5], [-0.3], [2.0]])
        batch = log_density_t(PAIR_1D, xs, 0.7)
        singles = [log_density_t(PAIR_1D, x, 0.7) for x in xs]
        np.testing.assert_allclose(batch, singles, atol=1e-15)


class TestScores:
    def test_zero_at_scaled_mean(self):
        g = GaussianMixture(dim=2, means=[[2.0, 0.0]], weights=[1.0])
        np.testing.assert_allclose(
            score_conditional(g, np.array([1.0, 0.0]), 0.25, 0), np.zeros(2), atol=0
        )

    def test_outward_probe_gives_minus_kw(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            dim = int(rng.integers(1, 6))
            mu = rng.standard_normal(dim)
            w = rng.standard_normal(dim)
            w /= np.linalg.norm(w)
            k = float(rng.uniform(0.01, 3.0))
            alpha_bar = float(rng.uniform(0.1, 1.0))
            g = GaussianMixture(dim=dim, means=[mu], weights=[1.0])
            x = math.sqrt(alpha_bar) * mu + k * w
            np.testing.assert_allclose(
                score_conditional(g, x, alpha_bar, 0), -k * w, atol=1e-12
            )

    def test_direct_formula_value(self):
        g = GaussianMixture(dim=2, means=[[1.0, 2.0]], weights=[1.0])
        np.testing.assert_allclose(
            score_conditional(g, np.zeros(2), 0.81, 0), [0.9, 1.8], atol=1e-15
        )

    def test_unconditional_symmetric_cancellation(self):
        np.testing.assert_allclose(
            score_unconditional(PAIR_1D, np.array([0.0]), 0.5), [0.0], atol=1e-15
        )

    def test_single_component_reduces_to_conditional(self):
        g = GaussianMixture(dim=3, means=[[1.0, -1.0, 0.5]], weights=[1.0])
        x = np.array([0.3, 0.1, -0.2])
        np.testing.assert_allclose(
            score_unconditional(g, x, 0.6), score_conditional(g, x, 0.6, 0), atol=0
        )

    def test_frozen_mixture_value(self):
        # logistic-gap oracle: -0.5 + tanh-like reweighting of the two means
        value = score_unconditional(PAIR_1D, np.array([0.5]), 1.0)
        np.testing.assert_allclose(value, [-0.037882842739990241], atol=1e-14)

    def test_translation_equivariance_at_full_signal(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            means = rng.standard_normal((3, 2))
            g = GaussianMixture(dim=2, means=means, weights=[1 / 3] * 3)
            v = rng.standard_normal(2)
            shifted = GaussianMixture(dim=2, means=means + v, weights=[1 / 3] * 3)
            x = rng.standard_normal(2)
            np.testing.assert_allclose(
                score_conditional(shifted, x + v, 1.0, 1),
                score_conditional(g, x, 1.0, 1),
                atol=1e-12,
            )


class TestPosteriorWeights:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(
            posterior_weights(PAIR_1D, np.array([0.0]), 1.0), [0.5, 0.5], atol=1e-15
        )

    def test_single_component(self):
        g = GaussianMixture(dim=1, means=[[2.0]], weights=[1.0])
        np.testing.assert_allclose(posterior_weights(g, np.array([5.0]), 0.5), [1.0])

    def test_frozen_logistic_value(self):
        # 1 / (1 + e^-1) for the favored component
        np.testing.assert_allclose(
            posterior_weights(PAIR_1D, np.array([0.5]), 1.0),
            [0.26894142136999512, 0.73105857863000488],
            atol=1e-14,
        )

    def test_probability_vector_over_random_draws(self):
        for gmm, x, alpha_bar, _ in random_cases(300, seed=3):
            resp = posterior_weights(gmm, x, alpha_bar)
            assert abs(resp.sum() - 1.0) <= 1e-12
            assert np.all(resp >= 0)

    def test_log_weight_shift_invariance(self):
        # responsibilities depend on weight ratios only
        x = np.array([0.7])
        base = posterior_weights(PAIR_1D, x, 0.5)
        logits = np.log(PAIR_1D.weights) + 123.456
        logits = logits + np.array(
            [log_density_t(PAIR_1D, x, 0.5, c) for c in range(2)]
        )
        shifted = np.exp(logits - logits.max())
        shifted /= shifted.sum()
        np.testing.assert_allclose(base, shifted, atol=1e-14)


class TestPosteriorMean:
    def test_consistency_at_mean(self):
        g = GaussianMixture(dim=2, means=[[1.5, -2.0]], weights=[1.0])
        mu = np.array([1.5, -2.0])
        for alpha_bar in (0.1, 0.5, 0.9):
            x = math.sqrt(alpha_bar) * mu
            np.testing.assert_allclose(posterior_mean_x0(g, x, alpha_bar, 0), mu, atol=1e-14)

    def test_single_component_formula(self):
        g = GaussianMixture(dim=2, means=[[1.0, 0.0]], weights=[1.0])
        np.testing.assert_allclose(
            posterior_mean_x0(g, np.zeros(2), 0.25, 0), [0.75, 0.0], atol=1e-15
        )

    def test_symmetric_mixture_at_origin(self):
        np.testing.assert_allclose(
            posterior_mean_x0(PAIR_1D, np.array([0.0]), 0.5), [0.0], atol=1e-15
        )

    def test_full_signal_rejected(self):
        with pytest.raises(ValueError, match="alpha_bar"):
            posterior_mean_x0(PAIR_1D, np.array([0.0]), 1.0)

    def test_score_identity_randomized(self):
        # denoising-mean/score identity at 1e-10
        for gmm, x, alpha_bar, condition in random_cases(300, seed=17):
            beta_bar = 1.0 - alpha_bar
            for cond in (condition, None):
                x0_hat = posterior_mean_x0(gmm, x, alpha_bar, cond)
                implied = (math.sqrt(alpha_bar) * x0_hat - x) / beta_bar
                score = (
                    score_conditional(gmm, x, alpha_bar, cond)
                    if cond is not None
                    else score_unconditional(gmm, x, alpha_bar)
                )
                assert np.max(np.abs(implied - score)) < 1e-10


class TestFiniteDifferenceOracle:
    def test_single_gaussian_matches_closed_form(self):
        g = GaussianMixture(dim=3, means=[[1.0, -2.0, 0.3]], weights=[1.0])
        x = np.array([0.2, 0.5, -1.0])
        np.testing.assert_allclose(
            finite_diff_score(g, x, 0.7, 0, h=1e-4),
            score_conditional(g, x, 0.7, 0),
            atol=1e-5,
        )

    def test_symmetric_mixture_at_origin(self):
        np.testing.assert_allclose(
            finite_diff_score(PAIR_1D, np.array([0.0]), 0.5), [0.0], atol=1e-6
        )

    def test_frozen_mixture_value(self):
        np.testing.assert_allclose(
            finite_diff_score(PAIR_1D, np.array([0.5]), 1.0),
            [-0.037882842739990241],
            atol=1e-6,
        )

    def test_oracle_equivalence_randomized(self):
        for gmm, x, alpha_bar, condition in random_cases(200, seed=29):
            for cond in (condition, None):
                closed = (
                    score_conditional(gmm, x, alpha_bar, cond)
                    if cond is not None
                    else score_unconditional(gmm, x, alpha_bar)
                )
                numeric = finite_diff_score(gmm, x, alpha_bar, cond, h=1e-4)
                assert np.max(np.abs(closed - numeric)) < 1e-5

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError, match="h must be positive"):
            finite_diff_score(PAIR_1D, np.array([0.0]), 0.5, h=0.0)


def brute_force_hull_projection(points, target, refinements=60):
    """Oracle: dense barycentric search with local refinement."""
    points = np.asarray(points, float)
    n = len(points)
    rng = np.random.default_rng(0)
    best = None
    best_lam = None
    candidates = rng.dirichlet(np.ones(n), size=20000)
    candidates = np.vstack([candidates, np.eye(n)])
    dists = np.linalg.norm(candidates @ points - target, axis=1)
    idx = int(np.argmin(dists))
    best, best_lam = dists[idx], candidates[idx]
    scale = 0.5
    for _ in range(refinements):
        local = best_lam + scale * rng.standard_normal((2000, n))
        local = np.abs(local)
        local /= local.sum(axis=1, keepdims=True)
        dists = np.linalg.norm(local @ points - target, axis=1)
        idx = int(np.argmin(dists))
        if dists[idx] < best:
            best, best_lam = dists[idx], local[idx]
        scale *= 0.8
    return best_lam @ points, best


class TestSurfaceCertificates:
    def test_square_every_vertex_is_surface(self):
        for c in range(4):
            cert = surface_certificate(SQUARE, c)
            assert cert is not None
            # diagonal unit normal, margin sqrt(2) against the facing edge
            np.testing.assert_allclose(np.abs(cert.normal), [math.sqrt(0.5)] * 2, atol=1e-9)
            assert cert.min_margin == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_collinear_midpoint_is_interior(self):
        g = GaussianMixture(dim=1, means=[[-1.0], [0.0], [1.0]], weights=[1 / 3] * 3)
        decision = classify_component(g, 1)
        assert decision.status == "interior"
        assert decision.certificate is None
        assert surface_certificate(g, 0) is not None

    def test_triangle_vertex_normal_matches_oracle(self):
        g = GaussianMixture(dim=2, means=[[0, 0], [1, 0], [0, 1]], weights=[1 / 3] * 3)
        cert = surface_certificate(g, 0)
        assert cert is not None
        np.testing.assert_allclose(cert.normal, [-math.sqrt(0.5), -math.sqrt(0.5)], atol=1e-7)
        proj_oracle, dist_oracle = brute_force_hull_projection(g.means[1:], g.means[0])
        np.testing.assert_allclose(proj_oracle, [0.5, 0.5], atol=1e-3)
        decision = classify_component(g, 0)
        assert decision.hull_distance == pytest.approx(dist_oracle, abs=1e-3)

    def test_degenerate_coincident_means(self):
        g = GaussianMixture(dim=2, means=[[1.0, 1.0]] * 3, weights=[1 / 3] * 3)
        for c in range(3):
            decision = classify_component(g, c)
            assert decision.status == "degenerate"
            assert decision.certificate is None

    def test_certificate_invariants(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            n_comp = int(rng.integers(2, 7))
            dim = int(rng.integers(1, 5))
            means = rng.standard_normal((n_comp, dim)) * 2.0
            g = GaussianMixture(dim=dim, means=means, weights=np.full(n_comp, 1 / n_comp))
            for c in range(n_comp):
                cert = surface_certificate(g, c)
                if cert is None:
                    continue
                assert abs(cert.normal @ means[c] + cert.offset) <= 1e-9
                assert abs(np.linalg.norm(cert.normal) - 1.0) <= 1e-12
                assert cert.min_margin > 0
                for o in range(n_comp):
                    if o != c:
                        assert cert.normal @ means[o] + cert.offset <= -cert.min_margin + 1e-12

    def test_projection_matches_brute_force(self):
        rng = np.random.default_rng(53)
        for _ in range(5):
            points = rng.standard_normal((4, 3))
            target = rng.standard_normal(3) * 2
            proj, _ = project_onto_hull(points, target)
            _, dist_oracle = brute_force_hull_projection(points, target)
            assert np.linalg.norm(proj - target) == pytest.approx(dist_oracle, abs=2e-3)

    def test_requires_two_components(self):
        g = GaussianMixture(dim=1, means=[[0.0]], weights=[1.0])
        with pytest.raises(ValueError, match="two components"):
            classify_component(g, 0)
