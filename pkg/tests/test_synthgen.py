import numpy as np
import pytest

from kmshrink.moments import GaussianMixture
from kmshrink.synthgen import GeneratorConfig, derive_seed, draw_mixture, rng, sample


class TestSeeds:
    def test_derive_seed_deterministic(self):
        assert derive_seed(7, 3) == derive_seed(7, 3)

    def test_derive_seed_distinct_across_index(self):
        seeds = {derive_seed(0, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_derive_seed_distinct_across_master(self):
        assert derive_seed(0, 5) != derive_seed(1, 5)

    def test_nearby_masters_do_not_share_streams(self):
        a = rng(derive_seed(41, 0)).random(8)
        b = rng(derive_seed(42, 0)).random(8)
        assert not np.allclose(a, b)

    def test_rng_reproducible(self):
        assert np.array_equal(rng(123).random(16), rng(123).random(16))


class TestGeneratorConfig:
    def test_defaults_are_valid(self):
        cfg = GeneratorConfig(d=5)
        assert cfg.n_components == 4
        assert sum(cfg.pi) == pytest.approx(1.0)

    @pytest.mark.parametrize("kwargs", [
        {"d": 0},
        {"d": 2, "n_components": 0, "pi": ()},
        {"d": 2, "mean_range": (1.0, 1.0)},
        {"d": 2, "wishart_scale": 0.0},
        {"d": 2, "wishart_df": 0},
        {"d": 2, "noise_var": -0.1},
        {"d": 2, "pi": (0.5, 0.5)},
        {"d": 2, "pi": (0.3, 0.3, 0.3, 0.3)},
        {"d": 2, "pi": (1.2, -0.2, 0.0, 0.0)},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            GeneratorConfig(**kwargs)


class TestDrawMixture:
    def test_reproducible(self):
        cfg = GeneratorConfig(d=3, seed=9)
        P, Q = draw_mixture(cfg), draw_mixture(cfg)
        assert np.array_equal(P.means, Q.means)
        assert np.array_equal(P.covariances, Q.covariances)
        assert np.array_equal(P.weights, Q.weights)

    def test_seed_changes_output(self):
        a = draw_mixture(GeneratorConfig(d=3, seed=1))
        b = draw_mixture(GeneratorConfig(d=3, seed=2))
        assert not np.array_equal(a.means, b.means)

    def test_means_within_range(self):
        cfg = GeneratorConfig(d=6, mean_range=(-2.0, 2.0), seed=4)
        for s in range(50):
            P = draw_mixture(GeneratorConfig(d=6, mean_range=(-2.0, 2.0), seed=s))
            assert np.all(P.means >= -2.0) and np.all(P.means <= 2.0)
        assert cfg.mean_range == (-2.0, 2.0)

    def test_low_df_gives_rank_deficient_covariance(self):
        P = draw_mixture(GeneratorConfig(d=4, wishart_df=1, seed=3))
        for c in range(P.n_components):
            vals = np.linalg.eigvalsh(P.covariances[c])
            assert np.sum(vals > 1e-10 * vals.max()) == 1

    def test_covariance_expectation_matches_recipe(self):
        # E[cov] = wishart_df * wishart_scale * I.
        cfg0 = GeneratorConfig(d=3, n_components=2, pi=(0.5, 0.5))
        acc = np.zeros((3, 3))
        draws = 0
        for s in range(2000):
            P = draw_mixture(GeneratorConfig(d=3, n_components=2, pi=(0.5, 0.5), seed=s))
            acc += P.covariances.sum(axis=0)
            draws += P.n_components
        mean_cov = acc / draws
        target = cfg0.wishart_df * cfg0.wishart_scale
        assert np.allclose(np.diag(mean_cov), target, rtol=0.02)
        off = mean_cov[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) < 0.02 * target)


class TestSample:
    def test_reproducible_and_seed_sensitive(self):
        P = draw_mixture(GeneratorConfig(d=2, seed=11))
        assert np.array_equal(sample(P, 20, 5), sample(P, 20, 5))
        assert not np.array_equal(sample(P, 20, 5), sample(P, 20, 6))

    def test_point_mass_reproduces_mean(self):
        theta = np.array([1.0, -2.0, 0.5])
        P = GaussianMixture.single(theta, np.zeros((3, 3)))
        X = sample(P, 7, 0)
        assert np.array_equal(X, np.tile(theta, (7, 1)))

    def test_n_validated(self):
        with pytest.raises(ValueError):
            sample(draw_mixture(GeneratorConfig(d=2)), 0, 0)

    def test_sample_mean_matches_mixture_mean(self):
        P = draw_mixture(GeneratorConfig(d=3, mean_range=(-3.0, 3.0), seed=2))
        n = 200_000
        X = sample(P, n, 13)
        overall = P.weights @ P.means
        total_cov = P.noise_var * np.eye(3)
        for c in range(P.n_components):
            delta = P.means[c] - overall
            total_cov += P.weights[c] * (P.covariances[c] + np.outer(delta, delta))
        se = np.sqrt(np.diag(total_cov) / n)
        assert np.all(np.abs(X.mean(axis=0) - overall) <= 5 * se)

    def test_single_component_covariance_includes_noise(self):
        g = np.random.default_rng(6)
        m = g.standard_normal((3, 3))
        cov = m @ m.T
        P = GaussianMixture.single(np.zeros(3), cov, noise_var=0.5)
        X = sample(P, 300_000, 21)
        sample_cov = np.cov(X, rowvar=False)
        expected = cov + 0.5 * np.eye(3)
        assert np.allclose(sample_cov, expected, rtol=0.05, atol=0.05)

    def test_all_components_represented(self):
        P = draw_mixture(GeneratorConfig(d=1, seed=8))
        X = sample(P, 5000, 3)
        # Components sit far apart on [-10, 10]; every weight is >= 0.05,
        # so each center should attract a visible share of points.
        dists = np.abs(X[:, 0][np.newaxis, :] - P.means[:, 0][:, np.newaxis])
        nearest = np.argmin(dists, axis=0)
        assert set(nearest.tolist()) == set(range(P.n_components))
