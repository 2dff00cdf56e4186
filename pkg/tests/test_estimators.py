import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmshrink.errors import (
    DegenerateGramError,
    InsufficientSampleError,
    PreconditionError,
    SelectionError,
    SingularLeaveOneOutError,
)
from kmshrink.estimators import (
    EstimatorSpec,
    FunctionExpansion,
    SelectionMethod,
    ShrinkageSelection,
    b_kmse,
    default_lambda_grid,
    empirical_alpha_bound,
    empirical_risk,
    expansion_sqdist,
    generic_shrinkage,
    kme,
    r_kmse,
    r_kmse_lambda,
    run_estimator,
    s_kmse_loocv_naive,
    s_kmse_loocv_score,
    s_kmse_select_lambda,
    s_kmse_weights,
)
from kmshrink.kernels import GramMatrix, KernelFamily, KernelSpec, gram_matrix

from oracles import brute_empirical_risk, naive_s_loocv

RBF1 = KernelSpec(KernelFamily.RBF, sigma2=1.0)


def random_gram(seed: int, n: int = 8, d: int = 3,
                family: str = "rbf") -> tuple[GramMatrix, np.ndarray]:
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, d))
    spec = RBF1 if family == "rbf" else KernelSpec(family)
    return gram_matrix(spec, X), X


class TestFunctionExpansion:
    def test_zero(self):
        z = FunctionExpansion.zero(4)
        assert z.m == 0 and z.d == 4

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            FunctionExpansion(np.zeros((2, 1)), np.zeros(3))
        with pytest.raises(ValueError):
            FunctionExpansion(np.zeros(3), np.zeros(3))

    def test_nonfinite_weights_rejected(self):
        with pytest.raises(ValueError):
            FunctionExpansion(np.zeros((1, 1)), np.array([np.nan]))


class TestShrinkageSelection:
    def test_alpha_lam_consistency_enforced(self):
        ShrinkageSelection(0.5, 1.0, SelectionMethod.FIXED)
        with pytest.raises(ValueError):
            ShrinkageSelection(0.5, 2.0, SelectionMethod.FIXED)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            ShrinkageSelection(2.0, None, SelectionMethod.FIXED)


class TestKme:
    def test_uniform_weights(self):
        X = np.arange(6.0).reshape(3, 2)
        exp = kme(X)
        assert np.array_equal(exp.weights, np.full(3, 1.0 / 3.0))
        assert exp.points is X or np.array_equal(exp.points, X)

    def test_empty_sample_rejected(self):
        with pytest.raises(InsufficientSampleError):
            kme(np.zeros((0, 2)))


class TestEmpiricalRisk:
    def test_identity_gram_hand_value(self):
        # n=2, K=I: diag mean 1, full mean 0.5 -> (1 - 0.5)/(2 - 1) = 0.5
        assert empirical_risk(GramMatrix(np.eye(2))) == 0.5

    def test_matches_brute_force(self):
        for seed in range(8):
            K, _ = random_gram(seed, n=6)
            assert empirical_risk(K) == pytest.approx(
                brute_empirical_risk(K.entries), rel=1e-12)

    def test_constant_gram_risk_zero(self):
        assert empirical_risk(GramMatrix(np.ones((4, 4)))) == 0.0

    def test_needs_two_points(self):
        with pytest.raises(InsufficientSampleError):
            empirical_risk(GramMatrix(np.eye(1)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12),
           st.sampled_from(["linear", "poly2", "poly3", "rbf"]))
    def test_nonnegative_on_psd_grams(self, seed, n, family):
        K, _ = random_gram(seed, n=n, family=family)
        assert empirical_risk(K) >= 0.0


class TestBKmse:
    def test_identity_gram_hand_values(self):
        K = GramMatrix(np.eye(2))
        X = np.array([[0.0], [1.0]])
        sel, exp = b_kmse(K, X)
        # risk 0.5, squared norm 0.5 -> alpha 0.5, weights 0.25 each
        assert sel.alpha == 0.5
        assert sel.method is SelectionMethod.EMPIRICAL_BOUND
        assert np.array_equal(exp.weights, np.array([0.25, 0.25]))
        assert empirical_alpha_bound(K) == 1.0

    def test_alpha_is_gram_mean_ratio(self):
        for seed in range(6):
            K, X = random_gram(seed)
            sel, _ = b_kmse(K, X)
            n = K.n
            rho = K.entries.mean()
            varrho = np.trace(K.entries) / n
            assert sel.alpha == pytest.approx(
                (varrho - rho) / (varrho + (n - 2) * rho), rel=1e-12)
            assert sel.alpha == pytest.approx(empirical_alpha_bound(K) / 2, rel=1e-12)

    def test_zero_gram_rejected(self):
        with pytest.raises(DegenerateGramError):
            b_kmse(GramMatrix(np.zeros((3, 3))), np.zeros((3, 1)))


class TestRKmse:
    def test_hand_value(self):
        # K = [[1, .5], [.5, 1]]: rho = .75, varrho = 1, lam = 2*.25/(1*.5) = 1
        K = GramMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert r_kmse_lambda(K) == pytest.approx(1.0, rel=1e-14)
        sel, exp = r_kmse(K, np.array([[0.0], [1.0]]))
        assert sel.alpha == pytest.approx(0.5, rel=1e-14)
        assert np.allclose(exp.weights, 0.25)

    def test_precondition_failure_on_zero_offdiagonal_mass(self):
        # K = I: n*rho = varrho, no positive off-diagonal mass.
        with pytest.raises(PreconditionError, match="off-diagonal"):
            r_kmse_lambda(GramMatrix(np.eye(2)))

    def test_alpha_closed_form_and_dominates_empirical_bound_alpha(self):
        for seed in range(10):
            K, X = random_gram(seed, n=7)
            sel_r, _ = r_kmse(K, X)
            sel_b, _ = b_kmse(K, X)
            n = K.n
            rho = K.entries.mean()
            varrho = np.trace(K.entries) / n
            expected = n * (varrho - rho) / (n * (n - 2) * rho + varrho)
            assert sel_r.alpha == pytest.approx(expected, rel=1e-12)
            assert sel_r.alpha >= sel_b.alpha - 1e-15


class TestSKmseWeights:
    def test_identity_gram_hand_value(self):
        # (I + 2*0.5*I)^{-1} I (0.5, 0.5) = (0.25, 0.25)
        w = s_kmse_weights(GramMatrix(np.eye(2)), 0.5)
        assert np.allclose(w, 0.25, atol=1e-14)

    def test_matches_spectral_filter_route(self):
        for seed in range(10):
            K, _ = random_gram(seed, n=9)
            lam = 0.1 * (seed + 1)
            w_solve = s_kmse_weights(K, lam)
            vals, vecs = np.linalg.eigh(K.entries)
            ones = np.full(K.n, 1.0 / K.n)
            filt = vals / (vals + K.n * lam)
            w_eig = vecs @ (filt * (vecs.T @ ones))
            assert np.linalg.norm(w_solve - w_eig) <= 1e-10 * max(1.0, np.linalg.norm(w_solve))

    def test_nonpositive_lambda_rejected(self):
        with pytest.raises(ValueError):
            s_kmse_weights(GramMatrix(np.eye(2)), 0.0)

    def test_large_lambda_shrinks_toward_zero(self):
        K, _ = random_gram(0)
        w = s_kmse_weights(K, 1e6)
        assert np.all(np.abs(w) < 1e-4)


class TestSKmseLoocv:
    def test_closed_form_matches_package_naive(self):
        for seed in range(5):
            K, _ = random_gram(seed, n=7)
            for lam in (1e-3, 0.1, 1.0, 10.0):
                closed = s_kmse_loocv_score(K, lam)
                assert closed == pytest.approx(s_kmse_loocv_naive(K, lam), rel=1e-10)

    def test_closed_form_matches_independent_oracle(self):
        for seed in range(5):
            for family in ("linear", "poly2", "poly3", "rbf"):
                K, _ = random_gram(seed, n=6, family=family)
                closed = s_kmse_loocv_score(K, 0.37)
                assert closed == pytest.approx(naive_s_loocv(K.entries, 0.37), rel=1e-9)

    def test_two_point_hand_value(self):
        # K = I, n = 2: the fold estimate is k(x_j,.)/(1 + lam); the held-out
        # point is orthogonal to it, so the score is 1 + 1/(1+lam)^2.
        lam = 0.7
        score = s_kmse_loocv_score(GramMatrix(np.eye(2)), lam)
        assert score == pytest.approx(1.0 + (1.0 + lam) ** -2, rel=1e-12)

    def test_singular_fold_detected(self):
        with pytest.raises(SingularLeaveOneOutError):
            s_kmse_loocv_score(GramMatrix(np.eye(2)), 1e-13)

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            s_kmse_loocv_score(GramMatrix(np.eye(2)), -1.0)


class TestSKmseSelectLambda:
    def test_picks_grid_minimizer(self):
        K, _ = random_gram(1, n=10)
        grid = default_lambda_grid(K, num=15)
        lam = s_kmse_select_lambda(K, grid)
        scores = [s_kmse_loocv_score(K, float(v)) for v in grid]
        assert lam == pytest.approx(float(grid[int(np.argmin(scores))]))

    def test_tie_prefers_smaller(self):
        # Evaluating the same lam twice forces a tie; order in the grid is
        # irrelevant because the grid is sorted first.
        K, _ = random_gram(2, n=6)
        lam = s_kmse_select_lambda(K, [0.5, 0.5])
        assert lam == 0.5

    def test_default_grid_spans_smallest_eigenvalue(self):
        K, _ = random_gram(3, n=8)
        grid = default_lambda_grid(K, num=30)
        gamma0 = K.smallest_nonzero_eigenvalue()
        assert grid.shape == (30,)
        assert grid[0] == pytest.approx(gamma0 * 1e-4)
        assert grid[-1] == pytest.approx(gamma0 * 1e2)

    def test_empty_grid_rejected(self):
        K, _ = random_gram(4)
        with pytest.raises(ValueError):
            s_kmse_select_lambda(K, [])

    def test_all_singular_grid_fails_selection(self):
        with pytest.raises(SelectionError):
            s_kmse_select_lambda(GramMatrix(np.eye(2)), [1e-16, 1e-15])


class TestGenericShrinkage:
    def test_alpha_zero_is_identity(self):
        mu = kme(np.array([[0.0], [1.0]]))
        assert generic_shrinkage(mu, None, 0.0) is mu

    def test_zero_target_scales_weights(self):
        mu = kme(np.array([[0.0], [1.0]]))
        out = generic_shrinkage(mu, None, 0.4)
        assert np.allclose(out.weights, 0.3)
        assert out.points is mu.points

    def test_alpha_one_zero_target_gives_zero_function(self):
        mu = kme(np.array([[0.0], [1.0]]))
        out = generic_shrinkage(mu, None, 1.0)
        assert out.m == 0

    def test_explicit_target_concatenated_first(self):
        mu = kme(np.array([[0.0], [1.0]]))
        target = FunctionExpansion(np.array([[5.0]]), np.array([2.0]))
        out = generic_shrinkage(mu, target, 0.25)
        assert out.m == 3
        assert out.points[0, 0] == 5.0
        assert np.allclose(out.weights, [0.5, 0.375, 0.375])

    def test_positive_part_drops_base_past_alpha_one(self):
        mu = kme(np.array([[0.0], [1.0]]))
        target = FunctionExpansion(np.array([[5.0]]), np.array([1.0]))
        plain = generic_shrinkage(mu, target, 1.5)
        clipped = generic_shrinkage(mu, target, 1.5, positive_part=True)
        assert plain.m == 3 and np.allclose(plain.weights, [1.5, -0.25, -0.25])
        assert clipped.m == 1 and np.allclose(clipped.weights, [1.5])

    def test_alpha_range_enforced(self):
        mu = kme(np.array([[0.0], [1.0]]))
        for bad in (-0.1, 2.0, 2.5):
            with pytest.raises(ValueError):
                generic_shrinkage(mu, None, bad)

    def test_dimension_mismatch_rejected(self):
        mu = kme(np.array([[0.0], [1.0]]))
        target = FunctionExpansion(np.array([[1.0, 2.0]]), np.array([1.0]))
        with pytest.raises(ValueError):
            generic_shrinkage(mu, target, 0.5)


class TestExpansionSqdist:
    def test_rbf_atom_pair_hand_value(self):
        a = FunctionExpansion(np.array([[0.0]]), np.array([1.0]))
        b = FunctionExpansion(np.array([[2.0]]), np.array([1.0]))
        assert expansion_sqdist(a, b, RBF1) == pytest.approx(2.0 - 2.0 * np.exp(-2.0),
                                                             rel=1e-14)

    def test_identical_expansions_zero(self):
        a = FunctionExpansion(np.array([[0.3], [1.0]]), np.array([0.5, 0.5]))
        assert expansion_sqdist(a, a, RBF1) == 0.0

    def test_zero_function_gives_squared_norm(self):
        a = FunctionExpansion(np.array([[0.0]]), np.array([2.0]))
        z = FunctionExpansion.zero(1)
        assert expansion_sqdist(a, z, RBF1) == pytest.approx(4.0)
        assert expansion_sqdist(z, z, RBF1) == 0.0


class TestEstimatorSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            EstimatorSpec("ridge")

    def test_shrink_needs_exactly_one_intensity(self):
        with pytest.raises(ValueError):
            EstimatorSpec("shrink")
        with pytest.raises(ValueError):
            EstimatorSpec("shrink", alpha=0.5, bound_fraction=0.5)
        EstimatorSpec("shrink", alpha=0.5)
        EstimatorSpec("shrink", bound_fraction=1.0)

    def test_lam_only_for_ridge_kinds(self):
        with pytest.raises(ValueError):
            EstimatorSpec("kme", lam=1.0)
        with pytest.raises(ValueError):
            EstimatorSpec("b-kmse", lam=1.0)
        EstimatorSpec("r-kmse", lam=1.0)
        EstimatorSpec("s-kmse", lam=1.0)

    def test_grid_only_for_s_kmse(self):
        with pytest.raises(ValueError):
            EstimatorSpec("r-kmse", grid=(0.1, 1.0))
        with pytest.raises(ValueError):
            EstimatorSpec("s-kmse", lam=1.0, grid=(0.1,))
        EstimatorSpec("s-kmse", grid=(0.1, 1.0))

    def test_positive_part_only_for_shrink(self):
        with pytest.raises(ValueError):
            EstimatorSpec("kme", positive_part=True)

    def test_scale_flag_needs_lam(self):
        with pytest.raises(ValueError):
            EstimatorSpec("s-kmse", lam_scale_gamma0=True)

    def test_default_labels(self):
        assert EstimatorSpec("kme").resolved_label == "KME"
        assert EstimatorSpec("b-kmse").resolved_label == "B-KMSE"
        assert EstimatorSpec("r-kmse").resolved_label == "R-KMSE"
        assert EstimatorSpec("s-kmse").resolved_label == "S-KMSE"
        assert EstimatorSpec("shrink", alpha=0.1).resolved_label == "SHRINK"
        assert EstimatorSpec("kme", label="base").resolved_label == "base"


class TestRunEstimator:
    def test_kme(self):
        K, X = random_gram(0)
        out = run_estimator(EstimatorSpec("kme"), K, X)
        assert out.alpha == 0.0 and out.lam == 0.0
        assert np.allclose(out.weights if hasattr(out, "weights") else
                           out.expansion.weights, 1.0 / K.n)
        assert out.expansion.points is X

    def test_b_matches_direct_call(self):
        K, X = random_gram(1)
        out = run_estimator(EstimatorSpec("b-kmse"), K, X)
        sel, exp = b_kmse(K, X)
        assert out.alpha == sel.alpha and out.lam == sel.lam
        assert np.array_equal(out.expansion.weights, exp.weights)

    def test_r_fixed_lambda(self):
        K, X = random_gram(2)
        out = run_estimator(EstimatorSpec("r-kmse", lam=3.0), K, X)
        assert out.lam == 3.0 and out.alpha == pytest.approx(0.75)
        assert np.allclose(out.expansion.weights, 1.0 / (K.n * 4.0))

    def test_s_fixed_lambda_and_scaled(self):
        K, X = random_gram(3)
        out = run_estimator(EstimatorSpec("s-kmse", lam=0.2), K, X)
        assert out.alpha is None and out.lam == 0.2
        assert np.allclose(out.expansion.weights, s_kmse_weights(K, 0.2))
        scaled = run_estimator(EstimatorSpec("s-kmse", lam=0.5, lam_scale_gamma0=True),
                               K, X)
        assert scaled.lam == pytest.approx(0.5 * K.smallest_nonzero_eigenvalue())

    def test_s_grid_selection(self):
        K, X = random_gram(4)
        out = run_estimator(EstimatorSpec("s-kmse", grid=(0.05, 0.5, 5.0)), K, X)
        assert out.lam == s_kmse_select_lambda(K, (0.05, 0.5, 5.0))

    def test_shrink_bound_fraction(self):
        K, X = random_gram(5)
        out = run_estimator(EstimatorSpec("shrink", bound_fraction=1.0), K, X)
        assert out.alpha == pytest.approx(empirical_alpha_bound(K))
        assert out.expansion.points is X

    def test_shrink_fixed_alpha(self):
        K, X = random_gram(6)
        out = run_estimator(EstimatorSpec("shrink", alpha=0.25), K, X)
        assert out.alpha == 0.25
        assert np.allclose(out.expansion.weights, 0.75 / K.n)
