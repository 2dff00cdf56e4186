import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmshrink.errors import DegenerateBandwidthError, DegenerateGramError
from kmshrink.kernels import (
    GramMatrix,
    KernelFamily,
    KernelSpec,
    centered_product_gram,
    cross_gram,
    eval_kernel,
    gram_matrix,
    median_heuristic,
)

RBF1 = KernelSpec(KernelFamily.RBF, sigma2=1.0)
ALL_SPECS = [
    KernelSpec(KernelFamily.LINEAR),
    KernelSpec(KernelFamily.POLY2),
    KernelSpec(KernelFamily.POLY3),
    RBF1,
]


class TestKernelSpec:
    def test_family_coerced_from_string(self):
        assert KernelSpec("linear").family is KernelFamily.LINEAR
        assert KernelSpec("rbf", sigma2=2.0).family is KernelFamily.RBF

    def test_rbf_requires_positive_sigma2(self):
        with pytest.raises(ValueError):
            KernelSpec(KernelFamily.RBF)
        with pytest.raises(ValueError):
            KernelSpec(KernelFamily.RBF, sigma2=0.0)
        with pytest.raises(ValueError):
            KernelSpec(KernelFamily.RBF, sigma2=-1.0)

    def test_non_rbf_rejects_sigma2(self):
        with pytest.raises(ValueError):
            KernelSpec(KernelFamily.LINEAR, sigma2=1.0)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec("sigmoid")


class TestEvalKernel:
    def test_linear_hand_value(self):
        assert eval_kernel(KernelSpec("linear"), [1.0, 2.0], [3.0, 4.0]) == 11.0

    def test_poly2_hand_value(self):
        # ((1,0).(1,0) + 1)^2 = 4
        assert eval_kernel(KernelSpec("poly2"), [1.0, 0.0], [1.0, 0.0]) == 4.0

    def test_poly3_hand_value(self):
        assert eval_kernel(KernelSpec("poly3"), [2.0], [1.0]) == 27.0

    def test_rbf_hand_values(self):
        assert eval_kernel(RBF1, [0.3, -0.7], [0.3, -0.7]) == 1.0
        assert eval_kernel(RBF1, [0.0], [2.0]) == pytest.approx(np.exp(-2.0), rel=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            eval_kernel(RBF1, [0.0, 1.0], [0.0])
        with pytest.raises(ValueError):
            eval_kernel(RBF1, [[0.0]], [[0.0]])


class TestGramMatrix:
    def test_poly3_frozen_entries(self):
        K = gram_matrix(KernelSpec("poly3"), [[1.0], [-1.0]])
        assert np.array_equal(K.entries, [[8.0, 0.0], [0.0, 8.0]])

    def test_matches_eval_kernel_entrywise(self):
        g = np.random.default_rng(11)
        X = g.standard_normal((6, 3))
        for spec in ALL_SPECS:
            K = gram_matrix(spec, X)
            for i in range(6):
                for j in range(6):
                    assert K.entries[i, j] == pytest.approx(
                        eval_kernel(spec, X[i], X[j]), rel=1e-12, abs=1e-12)

    def test_rbf_diagonal_exactly_one(self):
        g = np.random.default_rng(5)
        K = gram_matrix(RBF1, g.standard_normal((20, 4)) * 100)
        assert np.all(np.diag(K.entries) == 1.0)

    def test_exact_symmetry(self):
        g = np.random.default_rng(7)
        X = g.standard_normal((15, 5))
        for spec in ALL_SPECS:
            K = gram_matrix(spec, X).entries
            assert np.array_equal(K, K.T)

    def test_psd_validation_passes_on_real_grams(self):
        g = np.random.default_rng(3)
        X = g.standard_normal((12, 2))
        for spec in ALL_SPECS:
            gram_matrix(spec, X).validate_psd()

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            GramMatrix(np.array([[1.0, 0.5], [0.2, 1.0]]))

    def test_psd_violation_detected(self):
        K = GramMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            K.validate_psd()

    def test_smallest_nonzero_eigenvalue(self):
        assert GramMatrix(np.eye(3)).smallest_nonzero_eigenvalue() == pytest.approx(1.0)
        # rank-1 matrix of ones: eigenvalues {0, 0, 3}
        assert GramMatrix(np.ones((3, 3))).smallest_nonzero_eigenvalue() == pytest.approx(3.0)

    def test_all_zero_gram_has_no_nonzero_eigenvalue(self):
        with pytest.raises(DegenerateGramError):
            GramMatrix(np.zeros((2, 2))).smallest_nonzero_eigenvalue()


class TestCrossGram:
    def test_matches_eval_kernel(self):
        g = np.random.default_rng(13)
        X = g.standard_normal((4, 2))
        Y = g.standard_normal((3, 2))
        for spec in ALL_SPECS:
            C = cross_gram(spec, X, Y)
            assert C.shape == (4, 3)
            for i in range(4):
                for j in range(3):
                    assert C[i, j] == pytest.approx(
                        eval_kernel(spec, X[i], Y[j]), rel=1e-12, abs=1e-12)

    def test_consistent_with_gram(self):
        g = np.random.default_rng(17)
        X = g.standard_normal((8, 3))
        K = gram_matrix(RBF1, X).entries
        C = cross_gram(RBF1, X, X)
        assert np.allclose(C, K, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cross_gram(RBF1, np.zeros((2, 2)), np.zeros((2, 3)))


class TestMedianHeuristic:
    def test_three_point_hand_value(self):
        # squared gaps {1, 9, 4} -> median 4
        assert median_heuristic([[0.0], [1.0], [3.0]]) == 4.0

    def test_two_points(self):
        assert median_heuristic([[0.0], [2.0]]) == 4.0

    def test_even_pair_count_averages_middles(self):
        # pairs of {0,1,2,4}: sorted squared gaps [1,1,4,4,9,16] -> 4
        assert median_heuristic([[0.0], [1.0], [2.0], [4.0]]) == 4.0

    def test_all_identical_rejected(self):
        with pytest.raises(DegenerateBandwidthError, match="identical"):
            median_heuristic(np.zeros((4, 2)))

    def test_majority_coincident_rejected(self):
        X = np.array([[0.0], [0.0], [0.0], [0.0], [1.0]])
        with pytest.raises(DegenerateBandwidthError, match="coincide"):
            median_heuristic(X)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12, unique=True),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, values, shuffler):
        # Unique inputs can still produce zero squared distances when the
        # gap underflows, so the degenerate error must be invariant too.
        X = np.array(values)[:, np.newaxis]
        perm = list(range(len(values)))
        shuffler.shuffle(perm)
        try:
            first = median_heuristic(X)
        except DegenerateBandwidthError:
            with pytest.raises(DegenerateBandwidthError):
                median_heuristic(X[perm])
        else:
            assert first == median_heuristic(X[perm])


class TestCenteredProductGram:
    def test_identity_pair_frozen_value(self):
        K = centered_product_gram(GramMatrix(np.eye(2)), GramMatrix(np.eye(2)))
        assert np.allclose(K.entries, np.full((2, 2), 0.25), atol=1e-15)

    def test_output_is_psd(self):
        g = np.random.default_rng(23)
        X = g.standard_normal((10, 2))
        Y = g.standard_normal((10, 3))
        K = centered_product_gram(gram_matrix(RBF1, X), gram_matrix(RBF1, Y))
        K.validate_psd()

    def test_centering_kills_constants(self):
        # A constant factor kernel centers to zero, so the product vanishes.
        ones = GramMatrix(np.ones((5, 5)))
        g = np.random.default_rng(29)
        other = gram_matrix(RBF1, g.standard_normal((5, 2)))
        K = centered_product_gram(ones, other)
        assert np.allclose(K.entries, 0.0, atol=1e-12)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            centered_product_gram(GramMatrix(np.eye(2)), GramMatrix(np.eye(3)))

    def test_single_point_rejected(self):
        with pytest.raises(ValueError):
            centered_product_gram(GramMatrix(np.eye(1)), GramMatrix(np.eye(1)))
