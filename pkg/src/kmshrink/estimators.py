"""Kernel mean estimators as weight vectors over the observed sample.

Every estimate of the kernel mean is a finite expansion
sum_j w_j k(u_j, .), and every estimator here consumes a precomputed
Gram matrix, so kernel evaluations happen once per sample no matter how
many estimators run on it.

Three shrinkage rules are provided on top of the plain empirical mean:

* the empirical-bound rule, which scales the mean by (1 - alpha) with
  alpha picked from a plug-in estimate of the risk ratio,
* the regularized rule, a uniform 1/(1+lambda) scaling with lambda from
  a closed-form leave-one-out minimizer,
* the spectral rule, which filters the mean through the Gram eigensystem
  with a ridge parameter chosen by a leave-one-out score.

A generic convex-style combination toward an arbitrary target expansion
(with an optional positive-part floor) covers everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (
    DegenerateGramError,
    InsufficientSampleError,
    NumericalError,
    PreconditionError,
    SelectionError,
    SingularLeaveOneOutError,
)
from .kernels import Array, GramMatrix, KernelSpec, cross_gram, gram_matrix

# |1 - d_i| below this is treated as a singular leave-one-out fold.
_LOO_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class FunctionExpansion:
    """Finite RKHS expansion sum_j weights[j] * k(points[j], .).

    m = 0 (no points) denotes the zero function. Weights must be finite;
    they are not required to sum to 1 (shrunk weights intentionally sum
    to less).
    """

    points: Array
    weights: Array

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if points.ndim != 2:
            raise ValueError(f"points must be 2-D, got ndim={points.ndim}")
        if weights.ndim != 1 or weights.shape[0] != points.shape[0]:
            raise ValueError(
                f"weights must be 1-D with one entry per point, "
                f"got {weights.shape} for {points.shape[0]} points"
            )
        if weights.size and not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @classmethod
    def zero(cls, d: int) -> "FunctionExpansion":
        """The zero function over d-dimensional inputs."""
        return cls(np.zeros((0, d)), np.zeros(0))


class SelectionMethod(Enum):
    FIXED = "fixed"
    EMPIRICAL_BOUND = "empirical-bound"
    LOOCV_CLOSED_FORM = "loocv-closed-form"
    LOOCV_GRID = "loocv-grid"


@dataclass(frozen=True)
class ShrinkageSelection:
    """Chosen shrinkage intensity.

    For uniform shrinkage the two parameterizations are tied by
    alpha = lam / (1 + lam); lam may be absent when only alpha is
    meaningful.
    """

    alpha: float
    lam: float | None
    method: SelectionMethod

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha < 2.0):
            raise ValueError(f"alpha must be in [0, 2), got {self.alpha}")
        if self.lam is not None:
            if self.lam < 0:
                raise ValueError(f"lam must be nonnegative, got {self.lam}")
            if abs(self.alpha - self.lam / (1.0 + self.lam)) > 1e-12:
                raise ValueError(
                    f"inconsistent pair: alpha={self.alpha}, lam={self.lam} "
                    f"(expected alpha = lam/(1+lam))"
                )


def kme(X) -> FunctionExpansion:
    """The empirical kernel mean: uniform weights 1/n over the sample."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got ndim={X.ndim}")
    n = X.shape[0]
    if n < 1:
        raise InsufficientSampleError("kme needs at least one point")
    return FunctionExpansion(X, np.full(n, 1.0 / n))


def _gram_means(K: GramMatrix) -> tuple[float, float]:
    """(rho, varrho): mean of all Gram entries and mean of the diagonal."""
    return float(K.entries.mean()), float(np.trace(K.entries) / K.n)


def empirical_risk(K: GramMatrix) -> float:
    """Plug-in risk estimate of the empirical mean from its Gram matrix.

    Computes (mean of K_ii - mean of K_ij over i != j) / n. The result is
    nonnegative for a PSD Gram; tiny negatives from floating noise on
    near-Dirac samples are clamped to 0 (threshold scale-relative,
    1e-14 * max(1, diagonal mean)).
    """
    n = K.n
    if n < 2:
        raise InsufficientSampleError(f"empirical_risk needs n >= 2, got n={n}")
    rho, varrho = _gram_means(K)
    delta = (varrho - rho) / (n - 1)
    if abs(delta) < 1e-14 * max(1.0, abs(varrho)):
        delta = max(delta, 0.0)
    return delta


def empirical_alpha_bound(K: GramMatrix) -> float:
    """Upper endpoint 2*Delta-hat / (Delta-hat + |mean|^2) of the improvement range."""
    delta = empirical_risk(K)
    rho, _ = _gram_means(K)
    denom = delta + rho
    if denom <= 0.0:
        raise DegenerateGramError("Gram matrix has no signal: risk and norm are both zero")
    return 2.0 * delta / denom


def b_kmse(K: GramMatrix, X) -> tuple[ShrinkageSelection, FunctionExpansion]:
    """Empirical-bound shrinkage of the kernel mean toward zero.

    alpha = Delta-hat / (Delta-hat + |mean|^2), half the empirical
    improvement bound; the returned weights are (1 - alpha)/n. Equals
    (varrho - rho) / (varrho + (n-2) rho) in terms of the Gram means.
    """
    n = K.n
    if n < 2:
        raise InsufficientSampleError(f"b_kmse needs n >= 2, got n={n}")
    delta = empirical_risk(K)
    rho, _ = _gram_means(K)
    denom = delta + rho
    if denom <= 0.0:
        raise DegenerateGramError("Gram matrix has no signal: risk and norm are both zero")
    alpha = delta / denom
    if alpha >= 1.0:
        # Only reachable when the empirical mean has exactly zero norm.
        raise DegenerateGramError("empirical kernel mean has zero RKHS norm")
    lam = alpha / (1.0 - alpha)
    selection = ShrinkageSelection(alpha, lam, SelectionMethod.EMPIRICAL_BOUND)
    return selection, FunctionExpansion(X, np.full(n, (1.0 - alpha) / n))


def r_kmse_lambda(K: GramMatrix) -> float:
    """Closed-form leave-one-out minimizer for uniform shrinkage.

    lambda = n (varrho - rho) / ((n-1)(n rho - varrho)) with rho the mean
    Gram entry and varrho the mean diagonal entry. Requires n rho >
    varrho, i.e. positive total off-diagonal mass.
    """
    n = K.n
    if n < 2:
        raise InsufficientSampleError(f"r_kmse_lambda needs n >= 2, got n={n}")
    rho, varrho = _gram_means(K)
    if not n * rho > varrho:
        raise PreconditionError(
            f"closed-form selector assumes n*rho > varrho "
            f"(positive off-diagonal Gram mass); got n*rho={n * rho:.6g}, varrho={varrho:.6g}"
        )
    return max(n * (varrho - rho) / ((n - 1) * (n * rho - varrho)), 0.0)


def r_kmse(K: GramMatrix, X) -> tuple[ShrinkageSelection, FunctionExpansion]:
    """Uniform shrinkage 1/(1+lambda) with the closed-form lambda."""
    lam = r_kmse_lambda(K)
    alpha = lam / (1.0 + lam)
    selection = ShrinkageSelection(alpha, lam, SelectionMethod.LOOCV_CLOSED_FORM)
    weights = np.full(K.n, 1.0 / (K.n * (1.0 + lam)))
    return selection, FunctionExpansion(X, weights)


def s_kmse_weights(K: GramMatrix, lam: float) -> Array:
    """Spectral-shrinkage weights w = (K + n*lam*I)^{-1} K 1_n, 1_n = (1/n, ...).

    Solved with a Cholesky factorization and no added jitter: lam > 0
    already makes the system positive definite, and lam = 0 is rejected.
    Equivalent to filtering the uniform weights by g_i / (g_i + n*lam)
    in the Gram eigenbasis.
    """
    if not lam > 0:
        raise ValueError(f"s_kmse_weights requires lam > 0, got {lam}")
    n = K.n
    if n < 1:
        raise InsufficientSampleError("s_kmse_weights needs at least one point")
    system = K.entries + n * lam * np.eye(n)
    try:
        factor = cho_factor(system, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            f"Cholesky factorization of K + n*lam*I failed (n={n}, lam={lam})",
            lam=lam, n=n,
        ) from exc
    return cho_solve(factor, K.entries @ np.full(n, 1.0 / n), check_finite=False)


def s_kmse_loocv_score(K: GramMatrix, lam: float) -> float:
    """Closed-form leave-one-out score of the spectral shrinkage rule.

    Averages the squared RKHS distance between each held-out feature map
    and the estimate rebuilt from the other n-1 points, without actually
    rebuilding: with lam_n = (n-1)*lam, the held-out estimate has weight
    vector (K + lam_n I)^{-1} c_i / (n-1) where

        c_i = K1 - k_i + e_i * (K_ii - k_i'1
              + (a_i - b_i - d_i k_i'1 + d_i K_ii) / (1 - d_i)),

    a_i = k_i'(K+lam_n I)^{-1}K1, b_i = k_i'(K+lam_n I)^{-1}k_i and
    d_i = k_i'(K+lam_n I)^{-1}e_i (1 the all-ones vector). Agreement with
    the naive per-fold recomputation is pinned in the test suite.
    """
    n = K.n
    if n < 2:
        raise InsufficientSampleError(f"s_kmse_loocv_score needs n >= 2, got n={n}")
    if not lam > 0:
        raise ValueError(f"s_kmse_loocv_score requires lam > 0, got {lam}")
    entries = K.entries
    lam_n = (n - 1) * lam
    try:
        factor = cho_factor(entries + lam_n * np.eye(n), lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericalError(
            f"Cholesky factorization of K + lam_n*I failed (n={n}, lam={lam})",
            lam=lam, n=n,
        ) from exc
    ones = np.ones(n)
    k_ones = entries @ ones
    smoothed = cho_solve(factor, entries, check_finite=False)  # (K+lam_n I)^{-1} K
    t = cho_solve(factor, k_ones, check_finite=False)
    a = entries @ t
    b = np.einsum("il,li->i", entries, smoothed)
    d = np.diag(smoothed).copy()
    gap = 1.0 - d
    worst = int(np.argmin(np.abs(gap)))
    if abs(gap[worst]) < _LOO_SINGULAR_TOL:
        raise SingularLeaveOneOutError(
            f"leave-one-out fold {worst} singular at lam={lam} (1 - d = {gap[worst]:.3e})",
            index=worst, lam=lam,
        )
    diag = np.diag(entries)
    correction = diag - k_ones + (a - b - d * k_ones + d * diag) / gap
    c = np.outer(k_ones, ones) - entries + np.diag(correction)  # column i = c_i
    held_out = cho_solve(factor, c, check_finite=False) / (n - 1)
    cross = np.sum(entries * held_out)
    quad = np.sum(held_out * (entries @ held_out))
    return float((np.sum(diag) - 2.0 * cross + quad) / n)


def s_kmse_loocv_naive(K: GramMatrix, lam: float) -> float:
    """Leave-one-out score by direct per-fold recomputation (O(n^4)).

    The reference route for s_kmse_loocv_score: each fold rebuilds the
    spectral estimate from scratch on its n-1 remaining points at the
    same lam and measures the squared RKHS distance to the held-out
    feature map.
    """
    n = K.n
    if n < 2:
        raise InsufficientSampleError(f"s_kmse_loocv_naive needs n >= 2, got n={n}")
    entries = K.entries
    total = 0.0
    for i in range(n):
        keep = np.delete(np.arange(n), i)
        sub = GramMatrix(entries[np.ix_(keep, keep)])
        w = s_kmse_weights(sub, lam)
        k_i = entries[i, keep]
        total += entries[i, i] - 2.0 * (k_i @ w) + w @ sub.entries @ w
    return float(total / n)


def default_lambda_grid(K: GramMatrix, num: int = 30,
                        span: tuple[float, float] = (1e-4, 1e2)) -> Array:
    """Log-spaced grid of multiples of the smallest nonzero Gram eigenvalue."""
    gamma0 = K.smallest_nonzero_eigenvalue()
    lo, hi = span
    if not (0 < lo < hi):
        raise ValueError(f"span must satisfy 0 < lo < hi, got {span}")
    return gamma0 * np.logspace(np.log10(lo), np.log10(hi), num)


def s_kmse_select_lambda(K: GramMatrix, grid=None) -> float:
    """Grid minimizer of the leave-one-out score; ties go to the smallest lam.

    grid = None uses default_lambda_grid. Grid points that hit a singular
    fold are skipped; if all of them do, selection fails.
    """
    if grid is None:
        grid = default_lambda_grid(K)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if not np.all(grid > 0):
        raise ValueError("lambda grid must be strictly positive")
    best_lam = None
    best_score = np.inf
    for lam in grid:
        try:
            score = s_kmse_loocv_score(K, float(lam))
        except (SingularLeaveOneOutError, NumericalError):
            continue
        if score < best_score:
            best_lam = float(lam)
            best_score = score
    if best_lam is None:
        raise SelectionError("every grid point hit a singular leave-one-out fold")
    return best_lam


def generic_shrinkage(mu_hat: FunctionExpansion, f_star: FunctionExpansion | None,
                      alpha: float, positive_part: bool = False) -> FunctionExpansion:
    """The combination alpha * f_star + (1 - alpha) * mu_hat.

    f_star = None means the zero target. With positive_part the factor
    (1 - alpha) is floored at 0, so for alpha > 1 the result is the
    scaled target alone. alpha is restricted to [0, 2): past 2 no choice
    of target improves on the plain mean.
    """
    if not (0.0 <= alpha < 2.0):
        raise ValueError(f"alpha must be in [0, 2), got {alpha}")
    if f_star is not None and f_star.m > 0 and f_star.d != mu_hat.d:
        raise ValueError(f"dimension mismatch: target d={f_star.d}, mean d={mu_hat.d}")
    if alpha == 0.0:
        return mu_hat
    base_scale = 1.0 - alpha
    if positive_part:
        base_scale = max(base_scale, 0.0)
    blocks_points = []
    blocks_weights = []
    if f_star is not None and f_star.m > 0:
        blocks_points.append(f_star.points)
        blocks_weights.append(alpha * f_star.weights)
    if base_scale != 0.0:
        blocks_points.append(mu_hat.points)
        blocks_weights.append(base_scale * mu_hat.weights)
    if not blocks_points:
        return FunctionExpansion.zero(mu_hat.d)
    if len(blocks_points) == 1:
        # No concatenate: keeps the points array shared with the caller's
        # sample so downstream scoring can reuse its Gram matrix.
        return FunctionExpansion(blocks_points[0], blocks_weights[0])
    return FunctionExpansion(np.concatenate(blocks_points),
                             np.concatenate(blocks_weights))


def expansion_sqdist(a: FunctionExpansion, b: FunctionExpansion, spec: KernelSpec) -> float:
    """Squared RKHS distance ||a - b||^2 between two expansions.

    Computed as wa'Kaa wa - 2 wa'Kab wb + wb'Kbb wb. The exact value is
    nonnegative; floating cancellation down to -1e-10 relative to the
    norm scale is clamped to 0.
    """
    if a.m > 0 and b.m > 0 and a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    norm_a = float(a.weights @ gram_matrix(spec, a.points).entries @ a.weights) if a.m else 0.0
    norm_b = float(b.weights @ gram_matrix(spec, b.points).entries @ b.weights) if b.m else 0.0
    cross = 0.0
    if a.m and b.m:
        cross = float(a.weights @ cross_gram(spec, a.points, b.points) @ b.weights)
    value = norm_a - 2.0 * cross + norm_b
    floor = -1e-10 * max(1.0, norm_a + norm_b)
    if value < floor:
        raise NumericalError(f"squared distance {value:.3e} below the floating floor")
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Declarative estimator descriptors, shared by the harness and the classifier.
# ---------------------------------------------------------------------------

_KINDS = ("kme", "b-kmse", "r-kmse", "s-kmse", "shrink")
_DEFAULT_LABELS = {
    "kme": "KME",
    "b-kmse": "B-KMSE",
    "r-kmse": "R-KMSE",
    "s-kmse": "S-KMSE",
    "shrink": "SHRINK",
}


@dataclass(frozen=True)
class EstimatorSpec:
    """Declarative choice of estimator and shrinkage-parameter policy.

    kind: one of kme, b-kmse, r-kmse, s-kmse, shrink.
    lam: fixed ridge parameter for r-kmse / s-kmse; None means the
        closed form (r-kmse) or grid selection (s-kmse).
    lam_scale_gamma0: interpret lam as a multiple of the smallest nonzero
        Gram eigenvalue, resolved per sample.
    grid: explicit leave-one-out grid for s-kmse (absolute values).
    alpha: fixed shrinkage intensity for shrink.
    bound_fraction: shrink's alpha as this fraction (in [0, 1]) of the
        empirical improvement bound, resolved per sample. Exactly one of
        alpha / bound_fraction must be set for shrink.
    f_star: shrink target expansion; None is the zero target.
    """

    kind: str
    label: str | None = None
    lam: float | None = None
    lam_scale_gamma0: bool = False
    grid: tuple[float, ...] | None = None
    alpha: float | None = None
    bound_fraction: float | None = None
    positive_part: bool = False
    f_star: FunctionExpansion | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {_KINDS}")
        if self.lam is not None and self.kind not in ("r-kmse", "s-kmse"):
            raise ValueError(f"lam is only meaningful for r-kmse/s-kmse, not {self.kind}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"fixed lam must be positive, got {self.lam}")
        if self.lam_scale_gamma0 and self.lam is None:
            raise ValueError("lam_scale_gamma0 requires a fixed lam")
        if self.grid is not None:
            if self.kind != "s-kmse":
                raise ValueError("grid is only meaningful for s-kmse")
            if self.lam is not None:
                raise ValueError("grid and fixed lam are mutually exclusive")
        if self.kind == "shrink":
            if (self.alpha is None) == (self.bound_fraction is None):
                raise ValueError("shrink needs exactly one of alpha / bound_fraction")
            if self.alpha is not None and not (0.0 <= self.alpha < 2.0):
                raise ValueError(f"alpha must be in [0, 2), got {self.alpha}")
            if self.bound_fraction is not None and not (0.0 <= self.bound_fraction <= 1.0):
                raise ValueError(f"bound_fraction must be in [0, 1], got {self.bound_fraction}")
        else:
            for field_name in ("alpha", "bound_fraction", "f_star"):
                if getattr(self, field_name) is not None:
                    raise ValueError(f"{field_name} is only meaningful for shrink")
            if self.positive_part:
                raise ValueError("positive_part is only meaningful for shrink")

    @property
    def resolved_label(self) -> str:
        return self.label if self.label else _DEFAULT_LABELS[self.kind]


@dataclass(frozen=True)
class EstimatorResult:
    """One estimator's output on one sample."""

    alpha: float | None
    lam: float | None
    expansion: FunctionExpansion


def run_estimator(est: EstimatorSpec, K: GramMatrix, X) -> EstimatorResult:
    """Run the described estimator on a sample with its precomputed Gram."""
    if est.kind == "kme":
        return EstimatorResult(0.0, 0.0, kme(X))
    if est.kind == "b-kmse":
        selection, expansion = b_kmse(K, X)
        return EstimatorResult(selection.alpha, selection.lam, expansion)
    if est.kind == "r-kmse":
        if est.lam is None:
            selection, expansion = r_kmse(K, X)
            return EstimatorResult(selection.alpha, selection.lam, expansion)
        lam = est.lam * K.smallest_nonzero_eigenvalue() if est.lam_scale_gamma0 else est.lam
        weights = np.full(K.n, 1.0 / (K.n * (1.0 + lam)))
        return EstimatorResult(lam / (1.0 + lam), lam, FunctionExpansion(X, weights))
    if est.kind == "s-kmse":
        if est.lam is not None:
            lam = est.lam * K.smallest_nonzero_eigenvalue() if est.lam_scale_gamma0 else est.lam
        else:
            lam = s_kmse_select_lambda(K, est.grid)
        return EstimatorResult(None, lam, FunctionExpansion(X, s_kmse_weights(K, lam)))
    # shrink
    alpha = est.alpha
    if alpha is None:
        alpha = est.bound_fraction * empirical_alpha_bound(K)
    expansion = generic_shrinkage(kme(X), est.f_star, alpha, est.positive_part)
    return EstimatorResult(alpha, None, expansion)
