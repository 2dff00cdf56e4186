"""Closed-form kernel expectations under Gaussian mixture distributions.

For a mixture P with isotropic observation noise, every quantity the
experiments need is available exactly: the mean function E_x k(x, y),
the squared norm E_{x,xt} k(x, xt) of the kernel mean (x, xt independent
draws), the self term E_x k(x, x), the exact squared RKHS loss of any
finite expansion, and the risk of the empirical / shrunk means as a
function of the sample size.

All formulas work on the effective per-component covariance
S = sigma_c + noise_var * I. The polynomial cases reduce to moments of
the scalars x'y (Gaussian) and x'xt / |x|^2 (quadratic forms); the
Gaussian-kernel cases are convolution integrals. Each closed form is
pinned against a Monte Carlo oracle in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import NumericalError
from .kernels import Array, KernelFamily, KernelSpec, gram_matrix
from .estimators import FunctionExpansion

# Relative floor for clamping squared-norm quantities that are exactly
# nonnegative but suffer floating cancellation.
_SQ_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of Gaussians with additive isotropic observation noise.

    An observation is x = y + e where y comes from component c with
    probability weights[c], y ~ N(means[c], covariances[c]) and
    e ~ N(0, noise_var * I). Component covariances may be singular
    (e.g. low-rank factor constructions); only S_c + noise or
    S_c + bandwidth ever gets inverted.

    factors, when given, holds per-component matrices M_c with
    covariances[c] = M_c M_c'. Samplers use them directly so a singular
    covariance never needs factorizing.
    """

    weights: Array
    means: Array
    covariances: Array
    noise_var: float = 0.0
    factors: tuple[Array, ...] | None = None

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covariances = np.asarray(self.covariances, dtype=np.float64)
        if covariances.ndim == 2:
            covariances = covariances[np.newaxis]
        if weights.ndim != 1:
            raise ValueError(f"weights must be 1-D, got ndim={weights.ndim}")
        k = weights.shape[0]
        if np.any(weights < 0):
            raise ValueError("component weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"component weights must sum to 1, got {weights.sum()!r}")
        if means.shape[0] != k:
            raise ValueError(f"{k} weights but {means.shape[0]} means")
        d = means.shape[1]
        if covariances.shape != (k, d, d):
            raise ValueError(
                f"covariances must have shape {(k, d, d)}, got {covariances.shape}"
            )
        for c in range(k):
            sig = covariances[c]
            if not np.allclose(sig, sig.T, atol=1e-10 * max(1.0, float(np.abs(sig).max()))):
                raise ValueError(f"covariance of component {c} is not symmetric")
            eigs = np.linalg.eigvalsh(sig)
            if eigs.min() < -1e-8 * max(1.0, float(eigs.max())):
                raise ValueError(f"covariance of component {c} is not PSD")
        if not self.noise_var >= 0:
            raise ValueError(f"noise_var must be nonnegative, got {self.noise_var}")
        if self.factors is not None:
            if len(self.factors) != k:
                raise ValueError(f"{k} components but {len(self.factors)} factors")
            factors = tuple(np.asarray(m, dtype=np.float64) for m in self.factors)
            for c, m in enumerate(factors):
                if m.ndim != 2 or m.shape[0] != d:
                    raise ValueError(f"factor {c} must be d x r with d={d}, got {m.shape}")
                if not np.allclose(m @ m.T, covariances[c],
                                   atol=1e-8 * max(1.0, float(np.abs(covariances[c]).max()))):
                    raise ValueError(f"factor {c} does not reproduce its covariance")
            object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def effective_covariance(self, c: int) -> Array:
        """Covariance of an observed point from component c (noise included)."""
        return self.covariances[c] + self.noise_var * np.eye(self.d)

    @classmethod
    def single(cls, theta, sigma, noise_var: float = 0.0) -> "GaussianMixture":
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return cls(np.array([1.0]), theta[np.newaxis], np.asarray(sigma)[np.newaxis],
                   noise_var=noise_var)


def _dot_moments(theta_a: Array, cov_a: Array, theta_b: Array,
                 cov_b: Array | None) -> tuple[float, float, float]:
    """First three raw moments of s = x'xt, x ~ N(theta_a, cov_a) indep of xt.

    cov_b = None makes xt the point mass at theta_b, which covers the
    fixed-argument kernels k(x, y).
    """
    m1 = float(theta_a @ theta_b)
    var_from_a = float(theta_b @ cov_a @ theta_b)
    if cov_b is None:
        var_from_b = 0.0
        trace_term = 0.0
        mixed = 0.0
    else:
        var_from_b = float(theta_a @ cov_b @ theta_a)
        trace_term = float(np.sum(cov_a * cov_b.T))
        mixed = float(theta_b @ cov_a @ cov_b @ theta_a)
    var = var_from_a + var_from_b + trace_term
    m2 = m1 * m1 + var
    m3 = m1 ** 3 + 3.0 * m1 * var + 6.0 * mixed
    return m1, m2, m3


def _sqnorm_moments(theta: Array, cov: Array) -> tuple[float, float, float]:
    """First three raw moments of q = |x|^2, x ~ N(theta, cov).

    Via the cumulants of a Gaussian quadratic form: kappa_r =
    2^{r-1} (r-1)! (tr cov^r + r theta' cov^{r-1} theta).
    """
    k1 = float(np.trace(cov)) + float(theta @ theta)
    cov2 = cov @ cov
    k2 = 2.0 * float(np.trace(cov2)) + 4.0 * float(theta @ cov @ theta)
    k3 = 8.0 * float(np.trace(cov2 @ cov)) + 24.0 * float(theta @ cov2 @ theta)
    q1 = k1
    q2 = k2 + k1 * k1
    q3 = k3 + 3.0 * k2 * k1 + k1 ** 3
    return q1, q2, q3


def _rbf_convolution(diff: Array, smoothed_cov: Array, sigma2: float, d: int) -> Array:
    """(sigma2)^{d/2} det(V)^{-1/2} exp(-diff' V^{-1} diff / 2) columnwise.

    diff has shape (d, q); smoothed_cov = V must already include the
    + sigma2 * I widening (and any component covariances).
    """
    try:
        factor = cho_factor(smoothed_cov, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise ValueError("effective covariance not positive definite") from exc
    half_logdet = float(np.sum(np.log(np.diag(factor[0]))))
    quad = np.sum(diff * cho_solve(factor, diff, check_finite=False), axis=0)
    return np.exp(0.5 * d * np.log(sigma2) - half_logdet - 0.5 * quad)


def expected_kernel_at(spec: KernelSpec, P: GaussianMixture, y):
    """Mean function of P at y: E_{x~P} k(x, y).

    y may be a single d-vector (returns a float) or a q x d batch
    (returns a length-q array).
    """
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 1
    Y = np.atleast_2d(y)
    if Y.shape[1] != P.d:
        raise ValueError(f"y has dimension {Y.shape[1]}, mixture has {P.d}")
    total = np.zeros(Y.shape[0])
    for c in range(P.n_components):
        theta = P.means[c]
        cov = P.effective_covariance(c)
        if spec.family is KernelFamily.RBF:
            vals = _rbf_convolution((Y - theta).T, cov + spec.sigma2 * np.eye(P.d),
                                    spec.sigma2, P.d)
        else:
            m = Y @ theta
            if spec.family is KernelFamily.LINEAR:
                vals = m
            else:
                v = np.einsum("qd,de,qe->q", Y, cov, Y)
                if spec.family is KernelFamily.POLY2:
                    vals = m * m + v + 2.0 * m + 1.0
                else:
                    m3 = m ** 3 + 3.0 * m * v
                    vals = m3 + 3.0 * (m * m + v) + 3.0 * m + 1.0
        total += P.weights[c] * vals
    return float(total[0]) if scalar else total


def expected_self_kernel(spec: KernelSpec, P: GaussianMixture) -> float:
    """Diagonal expectation E_{x~P} k(x, x)."""
    if spec.family is KernelFamily.RBF:
        return 1.0
    total = 0.0
    for c in range(P.n_components):
        theta = P.means[c]
        cov = P.effective_covariance(c)
        if spec.family is KernelFamily.LINEAR:
            val = float(np.trace(cov)) + float(theta @ theta)
        else:
            q1, q2, q3 = _sqnorm_moments(theta, cov)
            if spec.family is KernelFamily.POLY2:
                val = q2 + 2.0 * q1 + 1.0
            else:
                val = q3 + 3.0 * q2 + 3.0 * q1 + 1.0
        total += P.weights[c] * val
    return float(total)


def expected_kernel_double(spec: KernelSpec, P: GaussianMixture) -> float:
    """Squared RKHS norm of the kernel mean: E k(x, xt), x and xt independent."""
    k = P.n_components
    total = 0.0
    for a in range(k):
        theta_a = P.means[a]
        cov_a = P.effective_covariance(a)
        for b in range(k):
            theta_b = P.means[b]
            cov_b = P.effective_covariance(b)
            if spec.family is KernelFamily.RBF:
                diff = (theta_a - theta_b)[:, np.newaxis]
                val = float(_rbf_convolution(
                    diff, cov_a + cov_b + spec.sigma2 * np.eye(P.d), spec.sigma2, P.d)[0])
            else:
                m1, m2, m3 = _dot_moments(theta_a, cov_a, theta_b, cov_b)
                if spec.family is KernelFamily.LINEAR:
                    val = m1
                elif spec.family is KernelFamily.POLY2:
                    val = m2 + 2.0 * m1 + 1.0
                else:
                    val = m3 + 3.0 * m2 + 3.0 * m1 + 1.0
            total += float(P.weights[a] * P.weights[b]) * val
    return total


def _clamp_sq(value: float, scale: float, what: str) -> float:
    """Clamp a mathematically nonnegative quantity; reject real negatives."""
    floor = -_SQ_FLOOR_REL * max(1.0, scale)
    if value < floor:
        raise NumericalError(f"{what} = {value:.3e} is negative beyond the floating floor")
    return max(value, 0.0)


def true_loss(expansion: FunctionExpansion, spec: KernelSpec, P: GaussianMixture) -> float:
    """Exact squared RKHS distance between an expansion and the mean of P.

    w'Kw - 2 sum_j w_j E k(x, u_j) + E k(x, xt); the zero expansion
    gives the squared norm of the mean itself.
    """
    mu_sq = expected_kernel_double(spec, P)
    if expansion.m == 0:
        return mu_sq
    if expansion.d != P.d:
        raise ValueError(f"expansion has dimension {expansion.d}, mixture has {P.d}")
    K = gram_matrix(spec, expansion.points)
    quad = float(expansion.weights @ K.entries @ expansion.weights)
    cross = float(expansion.weights @ expected_kernel_at(spec, P, expansion.points))
    return _clamp_sq(quad - 2.0 * cross + mu_sq, quad + mu_sq, "squared loss")


def theoretical_risk(spec: KernelSpec, P: GaussianMixture, n: int) -> float:
    """Expected squared loss of the n-point empirical kernel mean.

    (E k(x,x) - E k(x,xt)) / n; zero exactly when P is a point mass
    (for the kernels here with noise_var = 0 and zero covariance).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    self_term = expected_self_kernel(spec, P)
    return _clamp_sq(self_term - expected_kernel_double(spec, P), abs(self_term),
                     "risk numerator") / n


def target_distance_sq(spec: KernelSpec, P: GaussianMixture,
                       f_star: FunctionExpansion | None) -> float:
    """Squared RKHS distance from a shrinkage target to the mean of P.

    f_star = None is the zero target, giving the squared mean norm.
    """
    if f_star is None:
        return expected_kernel_double(spec, P)
    return true_loss(f_star, spec, P)


def optimal_alpha(spec: KernelSpec, P: GaussianMixture,
                  f_star: FunctionExpansion | None, n: int) -> float:
    """Risk-minimizing shrinkage intensity toward f_star at sample size n.

    risk / (risk + squared target distance), in (0, 1] whenever defined.
    Undefined when both terms vanish (point-mass P with the target
    sitting exactly on its mean).
    """
    risk = theoretical_risk(spec, P, n)
    dist_sq = target_distance_sq(spec, P, f_star)
    denom = risk + dist_sq
    if denom <= 0.0:
        raise ValueError("optimal shrinkage undefined: risk and target distance are both zero")
    return risk / denom


def shrinkage_risk(alpha: float, spec: KernelSpec, P: GaussianMixture,
                   f_star: FunctionExpansion | None, n: int) -> float:
    """Expected squared loss of alpha * f_star + (1 - alpha) * empirical mean.

    alpha^2 |f_star - mu|^2 + (1 - alpha)^2 risk: a parabola in alpha
    with vertex at optimal_alpha, below the unshrunk risk exactly on
    alpha in (0, 2 * optimal_alpha).
    """
    risk = theoretical_risk(spec, P, n)
    dist_sq = target_distance_sq(spec, P, f_star)
    if risk + dist_sq <= 0.0:
        raise ValueError("optimal shrinkage undefined: risk and target distance are both zero")
    return alpha * alpha * dist_sq + (1.0 - alpha) * (1.0 - alpha) * risk


def uniform_alpha_bound(A: float, n: int, f_star_norm: float = 0.0,
                        psi0: float = 1.0) -> float:
    """Distribution-free improvement endpoint for translation-invariant kernels.

    Over every P whose mean-norm ratio E k(x,xt) / E k(x,x) stays below
    A, any alpha in (0, bound] improves on the empirical mean, where

        bound = 2(1-A) / (1 + (n-1)A + n r^2 / psi0 + 2 n sqrt(A) r / sqrt(psi0))

    with r the RKHS norm of the shrinkage target and psi0 = k(x, x).
    """
    if not (0.0 < A < 1.0):
        raise ValueError(f"A must be in (0, 1), got {A}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if f_star_norm < 0:
        raise ValueError(f"f_star_norm must be nonnegative, got {f_star_norm}")
    if not psi0 > 0:
        raise ValueError(f"psi0 must be positive, got {psi0}")
    denom = (1.0 + (n - 1) * A + n * f_star_norm ** 2 / psi0
             + 2.0 * n * np.sqrt(A) * f_star_norm / np.sqrt(psi0))
    return 2.0 * (1.0 - A) / denom
