"""Reference implementations the tests trust instead of the package.

Everything here is deliberately naive: direct solves per fold, explicit
double loops, textbook definitions. Monte Carlo draws use numpy's
default PCG64 generator so they share nothing with the package's Philox
streams.
"""

import numpy as np


def naive_s_loocv(K: np.ndarray, lam: float) -> float:
    """Leave-one-out score of the spectral rule by per-fold recomputation.

    Each fold rebuilds the estimate on its n-1 points at the same lam
    (regularizer (n-1)*lam) with a plain linear solve and measures the
    squared RKHS distance to the held-out feature map.
    """
    n = K.shape[0]
    total = 0.0
    for i in range(n):
        keep = [j for j in range(n) if j != i]
        sub = K[np.ix_(keep, keep)]
        m = n - 1
        w = np.linalg.solve(sub + m * lam * np.eye(m), sub @ np.full(m, 1.0 / m))
        total += K[i, i] - 2.0 * (K[i, keep] @ w) + w @ sub @ w
    return total / n


def uniform_loocv(K: np.ndarray, lam: float) -> float:
    """Leave-one-out score of uniform shrinkage by 1/(1+lam).

    Fold i drops point i and scores |k(x_i,.) - c/(n-1) sum_{j!=i}
    k(x_j,.)|^2 with c = 1/(1+lam); averaged over folds. Vectorized with
    row sums only, no estimator code involved.
    """
    n = K.shape[0]
    c = 1.0 / (1.0 + lam)
    a = c / (n - 1)
    row = K.sum(axis=1)
    total = K.sum()
    diag = np.diag(K)
    terms = a * a * (total - 2.0 * row + diag) - 2.0 * a * (row - diag) + diag
    return float(terms.mean())


def brute_empirical_risk(K: np.ndarray) -> float:
    """Plug-in risk of the empirical mean via explicit double loops."""
    n = K.shape[0]
    diag_mean = sum(K[i, i] for i in range(n)) / n
    full_mean = sum(K[i, j] for i in range(n) for j in range(n)) / (n * n)
    return (diag_mean - full_mean) / (n - 1)


def mixture_factors(covariances: np.ndarray) -> list:
    """PSD square roots via eigendecomposition, eigenvalues clipped at 0."""
    out = []
    for cov in covariances:
        vals, vecs = np.linalg.eigh(cov)
        out.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
    return out


def draw_mixture_points(g: np.random.Generator, weights, means, covariances,
                        noise_var: float, n: int) -> np.ndarray:
    """Plain mixture sampler for Monte Carlo oracles."""
    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    k, d = means.shape
    comp = g.choice(k, size=n, p=weights)
    roots = mixture_factors(np.asarray(covariances, dtype=np.float64))
    X = np.empty((n, d))
    for c in range(k):
        mask = comp == c
        m = int(mask.sum())
        if m:
            X[mask] = means[c] + g.standard_normal((m, d)) @ roots[c].T
    if noise_var > 0:
        X += np.sqrt(noise_var) * g.standard_normal((n, d))
    return X


def mc_mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
