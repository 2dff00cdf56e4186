"""Kernel evaluation, Gram matrices, bandwidth selection and centering.

Four kernel families are used throughout the package: the linear kernel
x.y, the polynomial kernels (x.y + 1)^2 and (x.y + 1)^3, and the
Gaussian RBF kernel exp(-||x - y||^2 / (2*sigma2)). All estimators
downstream consume precomputed Gram matrices, so this module is the only
place kernel values are ever produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DegenerateBandwidthError, DegenerateGramError

Array = NDArray[np.float64]

# Relative cutoff separating numerically-zero eigenvalues from real ones.
_EIG_ZERO_REL = 1e-12


class KernelFamily(Enum):
    LINEAR = "linear"
    POLY2 = "poly2"
    POLY3 = "poly3"
    RBF = "rbf"


_POLY_DEGREE = {KernelFamily.POLY2: 2, KernelFamily.POLY3: 3}


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel choice.

    sigma2 is the squared RBF bandwidth; it is required for the RBF
    family and must be absent for every other family. The polynomial
    families use the fixed offset 1 and degrees 2 and 3.
    """

    family: KernelFamily
    sigma2: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is KernelFamily.RBF:
            if self.sigma2 is None:
                raise ValueError("RBF kernel requires sigma2")
            sigma2 = float(self.sigma2)
            if not (np.isfinite(sigma2) and sigma2 > 0):
                raise ValueError(f"RBF kernel requires finite sigma2 > 0, got {self.sigma2}")
            object.__setattr__(self, "sigma2", sigma2)
        elif self.sigma2 is not None:
            raise ValueError(f"{self.family.value} kernel takes no sigma2")


class GramMatrix:
    """Symmetric PSD kernel matrix with a cached eigendecomposition.

    Symmetry is validated entrywise on construction (tolerance
    1e-12 * max(1, |entry|)). Positive semidefiniteness up to
    -1e-8 * largest eigenvalue can be asserted with validate_psd; it
    holds by construction for gram_matrix and centered_product_gram
    outputs.
    """

    def __init__(self, entries: Array) -> None:
        entries = np.ascontiguousarray(entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {entries.shape}")
        if entries.size:
            tol = 1e-12 * np.maximum(1.0, np.abs(entries))
            if np.any(np.abs(entries - entries.T) > tol):
                raise ValueError("Gram matrix is not symmetric within tolerance")
        self.entries = entries

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _eigh(self) -> tuple[Array, Array]:
        vals, vecs = np.linalg.eigh(self.entries)
        return vals, vecs

    @property
    def eigenvalues(self) -> Array:
        """Eigenvalues in ascending order (cached)."""
        return self._eigh[0]

    @property
    def eigenvectors(self) -> Array:
        """Orthonormal eigenvectors as columns, matching eigenvalues (cached)."""
        return self._eigh[1]

    def smallest_nonzero_eigenvalue(self) -> float:
        """Smallest eigenvalue above the numerical-zero cutoff."""
        vals = self.eigenvalues
        cutoff = _EIG_ZERO_REL * max(float(vals[-1]), 0.0) if vals.size else 0.0
        nonzero = vals[vals > cutoff]
        if nonzero.size == 0:
            raise DegenerateGramError("Gram matrix has no nonzero eigenvalue")
        return float(nonzero[0])

    def validate_psd(self) -> None:
        """Raise if the smallest eigenvalue is below -1e-8 * the largest."""
        vals = self.eigenvalues
        if vals.size and float(vals[0]) < -1e-8 * max(float(vals[-1]), 0.0):
            raise ValueError(
                f"Gram matrix is not PSD within tolerance: "
                f"eigenvalue range [{vals[0]:.3e}, {vals[-1]:.3e}]"
            )

    def __repr__(self) -> str:
        return f"GramMatrix(n={self.n})"


def _as_points(X, name: str = "X") -> Array:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got ndim={X.ndim}")
    return X


def _mirror(m: Array) -> Array:
    """Copy the upper triangle onto the lower one so symmetry is exact."""
    upper = np.triu(m, 1)
    return upper + upper.T + np.diag(np.diag(m))


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Kernel value k(x, y) for two points of the same dimension."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"x and y must be 1-D of equal length, got {x.shape} and {y.shape}")
    if spec.family is KernelFamily.LINEAR:
        return float(x @ y)
    if spec.family in _POLY_DEGREE:
        return float((x @ y + 1.0) ** _POLY_DEGREE[spec.family])
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.sigma2)))


def gram_matrix(spec: KernelSpec, X) -> GramMatrix:
    """Pairwise kernel matrix of the rows of X, exactly symmetric."""
    X = _as_points(X)
    if X.shape[0] < 1:
        raise ValueError("gram_matrix needs at least one point")
    if spec.family is KernelFamily.RBF:
        # pdist/squareform gives an exactly symmetric distance matrix with an
        # exactly zero diagonal, so the RBF diagonal is exactly 1.
        d2 = squareform(pdist(X, "sqeuclidean"))
        return GramMatrix(np.exp(-d2 / (2.0 * spec.sigma2)))
    base = X @ X.T
    if spec.family is KernelFamily.LINEAR:
        return GramMatrix(_mirror(base))
    return GramMatrix(_mirror((base + 1.0) ** _POLY_DEGREE[spec.family]))


def cross_gram(spec: KernelSpec, X, Y) -> Array:
    """Kernel values between the rows of X and the rows of Y (n x m)."""
    X = _as_points(X, "X")
    Y = _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: X has d={X.shape[1]}, Y has d={Y.shape[1]}")
    if spec.family is KernelFamily.RBF:
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * spec.sigma2))
    base = X @ Y.T
    if spec.family is KernelFamily.LINEAR:
        return base
    return (base + 1.0) ** _POLY_DEGREE[spec.family]


def median_heuristic(X) -> float:
    """RBF bandwidth sigma2 = median of the off-diagonal squared distances.

    Only pairs i < j enter the median; the n guaranteed zeros on the
    diagonal are excluded. An even pair count takes the average of the
    two middle values.
    """
    X = _as_points(X)
    if X.shape[0] < 2:
        raise ValueError("median_heuristic needs at least two points")
    d2 = pdist(X, "sqeuclidean")
    med = float(np.median(d2))
    if med <= 0.0:
        if float(d2.max()) == 0.0:
            raise DegenerateBandwidthError("all points identical: median bandwidth is 0")
        raise DegenerateBandwidthError(
            "more than half of the point pairs coincide: median bandwidth is 0"
        )
    return med


def centered_product_gram(k_x: GramMatrix, k_y: GramMatrix) -> GramMatrix:
    """Entrywise product of the doubly-centered factors (H Kx H) o (H Ky H).

    H = I - (1/n) 11' removes the constant component of each factor; the
    Schur product of the two centered PSD matrices is again PSD. Feeding
    the result to any estimator shrinks the empirical cross-covariance
    operator in the product space of the two kernels.
    """
    if k_x.n != k_y.n:
        raise ValueError(f"size mismatch: {k_x.n} vs {k_y.n}")
    n = k_x.n
    if n < 2:
        raise ValueError("centered_product_gram needs n >= 2")
    h = np.eye(n) - np.full((n, n), 1.0 / n)
    cx = h @ k_x.entries @ h
    cy = h @ k_y.entries @ h
    return GramMatrix(_mirror(cx * cy))
