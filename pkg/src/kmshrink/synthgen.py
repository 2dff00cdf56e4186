"""Deterministic synthetic data: random Gaussian mixtures and samples.

Randomness comes from numpy's Philox counter-based bit generator keyed
by an explicit 64-bit seed, so every output is reproducible across
platforms and across serial/parallel execution. Replicate seeds are
derived from a master seed with a splitmix64 mix rather than by
incrementing, so nearby master seeds do not share streams.

Mixtures follow a fixed recipe: component means uniform per coordinate,
component covariances as definitional Wishart sums of df outer products
(valid and deliberately rank-deficient when df < d), plus isotropic
observation noise added at sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import Array
from .moments import GaussianMixture

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit stream key for item `index` under a master seed."""
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ _splitmix64(index & _MASK64))


def rng(seed: int) -> np.random.Generator:
    """Philox generator keyed directly by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@dataclass(frozen=True)
class GeneratorConfig:
    """Recipe for drawing a random Gaussian mixture.

    Means are i.i.d. uniform over mean_range per coordinate; each
    component covariance is a sum of wishart_df outer products of
    N(0, wishart_scale * I) vectors, so E[cov] = df * scale * I and the
    rank is min(df, d).
    """

    d: int
    n_components: int = 4
    mean_range: tuple[float, float] = (-10.0, 10.0)
    wishart_scale: float = 2.0
    wishart_df: int = 7
    noise_var: float = 0.2
    pi: tuple[float, ...] = (0.05, 0.3, 0.4, 0.25)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n_components < 1:
            raise ValueError(f"n_components must be >= 1, got {self.n_components}")
        lo, hi = self.mean_range
        if not lo < hi:
            raise ValueError(f"mean_range must be increasing, got {self.mean_range}")
        if not self.wishart_scale > 0:
            raise ValueError(f"wishart_scale must be positive, got {self.wishart_scale}")
        if self.wishart_df < 1:
            raise ValueError(f"wishart_df must be >= 1, got {self.wishart_df}")
        if not self.noise_var >= 0:
            raise ValueError(f"noise_var must be nonnegative, got {self.noise_var}")
        pi = tuple(float(p) for p in self.pi)
        if len(pi) != self.n_components:
            raise ValueError(f"pi has {len(pi)} entries for {self.n_components} components")
        if any(p < 0 for p in pi):
            raise ValueError("pi entries must be nonnegative")
        if abs(sum(pi) - 1.0) > 1e-12:
            raise ValueError(f"pi must sum to 1, got {sum(pi)!r}")
        object.__setattr__(self, "pi", pi)


def draw_mixture(cfg: GeneratorConfig) -> GaussianMixture:
    """Draw one mixture per the recipe, deterministically from cfg.seed."""
    g = rng(cfg.seed)
    k, d = cfg.n_components, cfg.d
    means = g.uniform(cfg.mean_range[0], cfg.mean_range[1], size=(k, d))
    factors = np.sqrt(cfg.wishart_scale) * g.standard_normal((k, d, cfg.wishart_df))
    covariances = factors @ factors.transpose(0, 2, 1)
    return GaussianMixture(np.array(cfg.pi), means, covariances,
                           noise_var=cfg.noise_var,
                           factors=tuple(factors[c] for c in range(k)))


def _component_factors(P: GaussianMixture) -> tuple[Array, ...]:
    """Per-component M_c with cov_c = M_c M_c', without Cholesky on singulars."""
    if P.factors is not None:
        return P.factors
    out = []
    for c in range(P.n_components):
        vals, vecs = np.linalg.eigh(P.covariances[c])
        out.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
    return tuple(out)


def sample(P: GaussianMixture, n: int, seed: int) -> Array:
    """Draw n observed points x = y + noise from the mixture.

    All random blocks (component labels, shape draws, noise draws) are
    generated up front in fixed order, so the output depends only on
    (P, n, seed) and never on masking order.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    g = rng(seed)
    labels_cut = np.cumsum(P.weights)
    comp = np.searchsorted(labels_cut, g.random(n), side="right")
    comp = np.minimum(comp, P.n_components - 1)
    factors = _component_factors(P)
    r_max = max(m.shape[1] for m in factors)
    shape_draws = g.standard_normal((n, r_max))
    noise_draws = g.standard_normal((n, P.d))
    X = np.empty((n, P.d))
    for c in range(P.n_components):
        mask = comp == c
        if not np.any(mask):
            continue
        m = factors[c]
        X[mask] = P.means[c] + shape_draws[mask, : m.shape[1]] @ m.T
    if P.noise_var > 0:
        X += np.sqrt(P.noise_var) * noise_draws
    return X
