"""Seeded synthetic data generators.

Skew-normal mixtures (univariate and multivariate with banded correlation),
plain Gaussian mixtures, and Poisson matrix-factorization data under four
generation schemes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


def correlation_matrix(dim: int, sigma_corr: float) -> np.ndarray:
    """Banded correlation C_ij = exp(-(i-j)^2 / sigma_corr^2); unit diagonal."""
    if not sigma_corr > 0:
        raise ValueError("sigma_corr must be positive")
    idx = np.arange(dim)
    return np.exp(-((idx[:, None] - idx[None, :]) ** 2) / sigma_corr**2)


def cholesky_psd(c: np.ndarray) -> np.ndarray:
    """Cholesky with escalating diagonal jitter.

    Wide banded correlations are positive definite in exact arithmetic but
    their smallest eigenvalues round below zero in float (e.g. D=100 with
    sigma_corr=5), so the plain factorization can fail on valid input."""
    for jitter in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        try:
            return np.linalg.cholesky(c + jitter * np.eye(c.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("matrix is not positive semidefinite")


@dataclass(frozen=True)
class SkewMixtureSpec:
    """Mixture of multivariate skew normals.

    weights: (K,) simplex. locations/shapes: (K, D). scales: per-coordinate
    scale multipliers (K, D), default all-ones. sigma_corr: if given, all
    components share the banded correlation matrix; otherwise coordinates are
    independent.
    """

    weights: np.ndarray
    locations: np.ndarray
    shapes: np.ndarray
    scales: Optional[np.ndarray] = None
    sigma_corr: Optional[float] = None
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_2d(np.asarray(self.locations, dtype=float))
        g = np.atleast_2d(np.asarray(self.shapes, dtype=float))
        if m.shape[0] != w.shape[0]:
            m = m.T
        if g.shape[0] != w.shape[0]:
            g = g.T
        s = self.scales
        if s is None:
            s = np.ones_like(m)
        else:
            s = np.atleast_2d(np.asarray(s, dtype=float))
            if s.shape[0] != w.shape[0]:
                s = s.T
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", m)
        object.__setattr__(self, "shapes", g)
        object.__setattr__(self, "scales", s)
        if not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must sum to 1")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if m.shape != g.shape or m.shape != s.shape:
            raise ValueError("locations, shapes and scales must share one shape")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]


def _sample_skew_component(rng, n, location, scale, shape, chol):
    """Skew-normal draws via the |z0| representation, per coordinate, then
    correlated through chol and moved to location."""
    d = location.shape[0]
    delta = shape / np.sqrt(1.0 + shape**2)
    z0 = np.abs(rng.standard_normal((n, d)))
    z1 = rng.standard_normal((n, d))
    s = delta * z0 + np.sqrt(1.0 - delta**2) * z1
    if chol is not None:
        s = s @ chol.T
    return location + scale * s


def gen_skew_normal_mixture(spec: SkewMixtureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Sample (X, labels) from a skew-normal mixture. Deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    labels = rng.choice(spec.k, size=spec.n, p=spec.weights)
    chol = None
    if spec.sigma_corr is not None:
        chol = cholesky_psd(correlation_matrix(spec.dim, spec.sigma_corr))
    x = np.empty((spec.n, spec.dim))
    for k in range(spec.k):
        mask = labels == k
        x[mask] = _sample_skew_component(
            rng, int(mask.sum()), spec.locations[k], spec.scales[k], spec.shapes[k], chol
        )
    return x, labels


def skew_scenario(name: str, n: int = 10000, seed: int = 0) -> SkewMixtureSpec:
    """Named univariate two-component scenarios.

    "different": locations (-3, 3), unit scales, shapes (-10, -1).
    "same": identical except shapes (-10, -10).
    """
    shapes = {"different": [[-10.0], [-1.0]], "same": [[-10.0], [-10.0]]}
    if name not in shapes:
        raise ValueError(f"unknown scenario {name!r}")
    return SkewMixtureSpec(
        weights=[0.5, 0.5],
        locations=[[-3.0], [3.0]],
        shapes=shapes[name],
        scales=[[1.0], [1.0]],
        n=n,
        seed=seed,
    )


def gen_gmm(weights, means, covariances, n: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Sample (X, labels) from a Gaussian mixture. covariances: (K, D, D) or
    (K, D) diagonal vectors."""
    weights = np.asarray(weights, dtype=float)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if means.shape[0] != weights.shape[0]:
        means = means.T
    covs = np.asarray(covariances, dtype=float)
    if not np.isclose(weights.sum(), 1.0, atol=1e-9):
        raise ValueError("weights must sum to 1")
    rng = np.random.default_rng(seed)
    k_o, d = means.shape
    labels = rng.choice(k_o, size=n, p=weights)
    x = np.empty((n, d))
    for k in range(k_o):
        mask = labels == k
        m = int(mask.sum())
        if covs.ndim == 2:
            x[mask] = means[k] + np.sqrt(covs[k]) * rng.standard_normal((m, d))
        else:
            chol = np.linalg.cholesky(covs[k])
            x[mask] = means[k] + rng.standard_normal((m, d)) @ chol.T
    return x, labels


@dataclass(frozen=True)
class PmfSynthSpec:
    """Poisson matrix-factorization ground truth plus a generation scheme.

    signatures: (K_o, D) rows on the simplex. loadings: (N, K_o) nonnegative.
    scheme: well-specified | perturbed | contaminated | overdispersed.
    scale: Dirichlet jitter scale for "perturbed" (concentration = row/scale).
    exposure: contamination loading as a fraction of mean(loadings).
    dispersion: negative-binomial r for "overdispersed" (Var = mu + mu^2/r).
    """

    signatures: np.ndarray
    loadings: np.ndarray
    scheme: str = "well-specified"
    scale: float = 0.05
    exposure: float = 0.05
    dispersion: float = 2.0
    seed: int = 0

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.signatures, dtype=float))
        z = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        object.__setattr__(self, "signatures", phi)
        object.__setattr__(self, "loadings", z)
        if z.shape[1] != phi.shape[0]:
            raise ValueError("loadings columns must match signature rows")
        if np.any(phi < 0) or np.any(z < 0):
            raise ValueError("signatures and loadings must be nonnegative")
        if not np.allclose(phi.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("signature rows must sum to 1")
        if self.scheme not in (
            "well-specified",
            "perturbed",
            "contaminated",
            "overdispersed",
        ):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "perturbed" and not self.scale > 0:
            raise ValueError("perturbed scheme needs scale > 0")
        if self.scheme == "overdispersed" and not self.dispersion > 0:
            raise ValueError("overdispersed scheme needs dispersion > 0")


def gen_pmf_data(spec: PmfSynthSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate (X, signatures, loadings); X is an integer count matrix and the
    returned ground truth never includes the contamination component."""
    rng = np.random.default_rng(spec.seed)
    phi = spec.signatures
    z = spec.loadings
    n, k_o = z.shape
    d = phi.shape[1]
    if spec.scheme == "perturbed":
        conc = np.maximum(phi / spec.scale, 1e-12)
        mean = np.empty((n, d))
        for i in range(n):
            jittered = np.vstack([rng.dirichlet(conc[k]) for k in range(k_o)])
            mean[i] = z[i] @ jittered
    else:
        mean = z @ phi
    if spec.scheme == "contaminated":
        contam_sig = rng.dirichlet(np.ones(d))
        contam_load = spec.exposure * float(z.mean())
        mean = mean + contam_load * contam_sig[None, :]
    if spec.scheme == "overdispersed":
        r = spec.dispersion
        x = rng.negative_binomial(r, r / (r + np.maximum(mean, 1e-12)))
    else:
        x = rng.poisson(mean)
    return x.astype(np.int64), phi.copy(), z.copy()


def random_pmf_truth(
    k_o: int, n: int, d: int, seed: int = 0, loading_shape: float = 2.0, loading_scale: float = 50.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Random simplex signatures (Dirichlet(1)) and gamma loadings."""
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.ones(d), size=k_o)
    z = rng.gamma(loading_shape, loading_scale, size=(n, k_o))
    return phi, z
