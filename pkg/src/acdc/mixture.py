"""Gaussian mixture fitting and component-level discrepancies.

EM with restarts, posterior responsibilities, seeded component-assignment
draws, and per-component discrepancy estimates of the assigned observations
against the fitted component density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .divergence import (
    DivergenceConfig,
    gaussian_oracle,
    kl_knn_one_sample,
    kl_knn_per_coordinate,
    mmd,
    sinkhorn_unbalanced,
)

_DEGENERATE_MASS = 1e-8


class DegenerateComponentError(RuntimeError):
    """Every EM restart lost a component (responsibility mass ~ 0)."""


@dataclass(frozen=True)
class MixtureParams:
    """Fitted mixture: weights (K,), means (K, D), covariances (K, D, D) in
    full mode or (K, D) diagonal variances in diagonal mode."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covariances, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)
        if not np.isclose(w.sum(), 1.0, atol=1e-9):
            raise ValueError("weights must sum to 1")
        if m.shape[0] != w.shape[0] or c.shape[0] != w.shape[0]:
            raise ValueError("component count mismatch across fields")
        if c.ndim not in (2, 3):
            raise ValueError("covariances must be (K, D) diagonal or (K, D, D) full")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def diagonal(self) -> bool:
        return self.covariances.ndim == 2

    def component_cov(self, k: int) -> np.ndarray:
        if self.diagonal:
            return np.diag(self.covariances[k])
        return self.covariances[k]

    def permuted(self, order) -> "MixtureParams":
        order = np.asarray(order, dtype=int)
        return MixtureParams(
            weights=self.weights[order],
            means=self.means[order],
            covariances=self.covariances[order],
        )


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 300
    tol: float = 1e-7
    n_restarts: int = 5
    cov_mode: str = "auto"  # auto | full | diagonal
    cov_reg: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.cov_mode not in ("auto", "full", "diagonal"):
            raise ValueError(f"unknown cov_mode {self.cov_mode!r}")
        if self.cov_reg is not None and not self.cov_reg > 0:
            raise ValueError("cov_reg must be positive")
        if self.max_iters < 1 or self.n_restarts < 1:
            raise ValueError("max_iters and n_restarts must be positive")


def _resolve_cov_mode(cov_mode: str, dim: int) -> str:
    if cov_mode == "auto":
        return "full" if dim <= 10 else "diagonal"
    return cov_mode


def _log_gauss(data: np.ndarray, mean: np.ndarray, cov: np.ndarray, diagonal: bool) -> np.ndarray:
    d = data.shape[1]
    if diagonal:
        var = cov
        return -0.5 * (
            d * np.log(2.0 * np.pi)
            + np.sum(np.log(var))
            + np.sum((data - mean) ** 2 / var, axis=1)
        )
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (data - mean).T)
    return (
        -0.5 * d * np.log(2.0 * np.pi)
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * np.sum(z * z, axis=0)
    )


def _log_joint(params: MixtureParams, data: np.ndarray) -> np.ndarray:
    """log(eta_k) + log N(x_n; mu_k, Sigma_k), shape (N, K)."""
    out = np.empty((data.shape[0], params.k))
    for k in range(params.k):
        cov = params.covariances[k]
        out[:, k] = np.log(max(params.weights[k], 1e-300)) + _log_gauss(
            data, params.means[k], cov, params.diagonal
        )
    return out


def gmm_loglik(params: MixtureParams, data: np.ndarray) -> float:
    return float(np.sum(logsumexp(_log_joint(params, data), axis=1)))


def _kmeanspp_means(data: np.ndarray, k: int, rng) -> np.ndarray:
    n = data.shape[0]
    means = [data[rng.integers(n)]]
    d2 = np.sum((data - means[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            means.append(data[rng.integers(n)])
            continue
        means.append(data[rng.choice(n, p=d2 / total)])
        d2 = np.minimum(d2, np.sum((data - means[-1]) ** 2, axis=1))
    return np.array(means)


class _RestartDegenerate(Exception):
    pass


def em_single_run(
    data: np.ndarray, k: int, cfg: EmConfig, rng
) -> Tuple[MixtureParams, float, np.ndarray]:
    """One EM run from a k-means++ start; returns (params, loglik, trace).

    Raises _RestartDegenerate when a component's responsibility mass collapses.
    """
    n, d = data.shape
    mode = _resolve_cov_mode(cfg.cov_mode, d)
    diagonal = mode == "diagonal"
    pooled = np.cov(data, rowvar=False).reshape(d, d) if n > 1 else np.eye(d)
    reg = cfg.cov_reg
    if reg is None:
        reg = 1e-6 * max(np.trace(pooled) / d, 1e-12)
    means = _kmeanspp_means(data, k, rng)
    if diagonal:
        covs = np.tile(np.diag(pooled) + reg, (k, 1))
    else:
        covs = np.tile(pooled + reg * np.eye(d), (k, 1, 1))
    weights = np.full(k, 1.0 / k)
    params = MixtureParams(weights, means, covs)
    trace = []
    prev = -np.inf
    for _ in range(cfg.max_iters):
        log_joint = _log_joint(params, data)
        log_norm = logsumexp(log_joint, axis=1)
        loglik = float(np.sum(log_norm))
        trace.append(loglik)
        resp = np.exp(log_joint - log_norm[:, None])
        mass = resp.sum(axis=0)
        if np.any(mass < _DEGENERATE_MASS * n):
            raise _RestartDegenerate
        weights = mass / n
        means = (resp.T @ data) / mass[:, None]
        if diagonal:
            covs = np.empty((k, d))
            for j in range(k):
                diff = data - means[j]
                covs[j] = (resp[:, j] @ (diff * diff)) / mass[j] + reg
        else:
            covs = np.empty((k, d, d))
            for j in range(k):
                diff = data - means[j]
                covs[j] = (diff.T * resp[:, j]) @ diff / mass[j]
                covs[j][np.diag_indices(d)] += reg
        params = MixtureParams(weights, means, covs)
        if np.isfinite(prev) and abs(loglik - prev) <= cfg.tol * max(1.0, abs(loglik)):
            break
        prev = loglik
    final = gmm_loglik(params, data)
    trace.append(final)
    return params, final, np.array(trace)


def fit_gmm_em(data, k: int, cfg: EmConfig = EmConfig()) -> Tuple[MixtureParams, float]:
    """Best-of-restarts EM fit; returns (params, loglik)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < k:
        raise ValueError(f"need at least K={k} observations, got {data.shape[0]}")
    best = None
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_restarts)
    for ss in streams:
        rng = np.random.default_rng(ss)
        try:
            params, loglik, _ = em_single_run(data, k, cfg, rng)
        except _RestartDegenerate:
            continue
        if best is None or loglik > best[1]:
            best = (params, loglik)
    if best is None:
        raise DegenerateComponentError(
            f"all {cfg.n_restarts} EM restarts lost a component at K={k}"
        )
    return best


def responsibilities(params: MixtureParams, data) -> np.ndarray:
    """Posterior component probabilities, rows normalized, log-space safe."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != params.dim:
        raise ValueError("data dimension does not match the fitted parameters")
    log_joint = _log_joint(params, data)
    return np.exp(log_joint - logsumexp(log_joint, axis=1)[:, None])


@dataclass(frozen=True)
class ComponentSamples:
    """A partition of observations across components."""

    assignments: np.ndarray
    n_components: int

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_components)

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)


def sample_assignments(resp: np.ndarray, seed: int) -> ComponentSamples:
    """One categorical draw per observation from its responsibility row.

    Columns are ranked canonically (lexicographically by content) before the
    inverse-CDF draw, so permuting the components permutes the assignments
    identically under the same seed.
    """
    resp = np.asarray(resp, dtype=float)
    n, k = resp.shape
    order = sorted(range(k), key=lambda j: tuple(resp[:, j]))
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    cum = np.cumsum(resp[:, order], axis=1)
    pos = np.minimum((u[:, None] > cum).sum(axis=1), k - 1)
    assignments = np.asarray(order, dtype=int)[pos]
    return ComponentSamples(assignments=assignments, n_components=k)


def argmax_assignments(resp: np.ndarray) -> ComponentSamples:
    resp = np.asarray(resp, dtype=float)
    return ComponentSamples(
        assignments=np.argmax(resp, axis=1), n_components=resp.shape[1]
    )


def _component_divergence(points: np.ndarray, params: MixtureParams, k: int, div: DivergenceConfig, rng) -> float:
    mean = params.means[k]
    if div.method == "kl-knn":
        return kl_knn_one_sample(points, gaussian_oracle(mean, params.component_cov(k)), div.knn)
    if div.method == "kl-knn-percoord":
        var = params.covariances[k] if params.diagonal else np.diag(params.covariances[k])
        marginals = [gaussian_oracle(mean[j], [[var[j]]]) for j in range(params.dim)]
        return kl_knn_per_coordinate(points, marginals, div.knn)
    model_draws = rng.multivariate_normal(
        mean, params.component_cov(k), size=div.n_model_samples
    )
    if div.method == "mmd":
        return mmd(points, model_draws, div.kernel)
    return sinkhorn_unbalanced(None, None, points, model_draws, div.sinkhorn).value


def component_discrepancies_mixture(
    params: MixtureParams,
    data,
    div: DivergenceConfig = None,
    seed: int = 0,
    assignment: str = "sample",
    r_draws: int = 1,
):
    """Discrepancy of each component's assigned observations vs its fitted
    density. Returns a criterion.DiscrepancyRow.

    assignment "sample" draws categorical assignments (default); "argmax"
    uses the posterior mode. r_draws > 1 averages discrepancies over repeated
    assignment draws (counts reported from the first draw).
    """
    from .criterion import DiscrepancyRow

    if div is None:
        div = DivergenceConfig()
    if assignment not in ("sample", "argmax"):
        raise ValueError(f"unknown assignment mode {assignment!r}")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    resp = responsibilities(params, data)
    streams = np.random.SeedSequence(seed).spawn(r_draws + 1)
    model_rng = np.random.default_rng(streams[-1])
    min_pts = div.min_points()
    sums = np.zeros(params.k)
    bad = [None] * params.k  # first failure flag per component
    first_counts = None
    for r in range(r_draws):
        if assignment == "argmax":
            comp = argmax_assignments(resp)
        else:
            comp = sample_assignments(resp, int(streams[r].generate_state(1)[0]))
        if first_counts is None:
            first_counts = comp.counts
        for k in range(params.k):
            if bad[k] is not None:
                continue
            pts = data[comp.indices(k)]
            if pts.shape[0] < min_pts:
                bad[k] = "empty"
                continue
            try:
                val = _component_divergence(pts, params, k, div, model_rng)
            except ValueError:
                bad[k] = "infinite"
                continue
            if not np.isfinite(val):
                bad[k] = "infinite"
                continue
            sums[k] += val
    discrepancies = sums / r_draws
    flags = []
    for k in range(params.k):
        if bad[k] is not None:
            discrepancies[k] = np.inf
            flags.append(bad[k])
        else:
            flags.append("ok")
    return DiscrepancyRow(
        discrepancies=discrepancies, counts=first_counts, flags=tuple(flags)
    )
