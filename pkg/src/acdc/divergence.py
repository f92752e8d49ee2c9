"""Divergence measures and estimators.

Discrete plug-in KL, one-sample k-NN KL (biased / bias-corrected / adaptive /
per-coordinate), closed-form Gaussian KL, MMD, and unbalanced Sinkhorn.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln, logsumexp

EPS = 1e-300
_JITTER_SEED = 0


@dataclass(frozen=True)
class DensityOracle:
    """Known model density q, exposed through its log density.

    log_density maps an (N, D) array to an (N,) array of log q values.
    support_tag is one of "full-space", "unit-cube", "nonneg-orthant".
    """

    log_density: Callable[[np.ndarray], np.ndarray]
    support_tag: str = "full-space"


def gaussian_oracle(mean, cov) -> DensityOracle:
    """DensityOracle for a (possibly degenerate-to-1D) multivariate normal."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    log_norm = -0.5 * d * np.log(2.0 * np.pi) - np.sum(np.log(np.diag(chol)))

    def log_density(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.linalg.solve(chol, (x - mean).T)
        return log_norm - 0.5 * np.sum(z * z, axis=0)

    return DensityOracle(log_density=log_density, support_tag="full-space")


def uniform_unit_oracle() -> DensityOracle:
    """DensityOracle for Unif([0,1]) per coordinate: log q = 0 on the support."""
    return DensityOracle(
        log_density=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
        support_tag="unit-cube",
    )


@dataclass(frozen=True)
class KnnKlConfig:
    """k-NN KL estimator settings.

    k_mode "fixed" uses k as given; "adaptive-sqrt" uses k = floor(sqrt(N))
    with no bias correction. bias_correction subtracts log k and adds psi(k)
    in fixed mode.
    """

    k_mode: str = "fixed"
    k: int = 1
    bias_correction: bool = False
    algorithm: str = "auto"  # auto | brute | tree

    def __post_init__(self):
        if self.k_mode not in ("fixed", "adaptive-sqrt"):
            raise ValueError(f"unknown k_mode {self.k_mode!r}")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.algorithm not in ("auto", "brute", "tree"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass(frozen=True)
class KernelSpec:
    """Positive definite kernel; only the Gaussian RBF is provided."""

    kind: str = "gaussian-rbf"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian-rbf":
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class SinkhornConfig:
    """Unbalanced Sinkhorn settings; epsilon/rho_marginal default by dimension."""

    epsilon: Optional[float] = None
    rho_marginal: Optional[float] = None
    max_iters: int = 500
    tol: float = 1e-9
    cost_metric: str = "euclidean"

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.rho_marginal is not None and not self.rho_marginal > 0:
            raise ValueError("rho_marginal must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.cost_metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown cost_metric {self.cost_metric!r}")

    def resolved(self, dim: int) -> "SinkhornConfig":
        """Fill dimension-dependent defaults: D<=20 -> (1, 20); 21-30 -> (2, 10);
        31-60 -> (2, 5); above 60 the nearest bracket applies."""
        eps, rho = self.epsilon, self.rho_marginal
        if eps is None or rho is None:
            if dim <= 20:
                d_eps, d_rho = 1.0, 20.0
            elif dim <= 30:
                d_eps, d_rho = 2.0, 10.0
            else:
                d_eps, d_rho = 2.0, 5.0
            eps = d_eps if eps is None else eps
            rho = d_rho if rho is None else rho
        return SinkhornConfig(eps, rho, self.max_iters, self.tol, self.cost_metric)


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    n_iters: int
    residual: float
    converged: bool


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be an (N, D) array")
    return x


def _log_density_fn(q) -> Callable[[np.ndarray], np.ndarray]:
    return q.log_density if hasattr(q, "log_density") else q


def kl_plugin_discrete(counts, pmf_q, tol: float = 1e-9) -> float:
    """Plug-in KL between empirical counts and a discrete model pmf.

    counts: map symbol -> nonnegative integer count. pmf_q: map symbol ->
    probability. Symbols with zero count are dropped (0 log 0 := 0). Can be
    negative at finite samples; always finite.
    """
    n_total = sum(counts.values())
    if n_total < 1:
        raise ValueError("empty sample: total count is zero")
    q_mass = sum(pmf_q.values())
    if q_mass > 1.0 + tol:
        raise ValueError(f"model pmf mass {q_mass} exceeds 1")
    out = 0.0
    for sym, c in counts.items():
        if c == 0:
            continue
        if c < 0:
            raise ValueError(f"negative count for symbol {sym!r}")
        q = pmf_q.get(sym, 0.0)
        if q <= 0.0:
            raise ValueError(f"model assigns zero mass to observed symbol {sym!r}")
        p = c / n_total
        out += p * np.log(p / q)
    return float(out)


def _dedupe_jitter(x: np.ndarray) -> np.ndarray:
    """Add seeded jitter of magnitude 1e-10*(data range) to repeated points."""
    _, first_idx = np.unique(x, axis=0, return_index=True)
    if first_idx.shape[0] == x.shape[0]:
        return x
    dup_mask = np.ones(x.shape[0], dtype=bool)
    dup_mask[first_idx] = False
    span = float(x.max() - x.min())
    scale = 1e-10 * (span if span > 0 else 1.0)
    rng = np.random.default_rng(_JITTER_SEED)
    x = x.copy()
    x[dup_mask] += rng.uniform(-scale, scale, size=(int(dup_mask.sum()), x.shape[1]))
    return x


def _knn_radii(x: np.ndarray, k: int, algorithm: str) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor (self excluded)."""
    n, d = x.shape
    if algorithm == "auto":
        algorithm = "tree" if d <= 16 else "brute"
    if algorithm == "tree":
        tree = cKDTree(x)
        dist, _ = tree.query(x, k=k + 1)
        return dist[:, k]
    radii = np.empty(n)
    sq = np.sum(x * x, axis=1)
    chunk = max(1, min(n, int(2e7) // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(d2, 0.0, out=d2)
        kth = np.partition(d2, k, axis=1)[:, k]
        radii[start:stop] = np.sqrt(kth)
    return radii


def log_unit_ball_volume(dim: int) -> float:
    """log of the volume of the unit ball in R^dim."""
    return 0.5 * dim * np.log(np.pi) - gammaln(0.5 * dim + 1.0)


def kl_knn_one_sample(samples, q, cfg: KnnKlConfig = KnnKlConfig()) -> float:
    """One-sample k-NN KL estimate of D(P || q) from draws of P.

    Biased mode: mean over n of log[(k/(N-1)) / (V_D(r_kn) * q(y_n))] with
    V_D the Euclidean ball volume. Corrected mode subtracts log k and adds
    psi(k). Adaptive mode uses k = floor(sqrt(N)), no correction.
    """
    x = _as_samples(samples)
    n, d = x.shape
    if cfg.k_mode == "adaptive-sqrt":
        k = max(1, int(np.sqrt(n)))
        correct = False
    else:
        k = cfg.k
        correct = cfg.bias_correction
    if n <= k:
        raise ValueError(f"too few samples: N={n} needs N >= k+1 with k={k}")
    x = _dedupe_jitter(x)
    radii = _knn_radii(x, k, cfg.algorithm)
    if np.any(radii <= 0.0):
        raise ValueError("degenerate zero k-NN radius after tie handling")
    log_q = np.asarray(_log_density_fn(q)(x), dtype=float)
    if not np.all(np.isfinite(log_q)):
        raise ValueError("log density not finite on the sample support")
    log_vol = log_unit_ball_volume(d) + d * np.log(radii)
    est = float(np.mean(np.log(k / (n - 1)) - log_vol - log_q))
    if correct:
        est += float(digamma(k)) - np.log(k)
    return est


def kl_knn_per_coordinate(samples, q_marginals, cfg: KnnKlConfig = KnnKlConfig()) -> float:
    """Sum of univariate k-NN KL estimates across coordinates.

    q_marginals is either a single univariate DensityOracle applied to every
    coordinate or a sequence of D of them.
    """
    x = _as_samples(samples)
    d = x.shape[1]
    if hasattr(q_marginals, "log_density") or callable(q_marginals):
        q_marginals = [q_marginals] * d
    if len(q_marginals) != d:
        raise ValueError(f"need {d} marginal oracles, got {len(q_marginals)}")
    total = 0.0
    for j in range(d):
        try:
            total += kl_knn_one_sample(x[:, j : j + 1], q_marginals[j], cfg)
        except ValueError as exc:
            raise ValueError(f"coordinate {j}: {exc}") from exc
    return total


def kl_gaussian_closed_form(mu1, sigma1, mu2, sigma2) -> float:
    """Exact KL( N(mu1, sigma1) || N(mu2, sigma2) ) for SPD covariances."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    s2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    d = mu1.shape[0]
    if mu2.shape[0] != d or s1.shape != (d, d) or s2.shape != (d, d):
        raise ValueError("dimension mismatch between means and covariances")
    try:
        c1 = np.linalg.cholesky(s1)
        c2, low = cho_factor(s2, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    logdet1 = 2.0 * np.sum(np.log(np.diag(c1)))
    logdet2 = 2.0 * np.sum(np.log(np.diag(c2)))
    trace_term = float(np.trace(cho_solve((c2, low), s1)))
    diff = mu2 - mu1
    maha = float(diff @ cho_solve((c2, low), diff))
    return 0.5 * (logdet2 - logdet1 - d + trace_term + maha)


def median_heuristic_bandwidth(samples_p, samples_q=None, cap: int = 2000) -> float:
    """Median pairwise distance over the pooled points (deterministic stride
    subsample above `cap` points). Falls back to 1.0 when degenerate."""
    x = _as_samples(samples_p)
    if samples_q is not None:
        y = _as_samples(samples_q)
        if y.shape[1] != x.shape[1]:
            raise ValueError("dimension mismatch between sample sets")
        x = np.vstack([x, y])
    if x.shape[0] > cap:
        stride = int(np.ceil(x.shape[0] / cap))
        x = x[::stride]
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(x.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0 else 1.0


def _rbf_gram(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * bandwidth**2))


def mmd_squared(
    samples_p,
    samples_q,
    kernel: KernelSpec = None,
    variant: str = "unbiased",
    weights_p=None,
    weights_q=None,
) -> float:
    """MMD^2 between two (weighted) empirical measures.

    "unbiased" is the U-statistic (unweighted inputs only, each side needs at
    least 2 points). "biased" is the V-statistic, the exact squared RKHS norm
    of the mean-embedding difference; atom weights are supported there.
    """
    x = _as_samples(samples_p)
    y = _as_samples(samples_q)
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch between sample sets")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("empty sample set")
    if kernel is None:
        kernel = KernelSpec(bandwidth=median_heuristic_bandwidth(x, y))
    if variant not in ("unbiased", "biased"):
        raise ValueError(f"unknown variant {variant!r}")
    kxx = _rbf_gram(x, x, kernel.bandwidth)
    kyy = _rbf_gram(y, y, kernel.bandwidth)
    kxy = _rbf_gram(x, y, kernel.bandwidth)
    if variant == "unbiased":
        if weights_p is not None or weights_q is not None:
            raise ValueError("atom weights require the biased variant")
        m, n = x.shape[0], y.shape[0]
        if m < 2 or n < 2:
            raise ValueError("U-statistic needs at least 2 points per side")
        term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
        term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
        return float(term_x + term_y - 2.0 * kxy.mean())
    wp = _atom_weights(weights_p, x.shape[0])
    wq = _atom_weights(weights_q, y.shape[0])
    return float(wp @ kxx @ wp + wq @ kyy @ wq - 2.0 * (wp @ kxy @ wq))


def _atom_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError("weights length must match the sample count")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    s = w.sum()
    if not s > 0:
        raise ValueError("weights must have positive total mass")
    return w / s


def mmd(samples_p, samples_q, kernel: KernelSpec = None, variant: str = "unbiased", **kw) -> float:
    """sqrt(max(0, mmd_squared))."""
    return float(np.sqrt(max(0.0, mmd_squared(samples_p, samples_q, kernel, variant, **kw))))


def _cost_matrix(x: np.ndarray, y: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            + np.sum(y * y, axis=1)[None, :]
            - 2.0 * (x @ y.T)
        )
        np.maximum(d2, 0.0, out=d2)
        return np.sqrt(d2)
    nx = x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), EPS)
    ny = y / np.maximum(np.linalg.norm(y, axis=1, keepdims=True), EPS)
    return 1.0 - nx @ ny.T


def _gen_kl(h: np.ndarray, p: np.ndarray) -> float:
    """Generalized KL sum(h log(h/p) - h + p) for nonnegative vectors."""
    h = np.asarray(h, dtype=float)
    p = np.asarray(p, dtype=float)
    mask = h > 0
    out = float(np.sum(h[mask] * np.log(h[mask] / np.maximum(p[mask], EPS))))
    return out - float(h.sum()) + float(p.sum())


def sinkhorn_unbalanced(
    r_weights,
    c_weights,
    points_r,
    points_c,
    cfg: SinkhornConfig = SinkhornConfig(),
) -> SinkhornResult:
    """Unbalanced Sinkhorn distance between weighted point clouds.

    Minimizes tr(A^T M) + eps*KL(A || r c^T) + rho*KL(A1 || r) + rho*KL(A^T1 || c)
    by log-domain scaling iterations with exponent rho/(rho+eps). Convergence is
    the max change of both marginals between iterations.
    """
    x = _as_samples(points_r)
    y = _as_samples(points_c)
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch between point clouds")
    r = _atom_weights(r_weights, x.shape[0])
    c = _atom_weights(c_weights, y.shape[0])
    cfg = cfg.resolved(x.shape[1])
    eps, rho = cfg.epsilon, cfg.rho_marginal
    cost = _cost_matrix(x, y, cfg.cost_metric)
    lam = rho / (rho + eps)
    log_r = np.log(np.maximum(r, EPS))
    log_c = np.log(np.maximum(c, EPS))
    f = np.zeros(x.shape[0])
    g = np.zeros(y.shape[0])
    marg_r = r.copy()
    marg_c = c.copy()
    residual = np.inf
    n_done = 0
    for it in range(cfg.max_iters):
        f = -lam * eps * logsumexp((g[None, :] - cost) / eps + log_c[None, :], axis=1)
        g = -lam * eps * logsumexp((f[:, None] - cost) / eps + log_r[:, None], axis=0)
        log_plan = log_r[:, None] + log_c[None, :] + (f[:, None] + g[None, :] - cost) / eps
        plan = np.exp(log_plan)
        new_r = plan.sum(axis=1)
        new_c = plan.sum(axis=0)
        residual = max(
            float(np.max(np.abs(new_r - marg_r))), float(np.max(np.abs(new_c - marg_c)))
        )
        marg_r, marg_c = new_r, new_c
        n_done = it + 1
        if residual < cfg.tol:
            break
    converged = residual < cfg.tol
    if not converged:
        warnings.warn(
            f"sinkhorn did not converge: residual {residual:.3e} after {n_done} iters",
            RuntimeWarning,
        )
    value = (
        float(np.sum(plan * cost))
        + eps * _gen_kl(plan.ravel(), np.outer(r, c).ravel())
        + rho * _gen_kl(marg_r, r)
        + rho * _gen_kl(marg_c, c)
    )
    return SinkhornResult(value=value, n_iters=n_done, residual=residual, converged=converged)


@dataclass(frozen=True)
class DivergenceConfig:
    """Which discrepancy to use for component-level estimates.

    method: kl-knn | kl-knn-percoord | mmd | sinkhorn. Sample-based methods
    (mmd, sinkhorn) compare against n_model_samples draws from the model law.
    """

    method: str = "kl-knn"
    knn: KnnKlConfig = field(default_factory=lambda: KnnKlConfig(k_mode="adaptive-sqrt"))
    kernel: Optional[KernelSpec] = None
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    n_model_samples: int = 1000

    def __post_init__(self):
        if self.method not in ("kl-knn", "kl-knn-percoord", "mmd", "sinkhorn"):
            raise ValueError(f"unknown divergence method {self.method!r}")
        if self.n_model_samples < 2:
            raise ValueError("n_model_samples must be at least 2")

    def min_points(self) -> int:
        """Smallest component size the configured estimator can handle."""
        if self.method in ("kl-knn", "kl-knn-percoord") and self.knn.k_mode == "fixed":
            return self.knn.k + 1
        return 2
