"""Comparison model-selection methods.

BIC (mixture and matrix-factorization variants), within-cluster sum of
squares with the elbow rule, silhouette, the gap statistic, and parallel
analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class BaselineResult:
    method: str
    k_hat: int
    per_k_scores: Dict[int, float]
    aux: dict = field(default_factory=dict)


def bic_mixture(loglik: float, n_free_params: int, n: int) -> float:
    """p log N - 2 loglik; smaller is better."""
    if n < 1:
        raise ValueError("n must be positive")
    return n_free_params * np.log(n) - 2.0 * loglik


def gmm_free_params(k: int, dim: int, cov_mode: str = "full") -> int:
    """Free parameters of a K-component Gaussian mixture."""
    if cov_mode == "full":
        per_cov = dim * (dim + 1) // 2
    elif cov_mode == "diagonal":
        per_cov = dim
    else:
        raise ValueError(f"unknown cov_mode {cov_mode!r}")
    return (k - 1) + k * dim + k * per_cov


def bic_pmf(cond_loglik: float, k: int, n: int) -> float:
    """K log N - 2 loglik + 2 log K!, the permutation-corrected variant."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    return k * np.log(n) - 2.0 * cond_loglik + 2.0 * float(gammaln(k + 1))


def wcss(data, labels, centroids=None) -> float:
    """Total within-cluster sum of squared distances to centroids.

    centroids default to the per-cluster means; empty clusters contribute 0.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    labels = np.asarray(labels)
    ids = np.unique(labels)
    total = 0.0
    for j, cid in enumerate(ids):
        pts = data[labels == cid]
        if pts.shape[0] == 0:
            continue
        mu = pts.mean(axis=0) if centroids is None else np.asarray(centroids[j], dtype=float)
        total += float(np.sum((pts - mu) ** 2))
    return total


def elbow_select(wcss_per_k: Dict[int, float]) -> int:
    """K maximizing the second difference of the WCSS sequence; ties smallest."""
    ks = sorted(wcss_per_k)
    if len(ks) < 3:
        raise ValueError("elbow rule needs at least 3 consecutive K values")
    if any(b - a != 1 for a, b in zip(ks[:-1], ks[1:])):
        raise ValueError("elbow rule needs consecutive K values")
    best_k, best_curv = None, -np.inf
    for prev_k, k, next_k in zip(ks[:-2], ks[1:-1], ks[2:]):
        curv = wcss_per_k[prev_k] - 2.0 * wcss_per_k[k] + wcss_per_k[next_k]
        if curv > best_curv:
            best_k, best_curv = k, curv
    return best_k


def silhouette_score(data, labels) -> float:
    """Mean silhouette with Euclidean distances.

    Singleton-cluster points and degenerate points (a = b = 0) score 0.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    labels = np.asarray(labels)
    n = data.shape[0]
    if n != labels.shape[0]:
        raise ValueError("labels length must match the data")
    ids, inv = np.unique(labels, return_inverse=True)
    k = ids.shape[0]
    if k < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    d2 = (
        np.sum(data * data, axis=1)[:, None]
        + np.sum(data * data, axis=1)[None, :]
        - 2.0 * (data @ data.T)
    )
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    sizes = np.bincount(inv, minlength=k)
    # mean distance from each point to each cluster
    sums = np.zeros((n, k))
    for j in range(k):
        sums[:, j] = dist[:, inv == j].sum(axis=1)
    s_vals = np.zeros(n)
    for i in range(n):
        c = inv[i]
        if sizes[c] <= 1:
            continue  # singleton scores 0
        a = sums[i, c] / (sizes[c] - 1)
        b = np.inf
        for j in range(k):
            if j != c and sizes[j] > 0:
                b = min(b, sums[i, j] / sizes[j])
        denom = max(a, b)
        s_vals[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s_vals.mean())


def silhouette_select(data, labelings: Dict[int, np.ndarray]) -> int:
    """K with the highest mean silhouette; ties to the smallest K."""
    scores = {k: silhouette_score(data, lab) for k, lab in sorted(labelings.items())}
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)


def _kmeans(data: np.ndarray, k: int, rng, n_iters: int = 30) -> np.ndarray:
    """Light k-means (k-means++ start) returning labels; used for reference
    replicates inside the gap statistic."""
    n = data.shape[0]
    centers = [data[rng.integers(n)]]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
        centers.append(data[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, np.sum((data - centers[-1]) ** 2, axis=1))
    centers = np.array(centers)
    labels = np.full(n, -1, dtype=int)
    for _ in range(n_iters):
        dists = (
            np.sum(data * data, axis=1)[:, None]
            + np.sum(centers * centers, axis=1)[None, :]
            - 2.0 * data @ centers.T
        )
        new_labels = np.argmin(dists, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            pts = data[labels == j]
            if pts.shape[0] > 0:
                centers[j] = pts.mean(axis=0)
    return labels


def gap_select(
    data,
    labelings: Dict[int, np.ndarray],
    b: int = 10,
    seed: int = 0,
    one_se_rule: bool = True,
) -> BaselineResult:
    """Gap statistic with uniform bounding-box references.

    Gap(K) = mean_b log WCSS_b(K) - log WCSS(K); reference replicates are
    clustered with internal k-means. one_se_rule selects the smallest K with
    Gap(K) >= Gap(K+1) - s_{K+1}; otherwise the arg max of Gap.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    ks = sorted(labelings)
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    rng = np.random.default_rng(seed)
    ref_logs = {k: [] for k in ks}
    for _ in range(b):
        ref = rng.uniform(lo, hi, size=data.shape)
        for k in ks:
            ref_labels = _kmeans(ref, k, rng) if k > 1 else np.zeros(data.shape[0], dtype=int)
            ref_logs[k].append(np.log(max(wcss(ref, ref_labels), 1e-300)))
    gap = {}
    s_k = {}
    for k in ks:
        logs = np.array(ref_logs[k])
        gap[k] = float(logs.mean() - np.log(max(wcss(data, labelings[k]), 1e-300)))
        s_k[k] = float(logs.std(ddof=0) * np.sqrt(1.0 + 1.0 / b))
    if one_se_rule:
        k_hat = None
        for k in ks[:-1]:
            if gap[k] >= gap[k + 1] - s_k[k + 1]:
                k_hat = k
                break
        if k_hat is None:
            k_hat = ks[-1]
    else:
        best = max(gap.values())
        k_hat = min(k for k, v in gap.items() if v == best)
    return BaselineResult(method="gap", k_hat=k_hat, per_k_scores=gap, aux={"s_k": s_k})


def parallel_analysis(
    x, n_perm: int = 20, quantile: float = 0.95, seed: int = 0
) -> BaselineResult:
    """Factor count from permutation eigenvalue thresholds.

    Data covariance eigenvalues are compared rank-by-rank against the
    requested quantile of eigenvalues from matrices with every row's entries
    independently permuted. The retained count is the leading run of ranks
    whose data eigenvalue exceeds its threshold.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if n_perm < 1:
        raise ValueError("n_perm must be positive")
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")

    def scree(mat):
        centered = mat - mat.mean(axis=0)
        cov = centered.T @ centered / max(mat.shape[0] - 1, 1)
        vals = np.linalg.eigvalsh(cov)
        return vals[::-1]

    data_eigs = scree(x)
    rng = np.random.default_rng(seed)
    perm_eigs = np.empty((n_perm, data_eigs.shape[0]))
    for p in range(n_perm):
        permuted = x.copy()
        for i in range(x.shape[0]):
            permuted[i] = permuted[i, rng.permutation(x.shape[1])]
        perm_eigs[p] = scree(permuted)
    thresholds = np.quantile(perm_eigs, quantile, axis=0)
    k_hat = 0
    for d_val, t_val in zip(data_eigs, thresholds):
        if d_val > t_val:
            k_hat += 1
        else:
            break
    return BaselineResult(
        method="parallel-analysis",
        k_hat=k_hat,
        per_k_scores={i + 1: float(v) for i, v in enumerate(data_eigs)},
        aux={"thresholds": thresholds.tolist()},
    )


def run_baselines(
    data,
    model: str = "gmm",
    methods=("bic", "elbow", "silhouette", "gap"),
    k_min: int = 1,
    k_max: int = 8,
    seed: int = 0,
    fit_cfg=None,
    gap_b: int = 10,
) -> Dict[str, BaselineResult]:
    """Fit each K once and apply the requested selection rules.

    GMM labelings are responsibility arg-maxes of the same fits a selection
    run would use, so the comparison isolates the selection rule.
    """
    from . import matfact, mixture

    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, dim = data.shape
    ks = list(range(k_min, k_max + 1))
    out: Dict[str, BaselineResult] = {}
    if model == "gmm":
        cfg = fit_cfg if fit_cfg is not None else mixture.EmConfig(seed=seed)
        fits = {}
        for k in ks:
            fits[k] = mixture.fit_gmm_em(data, k, cfg)
        labelings = {
            k: np.argmax(mixture.responsibilities(params, data), axis=1)
            for k, (params, _) in fits.items()
        }
        cov_mode = "full" if (cfg.cov_mode == "full" or (cfg.cov_mode == "auto" and dim <= 10)) else "diagonal"
        if "bic" in methods:
            scores = {
                k: bic_mixture(loglik, gmm_free_params(k, dim, cov_mode), n)
                for k, (_, loglik) in fits.items()
            }
            best = min(scores.values())
            out["bic"] = BaselineResult(
                "bic", min(k for k, v in scores.items() if v == best), scores
            )
        if "elbow" in methods or "wcss" in methods:
            wcss_scores = {k: wcss(data, labelings[k]) for k in ks}
            if "wcss" in methods:
                # WCSS alone is monotone in K; reported for diagnostics, the
                # nominal pick is its arg min
                best_w = min(wcss_scores.values())
                out["wcss"] = BaselineResult(
                    "wcss",
                    min(k for k, v in wcss_scores.items() if v == best_w),
                    wcss_scores,
                )
            if "elbow" in methods:
                out["elbow"] = BaselineResult(
                    "elbow", elbow_select(wcss_scores), wcss_scores
                )
        if "silhouette" in methods:
            sil_labelings = {k: labelings[k] for k in ks if k >= 2}
            scores = {k: silhouette_score(data, lab) for k, lab in sil_labelings.items()}
            best = max(scores.values())
            out["silhouette"] = BaselineResult(
                "silhouette", min(k for k, v in scores.items() if v == best), scores
            )
        if "gap" in methods:
            out["gap"] = gap_select(data, labelings, b=gap_b, seed=seed)
    elif model == "poisson-nmf":
        cfg = fit_cfg if fit_cfg is not None else matfact.NmfConfig(seed=seed)
        if "bic" in methods:
            scores = {}
            for k in ks:
                params = matfact.fit_poisson_nmf(data, k, cfg)
                scores[k] = bic_pmf(matfact.poisson_loglik(params, data), k, n)
            best = min(scores.values())
            out["bic"] = BaselineResult(
                "bic", min(k for k, v in scores.items() if v == best), scores
            )
        if "parallel-analysis" in methods or "pa" in methods:
            res = parallel_analysis(data, seed=seed)
            out["parallel-analysis"] = res
    else:
        raise ValueError(f"unknown model {model!r}")
    return out
