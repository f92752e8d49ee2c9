"""Evaluation metrics.

Clustering agreement (size-weighted F-measure, ARI, AMI), selection accuracy
summaries, and factorization recovery metrics (cosine difference, relative
average difference, bipartite component matching with worst-case scores).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln


def _contingency(true, pred) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    true = np.asarray(true)
    pred = np.asarray(pred)
    if true.shape[0] != pred.shape[0]:
        raise ValueError("label vectors must have equal length")
    _, ti = np.unique(true, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    r = ti.max() + 1
    c = pi.max() + 1
    table = np.zeros((r, c), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table, table.sum(axis=1), table.sum(axis=0)


def f_measure(true, pred) -> float:
    """Size-weighted best-match F-measure.

    Each true cluster takes its best F1 over predicted clusters; the scores
    are averaged with true-cluster-size weights.
    """
    table, row_sums, col_sums = _contingency(true, pred)
    n = row_sums.sum()
    total = 0.0
    for i in range(table.shape[0]):
        best = 0.0
        for j in range(table.shape[1]):
            inter = table[i, j]
            if inter == 0:
                continue
            precision = inter / col_sums[j]
            recall = inter / row_sums[i]
            best = max(best, 2.0 * precision * recall / (precision + recall))
        total += row_sums[i] * best
    return float(total / n)


def ari(true, pred) -> float:
    """Adjusted Rand index (permutation-model adjustment)."""
    table, row_sums, col_sums = _contingency(true, pred)
    n = row_sums.sum()

    def comb2(v):
        return v * (v - 1) / 2.0

    sum_cells = comb2(table.astype(float)).sum()
    sum_rows = comb2(row_sums.astype(float)).sum()
    sum_cols = comb2(col_sums.astype(float)).sum()
    expected = sum_rows * sum_cols / comb2(float(n))
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def _expected_mi(row_sums: np.ndarray, col_sums: np.ndarray) -> float:
    """Expected mutual information under the permutation model
    (hypergeometric sum over feasible cell counts)."""
    n = int(row_sums.sum())
    log_n = np.log(n)
    gln_n = gammaln(n + 1)
    emi = 0.0
    for a in row_sums:
        a = int(a)
        gln_a = gammaln(a + 1) + gammaln(n - a + 1)
        for b in col_sums:
            b = int(b)
            lo = max(1, a + b - n)
            hi = min(a, b)
            nij = np.arange(lo, hi + 1, dtype=float)
            log_term = (
                gln_a
                + gammaln(b + 1)
                + gammaln(n - b + 1)
                - gln_n
                - gammaln(nij + 1)
                - gammaln(a - nij + 1)
                - gammaln(b - nij + 1)
                - gammaln(n - a - b + nij + 1)
            )
            emi += float(
                np.sum(
                    (nij / n)
                    * (np.log(nij) + log_n - np.log(a) - np.log(b))
                    * np.exp(log_term)
                )
            )
    return float(emi)


def ami(true, pred) -> float:
    """Adjusted mutual information with max-entropy normalization."""
    table, row_sums, col_sums = _contingency(true, pred)
    n = row_sums.sum()
    h_true = _entropy(row_sums)
    h_pred = _entropy(col_sums)
    if h_true == 0.0 and h_pred == 0.0:
        return 1.0  # both trivial single-cluster partitions
    mask = table > 0
    pij = table[mask] / n
    outer = np.outer(row_sums, col_sums)[mask] / (float(n) * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    emi = _expected_mi(row_sums, col_sums)
    denom = max(h_true, h_pred) - emi
    if denom <= 0:
        return 0.0 if abs(mi - emi) > 1e-12 else 1.0
    return float((mi - emi) / denom)


class SelectionAccuracy(NamedTuple):
    mae: float
    zero_one: float
    median_dev: float


def selection_accuracy(estimates, truths) -> SelectionAccuracy:
    """MAE, 0-1 loss, and median signed deviation of K estimates."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape or est.ndim != 1:
        raise ValueError("estimates and truths must be equal-length vectors")
    if est.shape[0] == 0:
        raise ValueError("empty input")
    dev = est - tru
    return SelectionAccuracy(
        mae=float(np.mean(np.abs(dev))),
        zero_one=float(np.mean(dev != 0)),
        median_dev=float(np.median(dev)),
    )


def cosine_difference(phi, phi_star) -> float:
    """1 - cosine similarity; in [0, 2]."""
    a = np.asarray(phi, dtype=float).ravel()
    b = np.asarray(phi_star, dtype=float).ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine difference undefined for zero vectors")
    # roundoff can push the similarity a hair past +-1; keep the result in [0, 2]
    return float(min(2.0, max(0.0, 1.0 - (a @ b) / (na * nb))))


def relative_average_difference(z, z_star) -> float:
    """|mean(z) - mean(z_star)| / mean(z_star)."""
    z = np.asarray(z, dtype=float).ravel()
    zs = np.asarray(z_star, dtype=float).ravel()
    m_star = zs.mean()
    if m_star == 0:
        raise ValueError("relative difference undefined for zero-mean truth")
    return float(abs(z.mean() - m_star) / m_star)


@dataclass(frozen=True)
class MatchResult:
    """Outcome of bipartite component matching.

    sigma maps indices of the smaller component set into the larger one;
    direction says which side is smaller ("est-to-truth" when K_est <= K_o).
    L_phi / L_z are the worst matched cosine / relative-average errors.
    """

    sigma: Tuple[int, ...]
    direction: str
    objective: float
    l_phi: float
    l_z: float
    pair_costs: Tuple[float, ...] = ()


@dataclass(frozen=True)
class _Factors:
    signatures: np.ndarray
    loadings: np.ndarray

    @property
    def k(self) -> int:
        return self.signatures.shape[0]

    @property
    def dim(self) -> int:
        return self.signatures.shape[1]

    @property
    def n_obs(self) -> int:
        return self.loadings.shape[0]


def _as_factors(obj) -> _Factors:
    """Accept fitted parameter objects or plain (signatures, loadings) pairs."""
    if hasattr(obj, "signatures") and hasattr(obj, "loadings"):
        phi, z = obj.signatures, obj.loadings
    else:
        phi, z = obj
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != phi.shape[0]:
        raise ValueError("loadings columns must match signature rows")
    return _Factors(signatures=phi, loadings=z)


def _pair_cost_matrix(est, truth) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if est.dim != truth.dim or est.n_obs != truth.n_obs:
        raise ValueError("factorizations must share data dimensions")
    cos = np.empty((est.k, truth.k))
    rad = np.empty((est.k, truth.k))
    for i in range(est.k):
        for j in range(truth.k):
            cos[i, j] = cosine_difference(est.signatures[i], truth.signatures[j])
            rad[i, j] = relative_average_difference(
                est.loadings[:, i], truth.loadings[:, j]
            )
    return cos + 0.1 * np.tanh(rad), cos, rad


def match_components(est, truth, method: str = "assignment") -> MatchResult:
    """Minimum-cost injective matching of components against ground truth.

    The per-pair cost is cosine_difference + 0.1 tanh(relative average
    difference); the smaller component set is injected into the larger.
    method "assignment" solves the rectangular assignment problem;
    "exhaustive" enumerates every injection (small K only).
    """
    est = _as_factors(est)
    truth = _as_factors(truth)
    cost, cos, rad = _pair_cost_matrix(est, truth)
    flipped = est.k > truth.k
    if flipped:
        cost, cos, rad = cost.T, cos.T, rad.T
    n_small, n_large = cost.shape
    if method == "assignment":
        rows, cols = linear_sum_assignment(cost)
        sigma = tuple(int(cols[list(rows).index(i)]) for i in range(n_small))
    elif method == "exhaustive":
        best_sigma, best_obj = None, np.inf
        for perm in permutations(range(n_large), n_small):
            obj = float(sum(cost[i, perm[i]] for i in range(n_small)))
            if obj < best_obj:
                best_sigma, best_obj = perm, obj
        sigma = tuple(best_sigma)
    else:
        raise ValueError(f"unknown method {method!r}")
    pair_costs = tuple(float(cost[i, sigma[i]]) for i in range(n_small))
    objective = float(sum(pair_costs))
    l_phi = float(max(cos[i, sigma[i]] for i in range(n_small)))
    l_z = float(max(rad[i, sigma[i]] for i in range(n_small)))
    return MatchResult(
        sigma=sigma,
        direction="truth-to-est" if flipped else "est-to-truth",
        objective=objective,
        l_phi=l_phi,
        l_z=l_z,
        pair_costs=pair_costs,
    )
