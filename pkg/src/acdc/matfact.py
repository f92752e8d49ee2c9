"""Probabilistic matrix-factorization backends.

Poisson NMF (multiplicative KL updates) and Gaussian factor analysis, plus
the conditional noise-variable samplers that map each observation's latent
component contributions to noise coordinates in [0, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln, ndtr, xlogy
from scipy.stats import poisson as poisson_dist

from .divergence import (
    DivergenceConfig,
    gaussian_oracle,
    kl_knn_one_sample,
    kl_knn_per_coordinate,
    mmd,
    sinkhorn_unbalanced,
    uniform_unit_oracle,
)

EPS = 1e-12


@dataclass(frozen=True)
class PmfParams:
    """Fitted factorization X ~ noise(loadings @ signatures).

    signatures: (K, D); loadings: (N, K). Poisson mode requires nonnegative
    factors and signature rows summing to 1. Gaussian mode carries sigma, the
    per-dimension TOTAL residual std; each of the K components receives an
    equal sigma_d^2 / K share of the noise variance.
    """

    signatures: np.ndarray
    loadings: np.ndarray
    noise: str = "poisson"
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.signatures, dtype=float))
        z = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        object.__setattr__(self, "signatures", phi)
        object.__setattr__(self, "loadings", z)
        if z.shape[1] != phi.shape[0]:
            raise ValueError("loadings columns must match signature rows")
        if self.noise not in ("poisson", "gaussian"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.noise == "poisson":
            if np.any(phi < 0) or np.any(z < 0):
                raise ValueError("poisson mode requires nonnegative factors")
            if not np.allclose(phi.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("poisson signature rows must sum to 1")
            if self.sigma is not None:
                raise ValueError("sigma only applies to gaussian noise")
        else:
            if self.sigma is None:
                raise ValueError("gaussian mode requires per-dimension sigma")
            s = np.atleast_1d(np.asarray(self.sigma, dtype=float))
            object.__setattr__(self, "sigma", s)
            if s.shape != (phi.shape[1],):
                raise ValueError("sigma must have one entry per dimension")
            if np.any(s < 0):
                raise ValueError("sigma must be nonnegative")

    @property
    def k(self) -> int:
        return self.signatures.shape[0]

    @property
    def dim(self) -> int:
        return self.signatures.shape[1]

    @property
    def n_obs(self) -> int:
        return self.loadings.shape[0]

    def permuted(self, order) -> "PmfParams":
        order = np.asarray(order, dtype=int)
        return PmfParams(
            signatures=self.signatures[order],
            loadings=self.loadings[:, order],
            noise=self.noise,
            sigma=self.sigma,
        )


@dataclass(frozen=True)
class NmfConfig:
    max_iters: int = 500
    tol: float = 1e-7
    n_restarts: int = 3
    seed: int = 0
    init: str = "gamma-random"  # gamma-random | svd-abs

    def __post_init__(self):
        if self.max_iters < 1 or self.n_restarts < 1:
            raise ValueError("max_iters and n_restarts must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.init not in ("gamma-random", "svd-abs"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class NoiseSampleTable:
    """Per-component noise draws.

    eps[k] is (N_k, D); indices[k] are the contributing observation ids.
    reference "uniform" means entries live in [0, 1]; "gaussian" means
    standardized residuals.
    """

    eps: Tuple[np.ndarray, ...]
    counts: np.ndarray
    indices: Tuple[np.ndarray, ...]
    reference: str = "uniform"

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=int)
        object.__setattr__(self, "counts", counts)
        if len(self.eps) != counts.shape[0] or len(self.indices) != counts.shape[0]:
            raise ValueError("per-component fields must agree on K")
        for e, c in zip(self.eps, counts):
            if e.shape[0] != c:
                raise ValueError("counts must match eps row counts")
            if not np.all(np.isfinite(e)):
                raise ValueError("noise samples must be finite")
            if self.reference == "uniform" and (np.any(e < 0) or np.any(e > 1)):
                raise ValueError("uniform-reference noise must lie in [0, 1]")


def _check_count_matrix(x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x))
    if not np.issubdtype(x.dtype, np.number):
        raise ValueError("input matrix must be numeric")
    xf = x.astype(float)
    if np.any(xf < 0) or not np.all(np.isfinite(xf)):
        raise ValueError("count matrix entries must be finite and nonnegative")
    if np.any(np.mod(xf, 1.0) != 0):
        raise ValueError("poisson mode requires integer counts")
    return xf


def generalized_kl(x: np.ndarray, m: np.ndarray) -> float:
    """sum(x log(x/m) - x + m), the Poisson-NMF objective (0 log 0 := 0)."""
    m = np.maximum(m, EPS)
    return float(np.sum(xlogy(x, x / m) - x + m))


def nmf_single_run(xf: np.ndarray, k: int, cfg: NmfConfig, rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One multiplicative-update run; returns (loadings, signatures, objective trace)."""
    n, d = xf.shape
    if cfg.init == "svd-abs":
        u, s, vt = np.linalg.svd(xf, full_matrices=False)
        kk = min(k, s.shape[0])
        w = np.abs(u[:, :kk] * np.sqrt(s[:kk])) + EPS
        h = np.abs(np.sqrt(s[:kk])[:, None] * vt[:kk]) + EPS
        if kk < k:  # pad with small random columns when rank < K
            w = np.hstack([w, rng.gamma(1.0, EPS, (n, k - kk))])
            h = np.vstack([h, rng.gamma(1.0, EPS, (k - kk, d))])
    else:
        scale = np.sqrt(max(xf.mean(), 1e-6) / k)
        w = rng.gamma(1.0, scale, (n, k)) + EPS
        h = rng.gamma(1.0, scale, (k, d)) + EPS
    trace = [generalized_kl(xf, w @ h)]
    for _ in range(cfg.max_iters):
        ratio = xf / np.maximum(w @ h, EPS)
        w = w * (ratio @ h.T) / np.maximum(h.sum(axis=1)[None, :], EPS)
        ratio = xf / np.maximum(w @ h, EPS)
        h = h * (w.T @ ratio) / np.maximum(w.sum(axis=0)[:, None], EPS)
        obj = generalized_kl(xf, w @ h)
        trace.append(obj)
        if abs(trace[-2] - obj) <= cfg.tol * max(1.0, abs(obj)):
            break
    return w, h, np.array(trace)


def fit_poisson_nmf(x, k: int, cfg: NmfConfig = NmfConfig()) -> PmfParams:
    """Poisson NMF by KL multiplicative updates, best of n_restarts.

    Signatures come back row-normalized (mass moved into the loadings) and
    components are sorted by total loading mass descending. A final loadings
    update runs after normalization, which at K=1 makes the loadings equal the
    row sums of X up to float roundoff.
    """
    xf = _check_count_matrix(x)
    n, d = xf.shape
    if n < k or d < k:
        raise ValueError(f"need N, D >= K={k}")
    row_zero = xf.sum(axis=1) == 0
    col_zero = xf.sum(axis=0) == 0
    if np.any(row_zero):
        xf[row_zero, :] += EPS
    if np.any(col_zero):
        xf[:, col_zero] += EPS
    best = None
    for ss in np.random.SeedSequence(cfg.seed).spawn(cfg.n_restarts):
        rng = np.random.default_rng(ss)
        w, h, trace = nmf_single_run(xf, k, cfg, rng)
        if best is None or trace[-1] < best[2]:
            best = (w, h, trace[-1])
    w, h, _ = best
    mass = np.maximum(h.sum(axis=1), EPS)
    h = h / mass[:, None]
    w = w * mass[None, :]
    # final loadings update against the normalized signatures (row sums are 1,
    # so the stationarity point at K=1 is exactly the data row sums)
    ratio = xf / np.maximum(w @ h, EPS)
    w = w * (ratio @ h.T) / np.maximum(h.sum(axis=1)[None, :], EPS)
    order = np.argsort(-w.sum(axis=0), kind="stable")
    return PmfParams(signatures=h[order], loadings=w[:, order], noise="poisson")


def poisson_loglik(params: PmfParams, x) -> float:
    """Conditional Poisson log-likelihood of the counts given the fitted factors."""
    xf = _check_count_matrix(x)
    lam = np.maximum(params.loadings @ params.signatures, EPS)
    return float(np.sum(xf * np.log(lam) - lam - gammaln(xf + 1.0)))


def fa_single_run(
    xf: np.ndarray, k: int, n_sweeps: int, rng=None, init: str = "svd"
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Alternating least squares for X ~ Z Phi; returns (Z, Phi, error trace)."""
    n, d = xf.shape
    if init == "svd":
        u, s, vt = np.linalg.svd(xf, full_matrices=False)
        kk = min(k, s.shape[0])
        z = u[:, :kk] * s[:kk]
        phi = vt[:kk]
        if kk < k:
            z = np.hstack([z, np.zeros((n, k - kk))])
            phi = np.vstack([phi, np.zeros((k - kk, d))])
    else:
        z = rng.standard_normal((n, k))
        phi = rng.standard_normal((k, d))
    trace = [float(np.sum((xf - z @ phi) ** 2))]
    for _ in range(n_sweeps):
        z = np.linalg.lstsq(phi.T, xf.T, rcond=None)[0].T
        phi = np.linalg.lstsq(z, xf, rcond=None)[0]
        trace.append(float(np.sum((xf - z @ phi) ** 2)))
    return z, phi, np.array(trace)


def fit_gaussian_fa(x, k: int, cfg: NmfConfig = NmfConfig()) -> PmfParams:
    """Unconstrained factor analysis X ~ Z Phi + noise (no intercept).

    SVD start plus ALS polish; per-dimension noise std from the residuals.
    Components are sign-fixed (largest-|signature| entry positive) and sorted
    by total |loading| mass descending.
    """
    xf = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = xf.shape
    if n <= k:
        raise ValueError(f"need N > K={k}")
    sv = np.linalg.svd(xf, compute_uv=False)
    if sv.shape[0] >= k and sv[k - 1] < 1e-12 * max(sv[0], 1.0):
        warnings.warn(f"data rank below K={k}: smallest components are near zero", RuntimeWarning)
    z, phi, _ = fa_single_run(xf, k, n_sweeps=2)
    resid = xf - z @ phi
    sigma = np.sqrt(np.mean(resid**2, axis=0))
    signs = np.where(phi[np.arange(k), np.argmax(np.abs(phi), axis=1)] < 0, -1.0, 1.0)
    phi = phi * signs[:, None]
    z = z * signs[None, :]
    order = np.argsort(-np.sum(np.abs(z), axis=0), kind="stable")
    return PmfParams(signatures=phi[order], loadings=z[:, order], noise="gaussian", sigma=sigma)


def _canonical_component_order(params: PmfParams) -> np.ndarray:
    """Content-keyed component order, identical across relabelings.

    Randomness consumed in this order makes the samplers equivariant under
    simultaneous permutation of signature rows and loading columns (exact for
    distinct components; ties fall back to positional order)."""
    keys = [
        (params.signatures[j].tobytes(), params.loadings[:, j].tobytes())
        for j in range(params.k)
    ]
    return np.array(sorted(range(params.k), key=keys.__getitem__), dtype=int)


def split_counts_poisson(params: PmfParams, x, seed: int = 0) -> np.ndarray:
    """Latent count split y (N, K, D): per cell, Multinomial(x_nd, p) with
    p_k proportional to phi_kd * z_nk. Conserves sum_k y = x exactly."""
    if params.noise != "poisson":
        raise ValueError("poisson split needs poisson-mode parameters")
    xf = _check_count_matrix(x)
    n, d = xf.shape
    if (n, d) != (params.n_obs, params.dim):
        raise ValueError("data shape does not match the fitted parameters")
    xi = xf.astype(np.int64)
    z = params.loadings
    phi = params.signatures
    order = _canonical_component_order(params)
    y = np.empty((n, params.k, d), dtype=np.int64)
    streams = np.random.SeedSequence(seed).spawn(n)
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        rates = z[i][:, None] * phi  # (K, D)
        totals = rates.sum(axis=0)
        p = np.where(totals[None, :] > 0, rates / np.maximum(totals[None, :], EPS), 1.0 / params.k)
        y[i, order, :] = rng.multinomial(xi[i], p[order].T).T
    return y


def sample_noise_poisson(params: PmfParams, x, seed: int = 0) -> NoiseSampleTable:
    """Conditional noise draws for Poisson factorization.

    y splits each count multinomially across components; eps_nkd is uniform on
    [F(y-1; lam), F(y; lam)] with lam = phi_kd * z_nk and F(-1) = 0.
    Observations with z_nk = 0 do not contribute to component k.
    """
    split_ss, eps_ss = np.random.SeedSequence(seed).spawn(2)
    y = split_counts_poisson(params, x, seed=int(split_ss.generate_state(1)[0]))
    z = params.loadings
    lam = z[:, :, None] * params.signatures[None, :, :]
    f_hi = poisson_dist.cdf(y, lam)
    f_lo = np.where(y > 0, poisson_dist.cdf(y - 1, lam), 0.0)
    rng = np.random.default_rng(eps_ss)
    # uniforms drawn in canonical component order, so relabeled parameters
    # reuse the same draws on the same physical components
    order = _canonical_component_order(params)
    u = np.empty(y.shape)
    u[:, order, :] = rng.random(y.shape)
    eps = f_lo + u * (f_hi - f_lo)
    used = z > 0
    idx = tuple(np.flatnonzero(used[:, k]) for k in range(params.k))
    return NoiseSampleTable(
        eps=tuple(eps[idx[k], k, :] for k in range(params.k)),
        counts=np.array([ix.shape[0] for ix in idx]),
        indices=idx,
        reference="uniform",
    )


def split_values_gaussian(params: PmfParams, x, seed: int = 0, strict: bool = True) -> np.ndarray:
    """Latent additive split y (N, K, D) with sum_k y = x bitwise.

    Components 1..K-1 come from the exact normal conditionals given the
    running remainder; component K is the deterministic residual. Exact float
    recomposition can be unattainable when components cancel into a finer
    binade than they occupy (the reachable sums then skip every other value);
    strict=True raises on such entries, strict=False leaves the one-ulp gap.
    """
    if params.noise != "gaussian":
        raise ValueError("gaussian split needs gaussian-mode parameters")
    xf = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = xf.shape
    if (n, d) != (params.n_obs, params.dim):
        raise ValueError("data shape does not match the fitted parameters")
    if np.any(params.sigma <= 0):
        raise ValueError("zero noise variance: gaussian sampler needs sigma > 0")
    k_comp = params.k
    var_k = params.sigma**2 / k_comp  # (D,): equal per-component share
    mu = params.loadings[:, :, None] * params.signatures[None, :, :]  # (N, K, D)
    rng = np.random.default_rng(seed)
    y = np.empty((n, k_comp, d))
    remaining = xf.copy()
    for k in range(k_comp - 1):
        n_rest = k_comp - 1 - k
        mu_bar = mu[:, k + 1 :, :].sum(axis=1)
        var_bar = n_rest * var_k  # (D,)
        a = 1.0 / var_k
        b = 1.0 / var_bar
        mu_t = (a * mu[:, k, :] + b * (remaining - mu_bar)) / (a + b)
        var_t = 1.0 / (a + b)
        y[:, k, :] = mu_t + np.sqrt(var_t) * rng.standard_normal((n, d))
        remaining = remaining - y[:, k, :]
    y[:, k_comp - 1, :] = remaining
    # the last component is *defined* as whatever closes the sum; nudge it until
    # the float recomposition y.sum(axis=1) is bitwise equal to x
    last = y[:, k_comp - 1, :]
    for _ in range(4):
        gap = xf - y.sum(axis=1)
        if not gap.any():
            return y
        last += gap
    # adding the gap stalls in two ways: a sub-half-ulp gap rounds to no change,
    # and a sum landing exactly on a rounding-cell boundary round-half-evens past
    # an odd-bit target forever. Alternating one-ulp nextafter steps with gap
    # steps breaks both.
    for it in range(24):
        gap = xf - y.sum(axis=1)
        bad = gap != 0
        if not bad.any():
            return y
        if it % 2 == 0:
            stepped = np.nextafter(last, np.where(gap > 0, np.inf, -np.inf))
        else:
            stepped = last + gap
            stalled = stepped == last
            stepped = np.where(
                stalled,
                np.nextafter(last, np.where(gap > 0, np.inf, -np.inf)),
                stepped,
            )
        last[bad] = stepped[bad]
    # remaining entries: the reachable sums move on the rounding lattice of the
    # perturbed entry, so jiggle siblings from the finest binade (smallest
    # magnitude) outward by expanding +-m ulps, walking the residual after each
    def _walk(col, target):
        for inner in range(12):
            s = col.sum()
            if s == target:
                return True
            g = target - s
            if inner % 2 == 0:
                stepped = np.nextafter(col[-1], np.inf if g > 0 else -np.inf)
            else:
                stepped = col[-1] + g
                if stepped == col[-1]:
                    stepped = np.nextafter(col[-1], np.inf if g > 0 else -np.inf)
            col[-1] = stepped
        return col.sum() == target

    for i, j in np.argwhere(xf - y.sum(axis=1)):
        col = y[i, :, j]
        target = xf[i, j]
        res_orig = col[-1]
        closed = _walk(col, target)
        siblings = sorted(range(k_comp - 1), key=lambda q: abs(col[q]))
        for jig_idx in siblings:
            if closed:
                break
            jig_orig = col[jig_idx]
            for outer in range(24):
                m = outer // 2 + 1
                val = jig_orig
                direction = np.inf if outer % 2 == 0 else -np.inf
                for _ in range(m):
                    val = np.nextafter(val, direction)
                col[jig_idx] = val
                if _walk(col, target):
                    closed = True
                    break
            if not closed:
                col[jig_idx] = jig_orig
        if not closed:
            # undo the repair drift and settle at the nearest reachable sum
            col[-1] = res_orig
            for _ in range(3):
                col[-1] += target - col.sum()
            if strict:
                raise RuntimeError(
                    "additive split cannot recompose exactly: components cancel "
                    "into a finer binade (pass strict=False to accept a one-ulp gap)"
                )
    if strict and (xf - y.sum(axis=1)).any():
        raise RuntimeError("could not make the additive split recompose exactly")
    return y


def sample_noise_gaussian(
    params: PmfParams, x, seed: int = 0, reference: str = "uniform", strict: bool = True
) -> NoiseSampleTable:
    """Conditional noise draws for Gaussian factor analysis.

    reference "uniform": eps_nkd = NormalCDF(y; mu_nkd, sigma_kd^2) in [0, 1].
    reference "gaussian": standardized residuals (y - mu)/sigma_k instead.
    """
    if reference not in ("uniform", "gaussian"):
        raise ValueError(f"unknown reference {reference!r}")
    y = split_values_gaussian(params, x, seed=seed, strict=strict)
    mu = params.loadings[:, :, None] * params.signatures[None, :, :]
    sd_k = np.sqrt(params.sigma**2 / params.k)  # (D,)
    zscore = (y - mu) / sd_k[None, None, :]
    eps = ndtr(zscore) if reference == "uniform" else zscore
    n = y.shape[0]
    idx = tuple(np.arange(n) for _ in range(params.k))
    return NoiseSampleTable(
        eps=tuple(eps[:, k, :] for k in range(params.k)),
        counts=np.full(params.k, n),
        indices=idx,
        reference=reference,
    )


def sample_noise(params: PmfParams, x, seed: int = 0, strict: bool = True) -> NoiseSampleTable:
    if params.noise == "poisson":
        return sample_noise_poisson(params, x, seed=seed)
    return sample_noise_gaussian(params, x, seed=seed, strict=strict)


def _noise_reference_oracles(table: NoiseSampleTable, dim: int):
    if table.reference == "uniform":
        return uniform_unit_oracle(), [uniform_unit_oracle()] * dim
    std_marginal = gaussian_oracle([0.0], [[1.0]])
    full = gaussian_oracle(np.zeros(dim), np.eye(dim))
    return full, [std_marginal] * dim


def component_discrepancies_pmf(
    params: PmfParams,
    x,
    div: DivergenceConfig = None,
    seed: int = 0,
    r_draws: int = 1,
):
    """Discrepancy of each component's noise sample vs the reference law.

    Default divergence is the per-coordinate k-NN KL against Unif([0,1]) on
    each coordinate. Returns a criterion.DiscrepancyRow.
    """
    from .criterion import DiscrepancyRow

    if div is None:
        div = DivergenceConfig(method="kl-knn-percoord")
    streams = np.random.SeedSequence(seed).spawn(r_draws + 1)
    model_rng = np.random.default_rng(streams[-1])
    min_pts = div.min_points()
    k_comp = params.k
    sums = np.zeros(k_comp)
    bad = [None] * k_comp
    first_counts = None
    for r in range(r_draws):
        # strict=False: a one-ulp recomposition gap is irrelevant to divergences
        table = sample_noise(params, x, seed=int(streams[r].generate_state(1)[0]), strict=False)
        if first_counts is None:
            first_counts = table.counts.copy()
        full_oracle, marginals = _noise_reference_oracles(table, params.dim)
        for k in range(k_comp):
            if bad[k] is not None:
                continue
            pts = table.eps[k]
            if pts.shape[0] < min_pts:
                bad[k] = "empty"
                continue
            try:
                if div.method == "kl-knn-percoord":
                    val = kl_knn_per_coordinate(pts, marginals, div.knn)
                elif div.method == "kl-knn":
                    val = kl_knn_one_sample(pts, full_oracle, div.knn)
                else:
                    if table.reference == "uniform":
                        ref = model_rng.random((div.n_model_samples, params.dim))
                    else:
                        ref = model_rng.standard_normal((div.n_model_samples, params.dim))
                    if div.method == "mmd":
                        val = mmd(pts, ref, div.kernel)
                    else:
                        val = sinkhorn_unbalanced(None, None, pts, ref, div.sinkhorn).value
            except ValueError:
                bad[k] = "infinite"
                continue
            if not np.isfinite(val):
                bad[k] = "infinite"
                continue
            sums[k] += val
    discrepancies = sums / r_draws
    flags = []
    for k in range(k_comp):
        if bad[k] is not None:
            discrepancies[k] = np.inf
            flags.append(bad[k])
        else:
            flags.append("ok")
    return DiscrepancyRow(
        discrepancies=discrepancies, counts=first_counts, flags=tuple(flags)
    )
