"""Accumulated cutoff discrepancy criterion.

Robust loss R^rho(K) = sum_k max(0, d_k - rho), exact piecewise-linear loss
curves in rho, K selection, automated rho via stability intervals, and
supervised rho calibration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

UNWEIGHTED = "unweighted"
COUNT_WEIGHTED = "counts"


@dataclass(frozen=True)
class DiscrepancyRow:
    """Per-component discrepancies for one value of K.

    flags entries: "ok", "empty" (too few assigned observations, discrepancy
    recorded as +inf), "infinite" (estimator blew up).
    """

    discrepancies: np.ndarray
    counts: np.ndarray
    flags: Tuple[str, ...]

    def __post_init__(self):
        d = np.asarray(self.discrepancies, dtype=float)
        c = np.asarray(self.counts, dtype=int)
        object.__setattr__(self, "discrepancies", d)
        object.__setattr__(self, "counts", c)
        if not (d.shape == c.shape == (len(self.flags),)):
            raise ValueError("discrepancies, counts and flags must have equal length")
        for dd, fl in zip(d, self.flags):
            if fl == "ok" and not np.isfinite(dd):
                raise ValueError("non-finite discrepancy must be flagged")

    @property
    def k(self) -> int:
        return self.discrepancies.shape[0]

    @property
    def has_infinite(self) -> bool:
        return any(f != "ok" for f in self.flags)


@dataclass
class DiscrepancyTable:
    """Rows keyed by K over a contiguous scanned range."""

    rows: Dict[int, DiscrepancyRow]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("empty discrepancy table")
        for k, row in self.rows.items():
            if row.k != k:
                raise ValueError(f"row for K={k} has {row.k} components")

    @property
    def k_values(self) -> List[int]:
        return sorted(self.rows)


def acdc_loss(discrepancies, rho: float, weighting: str = UNWEIGHTED, counts=None) -> float:
    """Accumulated cutoff loss at a single rho.

    unweighted: sum_k max(0, d_k - rho); counts: sum_k N_k * max(0, d_k - rho).
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    d = np.asarray(discrepancies, dtype=float)
    excess = np.maximum(0.0, d - rho)
    if weighting == UNWEIGHTED:
        return float(np.sum(excess))
    if weighting == COUNT_WEIGHTED:
        if counts is None:
            raise ValueError("count-weighted loss needs per-component counts")
        c = np.asarray(counts, dtype=float)
        if c.shape != d.shape:
            raise ValueError("counts length must match discrepancies")
        return float(np.sum(c * excess))
    raise ValueError(f"unknown weighting {weighting!r}")


def select_k(per_k_losses: Dict[int, float]) -> int:
    """Smallest K attaining the minimum loss."""
    if not per_k_losses:
        raise ValueError("empty loss map")
    best = min(per_k_losses.values())
    return min(k for k, v in per_k_losses.items() if v == best)


@dataclass(frozen=True)
class LossCurve:
    """Exact piecewise-linear representation of rho -> R^rho for one K.

    knots are the sorted distinct positive discrepancies; the curve is linear
    between consecutive knots, flat at 0 beyond the last one. has_infinite
    marks curves whose K carries a flagged component: those evaluate to +inf
    at every finite rho.
    """

    knots: np.ndarray
    knot_values: np.ndarray
    value_at_zero: float
    slopes: np.ndarray  # slope on [0,t1), [t1,t2), ..., [t_m, inf)
    has_infinite: bool = False

    def evaluate(self, rho):
        rho_arr = np.asarray(rho, dtype=float)
        if self.has_infinite:
            out = np.full(rho_arr.shape, np.inf)
            return float(out) if rho_arr.ndim == 0 else out
        if self.knots.size == 0:
            out = np.zeros(rho_arr.shape)
            return float(out) if rho_arr.ndim == 0 else out
        idx = np.searchsorted(self.knots, rho_arr, side="right")
        base_rho = np.where(idx == 0, 0.0, self.knots[idx - 1])
        base_val = np.where(idx == 0, self.value_at_zero, self.knot_values[idx - 1])
        out = base_val + self.slopes[idx] * (rho_arr - base_rho)
        return float(out) if rho_arr.ndim == 0 else out

    @property
    def max_knot(self) -> float:
        return float(self.knots[-1]) if self.knots.size else 0.0


def build_loss_curve(row: DiscrepancyRow, weighting: str = UNWEIGHTED) -> LossCurve:
    """Exact loss curve for one K's discrepancy row."""
    d = row.discrepancies
    finite = np.isfinite(d)
    w = np.ones_like(d) if weighting == UNWEIGHTED else row.counts.astype(float)
    if weighting not in (UNWEIGHTED, COUNT_WEIGHTED):
        raise ValueError(f"unknown weighting {weighting!r}")
    df, wf = d[finite], w[finite]
    knots = np.unique(df[df > 0])
    # knot values via the same direct summation as acdc_loss, so the two routes
    # agree to float roundoff
    knot_values = np.array([np.sum(wf * np.maximum(0.0, df - t)) for t in knots])
    value_at_zero = float(np.sum(wf * np.maximum(0.0, df)))
    bounds = np.concatenate([[0.0], knots])
    slopes = np.array([-np.sum(wf[df > b]) for b in bounds])
    return LossCurve(
        knots=knots,
        knot_values=knot_values,
        value_at_zero=value_at_zero,
        slopes=slopes,
        has_infinite=row.has_infinite,
    )


def build_loss_curves(table: DiscrepancyTable, weighting: str = UNWEIGHTED) -> Dict[int, LossCurve]:
    return {k: build_loss_curve(row, weighting) for k, row in table.rows.items()}


@dataclass(frozen=True)
class AutoRhoConfig:
    """Automated rho selection knobs; None fields resolve from the curves.

    delta_min defaults to 0.1*(range of finite discrepancies), lam to
    0.01*(max positive discrepancy), rho_grid_max to the largest knot.
    """

    delta_min: Optional[float] = None
    lam: Optional[float] = None
    rho_grid_max: Optional[float] = None

    def __post_init__(self):
        if self.delta_min is not None and not self.delta_min > 0:
            raise ValueError("delta_min must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class SelectionResult:
    k_hat: int
    rho_used: float
    mode: str
    per_k_losses: Dict[int, float]
    stability_interval: Optional[Tuple[float, float]] = None
    diagnostics: dict = field(default_factory=dict)


def _resolve_auto_cfg(curves: Dict[int, LossCurve], cfg: AutoRhoConfig):
    knots = np.concatenate([c.knots for c in curves.values()])
    max_knot = float(knots.max()) if knots.size else 1.0
    min_knot = float(knots.min()) if knots.size else 0.0
    # "range of observed discrepancies", read off the curves' positive knots
    span = max_knot - min_knot
    if span <= 0:
        span = max_knot if max_knot > 0 else 1e-12
    delta_min = cfg.delta_min if cfg.delta_min is not None else 0.1 * span
    lam = cfg.lam if cfg.lam is not None else 0.01 * max(max_knot, 1e-12)
    if lam <= 0:
        lam = 1e-12
    rho_hi = cfg.rho_grid_max if cfg.rho_grid_max is not None else max_knot
    return delta_min, lam, rho_hi


def _stability_intervals(
    curves: Dict[int, LossCurve], lam: float, rho_hi: float
) -> List[Tuple[int, float, float]]:
    """Maximal intervals of [0, rho_hi] on which one K's penalized curve is the
    strict pointwise minimum, in increasing rho order."""
    ks = sorted(curves)
    finite_ks = [k for k in ks if not curves[k].has_infinite]
    if not finite_ks:
        finite_ks = ks  # everything infinite: fall back to raw order
    pts = {0.0, rho_hi}
    for k in finite_ks:
        pts.update(t for t in curves[k].knots.tolist() if 0.0 <= t <= rho_hi)
    base = sorted(pts)
    # crossing points of each curve pair, computed per elementary segment of the
    # merged knot grid (both curves are linear inside a segment)
    cross = set()
    for i, k1 in enumerate(finite_ks):
        for k2 in finite_ks[i + 1 :]:
            c1, c2 = curves[k1], curves[k2]
            for lo, hi in zip(base[:-1], base[1:]):
                if hi <= lo:
                    continue
                f_lo = (c1.evaluate(lo) + lam * k1) - (c2.evaluate(lo) + lam * k2)
                f_hi = (c1.evaluate(hi) + lam * k1) - (c2.evaluate(hi) + lam * k2)
                if f_lo == 0.0 or f_hi == 0.0:
                    continue
                if (f_lo > 0) != (f_hi > 0):
                    t = lo + (hi - lo) * (-f_lo) / (f_hi - f_lo)
                    if lo < t < hi:
                        cross.add(float(t))
    grid = sorted(pts | cross)
    intervals: List[Tuple[int, float, float]] = []
    owner = None
    start = None
    for lo, hi in zip(grid[:-1], grid[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        vals = {k: curves[k].evaluate(mid) + lam * k for k in finite_ks}
        best = min(vals.values())
        winners = [k for k, v in vals.items() if v == best]
        seg_owner = winners[0] if len(winners) == 1 else None
        if seg_owner != owner:
            if owner is not None:
                intervals.append((owner, start, lo))
            owner = seg_owner
            start = lo
    if owner is not None:
        intervals.append((owner, start, grid[-1]))
    return intervals


def auto_select_rho(curves: Dict[int, LossCurve], cfg: AutoRhoConfig = AutoRhoConfig()) -> SelectionResult:
    """Automated rho: smallest-rho stability interval of width >= delta_min.

    Scans the penalized curves R^rho(K) + lam*K over [0, rho_grid_max]; the
    first maximal interval on which a single K is the strict minimum and whose
    width reaches delta_min decides. If none qualifies, the K holding the
    widest interval is returned with a "no-stable-interval" diagnostic flag.
    """
    if not curves:
        raise ValueError("no loss curves supplied")
    delta_min, lam, rho_hi = _resolve_auto_cfg(curves, cfg)
    intervals = _stability_intervals(curves, lam, rho_hi)
    diagnostics = {
        "lambda": lam,
        "delta_min": delta_min,
        "rho_grid_max": rho_hi,
        "intervals": [(k, lo, hi) for k, lo, hi in intervals],
        "flags": [],
    }
    chosen = None
    for k, lo, hi in intervals:
        if hi - lo >= delta_min:
            chosen = (k, lo, hi)
            break
    if chosen is None:
        diagnostics["flags"].append("no-stable-interval")
        if intervals:
            chosen = max(intervals, key=lambda t: t[2] - t[1])
        else:
            # no ownership anywhere (all-tied curves): fall back to smallest K
            diagnostics["flags"].append("no-owned-interval")
            chosen = (sorted(curves)[0], 0.0, 0.0)
    k_hat, lo, hi = chosen
    losses = {k: float(c.evaluate(lo)) for k, c in curves.items()}
    return SelectionResult(
        k_hat=k_hat,
        rho_used=float(lo),
        mode="auto-stability",
        per_k_losses=losses,
        stability_interval=(float(lo), float(hi)),
        diagnostics=diagnostics,
    )


def select_fixed_rho(curves: Dict[int, LossCurve], rho: float) -> SelectionResult:
    """K selection at a caller-fixed cutoff."""
    losses = {k: float(c.evaluate(rho)) for k, c in curves.items()}
    return SelectionResult(
        k_hat=select_k(losses),
        rho_used=float(rho),
        mode="fixed-rho",
        per_k_losses=losses,
    )


@dataclass(frozen=True)
class CalibrationRun:
    """One labeled run for supervised rho calibration.

    labeling_for(K) must return the predicted labels the pipeline would report
    at that K (e.g. responsibility argmax of the fitted K-component model).
    """

    curves: Dict[int, LossCurve]
    true_labels: np.ndarray
    labeling_for: Callable[[int], np.ndarray]


def calibrate_rho_supervised(
    runs: Sequence[CalibrationRun],
    metric: Callable[[np.ndarray, np.ndarray], float],
) -> float:
    """rho maximizing the metric of rho-induced selections, averaged over runs.

    The shared grid is {0} plus the union of every run's knots; the smallest
    maximizer is returned on ties.
    """
    if not runs:
        raise ValueError("empty calibration set")
    grid = {0.0}
    for run in runs:
        for c in run.curves.values():
            grid.update(c.knots.tolist())
    grid = sorted(grid)
    best_rho, best_score = None, -np.inf
    for rho in grid:
        total = 0.0
        for run in runs:
            losses = {k: float(c.evaluate(rho)) for k, c in run.curves.items()}
            k_hat = select_k(losses)
            total += metric(run.true_labels, run.labeling_for(k_hat))
        score = total / len(runs)
        if score > best_score:
            best_rho, best_score = rho, score
    return float(best_rho)


def run_acdc(
    data,
    model: str = "gmm",
    k_min: int = 1,
    k_max: int = 8,
    div=None,
    rho_mode: str = "auto",
    rho: Optional[float] = None,
    auto_cfg: AutoRhoConfig = AutoRhoConfig(),
    weighting: str = UNWEIGHTED,
    seed: int = 0,
    fit_cfg=None,
    true_labels=None,
    n_threads: int = 1,
):
    """End-to-end pipeline: fit each K, estimate component discrepancies,
    build loss curves, select K per the requested rho mode.

    Returns a SelectionResult whose diagnostics carry the per-K discrepancy
    table, counts, flags and fitted-model summaries.
    """
    from . import matfact, mixture  # deferred: avoids import cycles

    if k_min < 1 or k_min > k_max:
        raise ValueError("need 1 <= k_min <= k_max")
    if rho_mode not in ("fixed", "auto", "supervised"):
        raise ValueError(f"unknown rho_mode {rho_mode!r}")
    if rho_mode == "fixed" and (rho is None or rho < 0):
        raise ValueError("fixed rho_mode needs a nonnegative rho")
    if rho_mode == "supervised" and true_labels is None:
        raise ValueError("supervised rho_mode needs true_labels")
    data = np.asarray(data, dtype=float)
    if div is None:
        from .divergence import DivergenceConfig

        div = DivergenceConfig() if model == "gmm" else DivergenceConfig(method="kl-knn-percoord")

    ks = list(range(k_min, k_max + 1))
    seeds = [s.generate_state(1)[0] for s in np.random.SeedSequence(seed).spawn(len(ks))]

    def one_k(idx):
        k = ks[idx]
        sub = int(seeds[idx])
        if model == "gmm":
            cfg = fit_cfg if fit_cfg is not None else mixture.EmConfig(seed=sub)
            params, loglik = mixture.fit_gmm_em(data, k, cfg)
            row = mixture.component_discrepancies_mixture(params, data, div, seed=sub)
            labels = np.argmax(mixture.responsibilities(params, data), axis=1)
            info = {"loglik": float(loglik), "labels": labels, "params": params}
        elif model in ("poisson-nmf", "gaussian-fa"):
            cfg = fit_cfg if fit_cfg is not None else matfact.NmfConfig(seed=sub)
            if model == "poisson-nmf":
                params = matfact.fit_poisson_nmf(data, k, cfg)
            else:
                params = matfact.fit_gaussian_fa(data, k, cfg)
            row = matfact.component_discrepancies_pmf(params, data, div, seed=sub)
            info = {"params": params}
        else:
            raise ValueError(f"unknown model {model!r}")
        return k, row, info

    results = {}
    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for k, row, info in pool.map(one_k, range(len(ks))):
                results[k] = (row, info)
    else:
        for idx in range(len(ks)):
            k, row, info = one_k(idx)
            results[k] = (row, info)

    table = DiscrepancyTable({k: results[k][0] for k in ks})
    curves = build_loss_curves(table, weighting)

    if rho_mode == "auto":
        sel = auto_select_rho(curves, auto_cfg)
    elif rho_mode == "fixed":
        sel = select_fixed_rho(curves, rho)
    else:
        from .metrics import f_measure

        if model != "gmm":
            raise ValueError("supervised rho_mode needs a labeled clustering model")
        run = CalibrationRun(
            curves=curves,
            true_labels=np.asarray(true_labels),
            labeling_for=lambda k: results[k][1].get("labels"),
        )
        rho_star = calibrate_rho_supervised([run], f_measure)
        sel = select_fixed_rho(curves, rho_star)
        sel = SelectionResult(
            k_hat=sel.k_hat,
            rho_used=sel.rho_used,
            mode="supervised",
            per_k_losses=sel.per_k_losses,
            stability_interval=sel.stability_interval,
            diagnostics=dict(sel.diagnostics),
        )

    diagnostics = dict(sel.diagnostics)
    diagnostics["weighting"] = weighting
    diagnostics["model"] = model
    diagnostics["per_k"] = {
        k: {
            "discrepancies": results[k][0].discrepancies.tolist(),
            "counts": results[k][0].counts.tolist(),
            "flags": list(results[k][0].flags),
            **(
                {"loglik": results[k][1]["loglik"]}
                if "loglik" in results[k][1]
                else {}
            ),
        }
        for k in ks
    }
    diagnostics["_fits"] = {k: results[k][1] for k in ks}
    diagnostics["_curves"] = curves
    return SelectionResult(
        k_hat=sel.k_hat,
        rho_used=sel.rho_used,
        mode=sel.mode,
        per_k_losses=sel.per_k_losses,
        stability_interval=sel.stability_interval,
        diagnostics=diagnostics,
    )
