"""Cutoff criterion: loss evaluation, exact piecewise-linear curves, the
automated stability-interval rho scan, and supervised rho calibration.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acdc import criterion as cr
from acdc.metrics import f_measure


def make_row(discrepancies, counts=None, flags=None):
    d = np.asarray(discrepancies, dtype=float)
    if counts is None:
        counts = np.full(d.shape[0], 10, dtype=int)
    if flags is None:
        flags = tuple("ok" if np.isfinite(v) else "infinite" for v in d)
    return cr.DiscrepancyRow(discrepancies=d, counts=counts, flags=flags)


# ------------------------------------------------------------------- loss


def test_loss_partial_excess():
    assert cr.acdc_loss([0.5, 1.2], 1.0) == pytest.approx(0.2, abs=1e-15)


def test_loss_zero_beyond_max():
    assert cr.acdc_loss([0.5, 1.2], 1.2) == 0.0
    assert cr.acdc_loss([0.5, 1.2], 3.0) == 0.0


def test_loss_count_weighted():
    val = cr.acdc_loss([0.5, 1.2], 1.0, weighting="counts", counts=[100, 50])
    assert val == pytest.approx(10.0, abs=1e-12)


def test_loss_count_weighted_needs_counts():
    with pytest.raises(ValueError):
        cr.acdc_loss([0.5], 0.1, weighting="counts")


def test_loss_rejects_negative_rho():
    with pytest.raises(ValueError):
        cr.acdc_loss([0.5], -0.1)


def test_select_k_smallest_argmin():
    assert cr.select_k({1: 0.3, 2: 0.0, 3: 0.0}) == 2
    assert cr.select_k({1: 0.0, 2: 0.0, 3: 0.0}) == 1
    assert cr.select_k({2: 0.9, 3: 0.5, 4: 0.1, 5: 0.2}) == 4


@given(st.floats(0.001, 100.0), st.integers(0, 10_000))
@settings(deadline=None, max_examples=50)
def test_select_k_shift_invariance(shift, seed):
    rng = np.random.default_rng(seed)
    losses = {k: float(v) for k, v in enumerate(rng.random(5), start=1)}
    shifted = {k: v + shift for k, v in losses.items()}
    assert cr.select_k(losses) == cr.select_k(shifted)


# ------------------------------------------------------------------ curves


def test_curve_value_at_zero_is_total():
    row = make_row([0.3, 0.7, 1.1])
    curve = cr.build_loss_curve(row)
    assert curve.evaluate(0.0) == pytest.approx(2.1, abs=1e-12)


def test_curve_single_component_slopes():
    curve = cr.build_loss_curve(make_row([0.7]))
    assert np.array_equal(curve.knots, [0.7])
    assert np.array_equal(curve.slopes, [-1.0, 0.0])
    assert curve.evaluate(0.2) == pytest.approx(0.5, abs=1e-15)
    assert curve.evaluate(0.7) == 0.0
    assert curve.evaluate(5.0) == 0.0


@given(st.integers(0, 10_000), st.booleans())
@settings(deadline=None, max_examples=60)
def test_curve_matches_direct_loss(seed, weighted):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 8))
    d = rng.uniform(0.0, 3.0, size=k)
    counts = rng.integers(1, 200, size=k)
    row = make_row(d, counts=counts)
    weighting = "counts" if weighted else "unweighted"
    curve = cr.build_loss_curve(row, weighting)
    for rho in rng.uniform(0.0, 3.5, size=100):
        direct = cr.acdc_loss(d, float(rho), weighting, counts=counts)
        assert abs(curve.evaluate(float(rho)) - direct) <= 1e-12


@given(st.integers(0, 10_000))
@settings(deadline=None, max_examples=60)
def test_curve_nonincreasing_and_convex(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, 2.0, size=int(rng.integers(1, 7)))
    curve = cr.build_loss_curve(make_row(d))
    grid = np.sort(rng.uniform(0.0, 2.5, size=60))
    vals = curve.evaluate(grid)
    assert np.all(np.diff(vals) <= 1e-12)
    # piecewise-linear convexity: slopes nondecreasing
    assert np.all(np.diff(curve.slopes) >= 0)
    assert curve.evaluate(float(np.max(d)) if d.size else 0.0) <= 1e-12


def test_curve_infinite_flag_blocks_selection():
    rows = {
        1: make_row([np.inf], flags=("infinite",)),
        2: make_row([0.2, 0.3]),
    }
    curves = cr.build_loss_curves(cr.DiscrepancyTable(rows))
    assert curves[1].evaluate(0.5) == np.inf
    sel = cr.auto_select_rho(curves)
    assert sel.k_hat == 2
    assert cr.select_fixed_rho(curves, 0.1).k_hat == 2


def test_discrepancy_row_validation():
    with pytest.raises(ValueError):
        cr.DiscrepancyRow(np.array([np.inf]), np.array([3]), ("ok",))
    with pytest.raises(ValueError):
        cr.DiscrepancyRow(np.array([0.1, 0.2]), np.array([3]), ("ok", "ok"))
    with pytest.raises(ValueError):
        cr.DiscrepancyTable({2: make_row([0.1])})


# ---------------------------------------------------------------- auto rho


def two_curve_instance():
    rows = {
        2: make_row([0.4, 0.5]),
        3: make_row([0.1, 0.1, 0.1]),
    }
    return cr.build_loss_curves(cr.DiscrepancyTable(rows))


def test_auto_rho_hand_traced_instance():
    # penalized curves P_2 = R_2 + 0.10 and P_3 = R_3 + 0.15 cross once, at
    # rho = 0.45 (inside the segment [0.4, 0.5] where P_2 = 0.6 - rho meets
    # P_3 = 0.15); K=3 owns [0, 0.45), K=2 owns the rest
    curves = two_curve_instance()
    sel = cr.auto_select_rho(curves, cr.AutoRhoConfig(delta_min=0.2, lam=0.05))
    assert sel.k_hat == 3
    assert sel.rho_used == 0.0
    lo, hi = sel.stability_interval
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert hi == pytest.approx(0.45, abs=1e-12)
    assert hi - lo >= 0.2
    assert sel.diagnostics["flags"] == []


def test_auto_rho_single_dominant_curve():
    rows = {1: make_row([2.0]), 2: make_row([0.1, 0.1])}
    curves = cr.build_loss_curves(cr.DiscrepancyTable(rows))
    sel = cr.auto_select_rho(curves, cr.AutoRhoConfig(delta_min=0.05, lam=0.01))
    assert sel.k_hat == 2
    assert sel.rho_used == 0.0


def test_auto_rho_fallback_widest_interval():
    curves = two_curve_instance()
    sel = cr.auto_select_rho(curves, cr.AutoRhoConfig(delta_min=10.0, lam=0.05))
    assert "no-stable-interval" in sel.diagnostics["flags"]
    # K=3 holds [0, 0.45), K=2 only [0.45, 0.5]: the widest goes to K=3
    assert sel.k_hat == 3


def test_auto_rho_all_infinite_falls_back_to_smallest_k():
    rows = {
        1: make_row([np.inf], flags=("infinite",)),
        2: make_row([np.inf, np.inf], flags=("infinite", "infinite")),
    }
    curves = cr.build_loss_curves(cr.DiscrepancyTable(rows))
    sel = cr.auto_select_rho(curves)
    assert sel.k_hat == 1
    assert "no-owned-interval" in sel.diagnostics["flags"]


def test_auto_rho_default_resolution():
    curves = two_curve_instance()
    delta_min, lam, rho_hi = cr._resolve_auto_cfg(curves, cr.AutoRhoConfig())
    assert rho_hi == 0.5
    assert lam == pytest.approx(0.005, abs=1e-15)  # 0.01 * max knot
    assert delta_min == pytest.approx(0.04, abs=1e-15)  # 0.1 * (0.5 - 0.1)


@given(st.floats(0.05, 50.0), st.integers(0, 10_000))
@settings(deadline=None, max_examples=40)
def test_auto_rho_scale_invariance(scale, seed):
    # rescaling discrepancies, lambda, delta_min and the rho axis together
    # leaves the chosen K unchanged
    rng = np.random.default_rng(seed)
    rows = {
        k: make_row(rng.uniform(0.05, 2.0, size=k)) for k in range(1, 5)
    }
    base = cr.build_loss_curves(cr.DiscrepancyTable(rows))
    scaled_rows = {
        k: make_row(row.discrepancies * scale, counts=row.counts)
        for k, row in rows.items()
    }
    scaled = cr.build_loss_curves(cr.DiscrepancyTable(scaled_rows))
    cfg = cr.AutoRhoConfig(delta_min=0.13, lam=0.02)
    cfg_scaled = cr.AutoRhoConfig(delta_min=0.13 * scale, lam=0.02 * scale)
    assert cr.auto_select_rho(base, cfg).k_hat == cr.auto_select_rho(scaled, cfg_scaled).k_hat


def test_fixed_rho_selection():
    # the fixed mode ranks raw (unpenalized) losses: here K=3 is below K=2 at
    # every rho < 0.5; once both reach 0 the tie goes to the smaller K
    curves = two_curve_instance()
    sel = cr.select_fixed_rho(curves, 0.46)
    assert sel.mode == "fixed-rho"
    assert sel.k_hat == 3
    assert cr.select_fixed_rho(curves, 0.0).k_hat == 3
    assert cr.select_fixed_rho(curves, 2.0).k_hat == 2


# ------------------------------------------------------------- supervised


def calibration_run(d1, d2, truth):
    rows = {1: make_row(d1), 2: make_row(d2)}
    curves = cr.build_loss_curves(cr.DiscrepancyTable(rows))
    return cr.CalibrationRun(
        curves=curves,
        true_labels=truth,
        labeling_for=lambda k: truth if k == 2 else np.zeros_like(truth),
    )


def test_supervised_single_run_smallest_maximizer():
    truth = np.array([0] * 30 + [1] * 30)
    # K=2 wins exactly on the grid points 1.0 and 1.3
    run = calibration_run([1.45], [1.0, 1.3], truth)
    assert cr.calibrate_rho_supervised([run], f_measure) == pytest.approx(1.0, abs=1e-12)


def test_supervised_two_runs_overlap():
    truth = np.array([0] * 30 + [1] * 30)
    # run bands on the shared grid: [1.0, 1.3] and [1.1, 1.5]; both runs score
    # 1 only on the overlap, whose smallest grid point is 1.1
    run_a = calibration_run([1.45], [1.0, 1.3], truth)
    run_b = calibration_run([1.55], [1.1, 1.5], truth)
    rho = cr.calibrate_rho_supervised([run_a, run_b], f_measure)
    assert rho == pytest.approx(1.1, abs=1e-12)


def test_supervised_rejects_empty():
    with pytest.raises(ValueError):
        cr.calibrate_rho_supervised([], f_measure)


# ---------------------------------------------------------------- pipeline


def blob_data(seed=0, n_per=300):
    rng = np.random.default_rng(seed)
    a = rng.normal([-6.0, 0.0], 1.0, size=(n_per, 2))
    b = rng.normal([6.0, 0.0], 1.0, size=(n_per, 2))
    return np.vstack([a, b])


def test_run_acdc_two_blobs():
    sel = cr.run_acdc(blob_data(), model="gmm", k_min=1, k_max=3, seed=0)
    assert sel.k_hat == 2
    assert sel.mode == "auto-stability"
    per_k = sel.diagnostics["per_k"]
    assert sorted(per_k) == [1, 2, 3]
    assert all(len(per_k[k]["discrepancies"]) == k for k in per_k)


def test_run_acdc_degenerate_range():
    sel = cr.run_acdc(blob_data(), model="gmm", k_min=2, k_max=2, seed=0)
    assert sel.k_hat == 2


def test_run_acdc_thread_count_does_not_change_results():
    single = cr.run_acdc(blob_data(), model="gmm", k_min=1, k_max=3, seed=1, n_threads=1)
    multi = cr.run_acdc(blob_data(), model="gmm", k_min=1, k_max=3, seed=1, n_threads=3)
    assert single.k_hat == multi.k_hat
    assert single.rho_used == multi.rho_used
    assert single.per_k_losses == multi.per_k_losses
    for k in single.diagnostics["per_k"]:
        assert (
            single.diagnostics["per_k"][k]["discrepancies"]
            == multi.diagnostics["per_k"][k]["discrepancies"]
        )


def test_run_acdc_argument_validation():
    data = blob_data()
    with pytest.raises(ValueError):
        cr.run_acdc(data, k_min=3, k_max=2)
    with pytest.raises(ValueError):
        cr.run_acdc(data, rho_mode="fixed")  # missing rho
    with pytest.raises(ValueError):
        cr.run_acdc(data, rho_mode="supervised")  # missing labels
    with pytest.raises(ValueError):
        cr.run_acdc(data, model="poisson-nmf", rho_mode="supervised", true_labels=np.zeros(160))


def test_run_acdc_supervised_mode():
    data = blob_data(seed=3, n_per=150)
    truth = np.array([0] * 150 + [1] * 150)
    sel = cr.run_acdc(
        data, model="gmm", k_min=1, k_max=3, rho_mode="supervised",
        true_labels=truth, seed=3,
    )
    assert sel.mode == "supervised"
    assert sel.k_hat == 2
    assert sel.rho_used >= 0.0
