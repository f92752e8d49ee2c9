"""Tests for the seeded synthetic data generators."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import skew

from acdc import synth


# ---------------------------------------------------------------- correlation


def test_correlation_matrix_unit_diagonal():
    for d, sc in [(1, 0.5), (4, 0.6), (30, 2.0)]:
        c = synth.correlation_matrix(d, sc)
        assert np.allclose(np.diag(c), 1.0, atol=0.0)
        assert np.allclose(c, c.T, atol=0.0)
        assert np.all((c > 0.0) & (c <= 1.0))
    with pytest.raises(ValueError):
        synth.correlation_matrix(3, 0.0)


@given(d=st.integers(2, 100), sc=st.floats(0.1, 5.0))
@settings(deadline=None, max_examples=40)
def test_correlation_matrix_positive_definite(d, sc):
    c = synth.correlation_matrix(d, sc)
    assert np.linalg.eigvalsh(c).min() >= -1e-10
    chol = synth.cholesky_psd(c)
    assert np.max(np.abs(chol @ chol.T - c)) <= 1e-7


def test_cholesky_psd_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        synth.cholesky_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


# ---------------------------------------------------------------- skew mixture


def test_skew_spec_validation():
    kw = dict(locations=[[0.0], [1.0]], shapes=[[0.0], [0.0]])
    with pytest.raises(ValueError):
        synth.SkewMixtureSpec(weights=[0.6, 0.6], **kw)
    with pytest.raises(ValueError):
        synth.SkewMixtureSpec(weights=[1.4, -0.4], **kw)
    with pytest.raises(ValueError):
        synth.SkewMixtureSpec(weights=[0.5, 0.5], locations=[[0.0], [1.0]], shapes=[[0.0]])
    with pytest.raises(ValueError):
        synth.SkewMixtureSpec(weights=[0.5, 0.5], n=0, **kw)
    spec = synth.SkewMixtureSpec(weights=[0.5, 0.5], **kw)
    assert spec.k == 2 and spec.dim == 1
    assert np.all(spec.scales == 1.0)


def test_zero_shape_matches_gaussian_moments():
    loc = np.array([[1.0, -2.0, 3.0]])
    scales = np.array([[0.5, 1.0, 2.0]])
    n = 20000
    spec = synth.SkewMixtureSpec(
        weights=[1.0],
        locations=loc,
        shapes=[[0.0, 0.0, 0.0]],
        scales=scales,
        sigma_corr=1.2,
        n=n,
        seed=3,
    )
    x, labels = synth.gen_skew_normal_mixture(spec)
    assert np.all(labels == 0)
    cmat = synth.correlation_matrix(3, 1.2)
    v = scales[0][:, None] * cmat * scales[0][None, :]
    mean_se = np.sqrt(np.diag(v) / n)
    assert np.all(np.abs(x.mean(axis=0) - loc[0]) <= 3.0 * mean_se)
    cov_se = np.sqrt((np.outer(np.diag(v), np.diag(v)) + v**2) / n)
    assert np.all(np.abs(np.cov(x.T) - v) <= 3.0 * cov_se)


def test_different_scenario_two_skewed_clusters():
    spec = synth.skew_scenario("different", n=10000, seed=0)
    assert np.array_equal(spec.locations, [[-3.0], [3.0]])
    assert np.array_equal(spec.shapes, [[-10.0], [-1.0]])
    x, labels = synth.gen_skew_normal_mixture(spec)
    n0 = int(np.sum(labels == 0))
    assert abs(n0 - 5000) <= 3.0 * np.sqrt(10000 * 0.25)
    # strong negative skew at shape -10, mild at shape -1
    assert skew(x[labels == 0, 0]) < -0.9
    assert -0.35 < skew(x[labels == 1, 0]) < -0.05


def test_same_scenario_and_unknown_name():
    spec = synth.skew_scenario("same", n=100, seed=1)
    assert np.array_equal(spec.shapes, [[-10.0], [-10.0]])
    with pytest.raises(ValueError):
        synth.skew_scenario("opposite")


def test_skew_labels_track_components():
    spec = synth.skew_scenario("different", n=4000, seed=2)
    x, labels = synth.gen_skew_normal_mixture(spec)
    assert x.shape == (4000, 1) and labels.shape == (4000,)
    assert x[labels == 0].mean() < -1.5
    assert x[labels == 1].mean() > 1.5


def test_skew_deterministic_per_seed():
    spec_a = synth.skew_scenario("different", n=500, seed=9)
    x1, l1 = synth.gen_skew_normal_mixture(spec_a)
    x2, l2 = synth.gen_skew_normal_mixture(spec_a)
    assert np.array_equal(x1, x2) and np.array_equal(l1, l2)
    x3, _ = synth.gen_skew_normal_mixture(synth.skew_scenario("different", n=500, seed=10))
    assert not np.array_equal(x1, x3)


@given(seed=st.integers(0, 10_000), w0=st.floats(0.2, 0.8))
@settings(deadline=None, max_examples=20)
def test_skew_generator_determinism_property(seed, w0):
    spec = synth.SkewMixtureSpec(
        weights=[w0, 1.0 - w0],
        locations=[[-2.0, 0.0], [2.0, 1.0]],
        shapes=[[-3.0, 0.0], [2.0, 1.0]],
        sigma_corr=0.8,
        n=60,
        seed=seed,
    )
    x1, l1 = synth.gen_skew_normal_mixture(spec)
    x2, l2 = synth.gen_skew_normal_mixture(spec)
    assert np.array_equal(x1, x2) and np.array_equal(l1, l2)


# ---------------------------------------------------------------- gmm


def test_gen_gmm_single_component_clt():
    mean = np.array([2.0, -1.0])
    x, labels = synth.gen_gmm([1.0], [mean], np.tile(np.eye(2), (1, 1, 1)), n=5000, seed=0)
    assert np.all(labels == 0)
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 4.0 / np.sqrt(5000))


def test_gen_gmm_weight_proportions():
    x, labels = synth.gen_gmm(
        [0.3, 0.7], [[-5.0], [5.0]], np.ones((2, 1)), n=10000, seed=1
    )
    n0 = int(np.sum(labels == 0))
    assert abs(n0 - 3000) <= 3.0 * np.sqrt(10000 * 0.3 * 0.7)
    assert x[labels == 0].mean() < 0 < x[labels == 1].mean()


def test_gen_gmm_reproducible_and_seed_sensitive():
    args = ([0.5, 0.5], [[-3.0, 0.0], [3.0, 0.0]], np.tile(np.eye(2), (2, 1, 1)), 400)
    x1, l1 = synth.gen_gmm(*args, seed=7)
    x2, l2 = synth.gen_gmm(*args, seed=7)
    x3, _ = synth.gen_gmm(*args, seed=8)
    assert np.array_equal(x1, x2) and np.array_equal(l1, l2)
    assert not np.array_equal(x1, x3)


def test_gen_gmm_diagonal_matches_full_identity():
    weights = [0.4, 0.6]
    means = [[-1.0, 2.0], [3.0, 0.0]]
    xd, ld = synth.gen_gmm(weights, means, np.ones((2, 2)), n=300, seed=5)
    xf, lf = synth.gen_gmm(weights, means, np.tile(np.eye(2), (2, 1, 1)), n=300, seed=5)
    assert np.array_equal(ld, lf)
    assert np.allclose(xd, xf, atol=1e-12)


def test_gen_gmm_rejects_bad_weights():
    with pytest.raises(ValueError):
        synth.gen_gmm([0.5, 0.6], [[0.0], [1.0]], np.ones((2, 1)), n=10)


# ---------------------------------------------------------------- pmf data


def test_pmf_spec_validation():
    phi = np.array([[0.5, 0.5], [0.2, 0.8]])
    z = np.ones((4, 2))
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=phi, loadings=np.ones((4, 3)))
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=phi, loadings=-z)
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=np.array([[0.5, 0.4], [0.2, 0.8]]), loadings=z)
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="zero-inflated")
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="perturbed", scale=0.0)
    with pytest.raises(ValueError):
        synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="overdispersed", dispersion=0.0)


def test_pmf_well_specified_cell_means():
    phi = np.array([[0.5, 0.3, 0.1, 0.1], [0.1, 0.2, 0.3, 0.4]])
    z = np.array([[10.0, 5.0], [2.0, 20.0], [7.0, 7.0]])
    reps = 10000
    acc = np.zeros((3, 4))
    for s in range(reps):
        x, _, _ = synth.gen_pmf_data(
            synth.PmfSynthSpec(signatures=phi, loadings=z, seed=s)
        )
        acc += x
    mu = z @ phi
    assert np.all(np.abs(acc / reps - mu) <= 3.0 * np.sqrt(mu / reps))


def test_pmf_overdispersed_inflates_variance():
    phi = np.array([[0.6, 0.4], [0.2, 0.8]])
    z = np.full((2000, 2), 10.0)
    x, _, _ = synth.gen_pmf_data(
        synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="overdispersed", dispersion=2.0, seed=2)
    )
    # per-column cell means are constant, so var/mean isolates the dispersion
    ratios = x.var(axis=0) / x.mean(axis=0)
    assert np.all(ratios > 1.2)
    assert abs(x.mean() / (z @ phi).mean() - 1.0) < 0.05
    xw, _, _ = synth.gen_pmf_data(synth.PmfSynthSpec(signatures=phi, loadings=z, seed=2))
    ratios_w = xw.var(axis=0) / xw.mean(axis=0)
    assert np.all((ratios_w > 0.85) & (ratios_w < 1.15))


def test_pmf_perturbed_small_scale_matches_well_specified():
    phi = np.array([[0.5, 0.3, 0.2], [0.1, 0.3, 0.6]])
    z = np.array([[20.0, 10.0], [5.0, 25.0], [12.0, 12.0]])
    reps = 3000
    acc = np.zeros((3, 3))
    for s in range(reps):
        x, _, _ = synth.gen_pmf_data(
            synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="perturbed", scale=1e-6, seed=s)
        )
        acc += x
    mu = z @ phi
    assert np.all(np.abs(acc / reps - mu) <= 3.0 * np.sqrt(mu / reps))


def test_pmf_contaminated_adds_small_exposure():
    phi = np.array([[0.6, 0.4], [0.2, 0.8]])
    z = np.full((2000, 2), 10.0)
    xw, phi_w, _ = synth.gen_pmf_data(synth.PmfSynthSpec(signatures=phi, loadings=z, seed=1))
    xc, phi_c, z_c = synth.gen_pmf_data(
        synth.PmfSynthSpec(signatures=phi, loadings=z, scheme="contaminated", exposure=0.5, seed=1)
    )
    # ground truth excludes the contamination component
    assert phi_c.shape == phi.shape and z_c.shape == z.shape
    inflation = xc.mean() - xw.mean()
    expected = 0.5 * z.mean() / phi.shape[1]
    assert abs(inflation - expected) < 0.2
    assert np.array_equal(phi_w, phi)


def test_pmf_counts_are_integers_and_deterministic():
    phi, z = synth.random_pmf_truth(3, 50, 6, seed=4)
    assert phi.shape == (3, 6) and z.shape == (50, 3)
    assert np.allclose(phi.sum(axis=1), 1.0)
    assert np.all(z >= 0)
    spec = synth.PmfSynthSpec(signatures=phi, loadings=z, seed=11)
    x1, _, _ = synth.gen_pmf_data(spec)
    x2, _, _ = synth.gen_pmf_data(spec)
    assert x1.dtype == np.int64
    assert np.array_equal(x1, x2)
    x3, _, _ = synth.gen_pmf_data(
        synth.PmfSynthSpec(signatures=phi, loadings=z, seed=12)
    )
    assert not np.array_equal(x1, x3)
