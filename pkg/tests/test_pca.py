"""Standardization, correlation matrices, decomposition and reconstruction."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robpcr import pca as pca_mod
from robpcr.errors import ConvergenceError, DegenerateScaleError, DesignError, RobpcrError
from robpcr.lptn import lptn_params
from robpcr.pca import (
    apply_standardization,
    decompose,
    inlier_reconstruction_error,
    pairwise_residuals,
    reconstruct,
    robust_correlation,
    run_pca,
    sample_correlation,
    standardize,
    toy_covariates,
)
from robpcr.robust import map_location_scale, map_regression

P = lptn_params(0.95)


def _toy_errors(seed):
    C = toy_covariates(seed)
    rob, _ = run_pca(C, robust=True, p=P)
    nor, _ = run_pca(C, robust=False)
    inl = np.arange(20)
    return (
        inlier_reconstruction_error(C, reconstruct(rob, 1, original_scale=True), inl),
        inlier_reconstruction_error(C, reconstruct(nor, 1, original_scale=True), inl),
    )


def test_sample_standardization_idempotent():
    C, _ = standardize(np.random.default_rng(0).standard_normal((30, 3)))
    C2, stats = standardize(C)
    np.testing.assert_allclose(C2, C, atol=1e-12)
    np.testing.assert_allclose(stats.loc, 0.0, atol=1e-12)
    np.testing.assert_allclose(stats.scale, 1.0, atol=1e-12)


def test_sample_stats_of_toy_first_column():
    c1 = np.arange(1, 22, dtype=float) - 11
    _, stats = standardize(c1[:, None])
    assert stats.loc[0] == 0.0
    np.testing.assert_allclose(stats.scale[0], np.std(np.arange(-10, 11), ddof=1), rtol=1e-15)


def test_robust_standardization_ignores_outlier():
    # at small n the MAP and the sample moments differ by sampling noise alone
    x = np.random.default_rng(1).standard_normal(200)
    col = np.r_[x, 50.0]
    _, stats = standardize(col[:, None], "robust", P)
    assert abs(stats.loc[0] - x.mean()) < 0.05
    assert abs(stats.scale[0] - x.std(ddof=1)) < 0.05
    assert stats.mode == "robust"


def test_constant_column_named():
    C = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(DegenerateScaleError) as info:
        standardize(C)
    assert info.value.column == 1


def test_standardize_input_checks():
    with pytest.raises(DesignError):
        standardize(np.ones((2, 2)))
    with pytest.raises(DesignError):
        standardize(np.array([[1.0, np.nan], [2.0, 1.0], [3.0, 0.0]]))
    with pytest.raises(DesignError):
        standardize(np.eye(3), mode="median")


def test_apply_standardization_reuses_stats():
    rng = np.random.default_rng(2)
    C_raw = rng.normal(5.0, 2.0, (20, 2))
    C, stats = standardize(C_raw)
    np.testing.assert_allclose(apply_standardization(C_raw, stats), C, rtol=1e-14)
    with pytest.raises(DesignError):
        apply_standardization(C_raw[:, :1], stats)


def test_sample_correlation_special_cases():
    x = np.random.default_rng(3).standard_normal(10)
    C, _ = standardize(np.column_stack([x, x]))
    np.testing.assert_allclose(sample_correlation(C)[0, 1], 1.0, rtol=1e-14)
    a = np.array([1.0, -1.0, 1.0, -1.0])
    b = np.array([1.0, 1.0, -1.0, -1.0])
    C, _ = standardize(np.column_stack([a, b]))
    np.testing.assert_allclose(sample_correlation(C)[0, 1], 0.0, atol=1e-15)


def test_sample_correlation_matches_pearson():
    C_raw = np.random.default_rng(4).standard_normal((20, 3))
    C, _ = standardize(C_raw)
    np.testing.assert_allclose(sample_correlation(C), np.corrcoef(C_raw, rowvar=False), atol=1e-10)


def test_robust_correlation_clean_gaussian():
    rng = np.random.default_rng(5)
    C_raw = rng.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]], 500)
    C, _ = standardize(C_raw, "robust", P)
    rc = robust_correlation(C, P)
    assert abs(rc.R[0, 1] - np.corrcoef(C_raw, rowvar=False)[0, 1]) < 0.05
    np.testing.assert_array_equal(np.diag(rc.R), 1.0)
    np.testing.assert_array_equal(rc.R, rc.R.T)


def test_robust_correlation_identical_columns():
    x = np.random.default_rng(6).standard_normal(15)
    rc = robust_correlation(np.column_stack([x, x]), P)
    np.testing.assert_allclose(rc.R[0, 1], 1.0, rtol=1e-12)
    assert rc.fits[(0, 1)] is None
    assert pairwise_residuals(rc, np.column_stack([x, x])) == {}


def test_toy_robust_entry_is_rescaled_inlier_slope():
    for seed in range(20):
        C_raw = toy_covariates(seed)
        C, stats = standardize(C_raw, "robust", P)
        rc = robust_correlation(C, P)
        X = np.column_stack([np.ones(21), C_raw[:, 0]])
        raw_slope = map_regression(X, C_raw[:, 1], P).beta[1]
        inlier_slope = np.polyfit(C_raw[:20, 0], C_raw[:20, 1], 1)[0]
        assert abs(raw_slope - inlier_slope) < 0.05
        np.testing.assert_allclose(rc.R[0, 1], raw_slope * stats.scale[0] / stats.scale[1], rtol=1e-6)


@pytest.mark.xfail(
    strict=True,
    reason="the (10, 20) point lies about 3 scales out in column 2 alone, so its marginal "
    "robust scale is inflated by roughly 10% and the standardized slope lands near 0.94",
)
def test_toy_robust_entry_near_inlier_pearson():
    for seed in range(20):
        C_raw = toy_covariates(seed)
        C, _ = standardize(C_raw, "robust", P)
        pearson_inliers = np.corrcoef(C_raw[:20], rowvar=False)[0, 1]
        assert abs(robust_correlation(C, P).R[0, 1] - pearson_inliers) < 0.05


@pytest.mark.xfail(strict=True, reason="the outlier moves the Pearson entry by only 0.02 to 0.04")
def test_toy_sample_entry_far_from_inlier_pearson():
    for seed in range(20):
        C_raw = toy_covariates(seed)
        Cs, _ = standardize(C_raw)
        pearson_inliers = np.corrcoef(C_raw[:20], rowvar=False)[0, 1]
        assert abs(sample_correlation(Cs)[0, 1] - pearson_inliers) > 0.05


def test_toy_outlier_flagged():
    # 20 Gaussian inliers produce an extra |z| > 2.5 in about a fifth of seeds
    exact = 0
    for seed in range(20):
        C, _ = standardize(toy_covariates(seed), "robust", P)
        flagged = pairwise_residuals(robust_correlation(C, P), C)[(0, 1)].flagged
        assert 20 in flagged
        exact += list(flagged) == [20]
    assert exact >= 14


def test_clipping_knob():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(30)
    C = np.column_stack([x, 1.5 * x + 0.01 * rng.standard_normal(30)])
    assert robust_correlation(C, P, clip=False).R[0, 1] > 1.0
    rc = robust_correlation(C, P)
    assert rc.R[0, 1] == 1.0 and rc.raw[0, 1] > 1.0 and rc.clipped


def test_robust_correlation_tags_pair(monkeypatch):
    def fail(X, y, p):
        raise ConvergenceError("stalled", best=None)

    monkeypatch.setattr(pca_mod, "map_regression", fail)
    with pytest.raises(ConvergenceError, match=r"columns \(0, 1\)") as info:
        robust_correlation(np.random.default_rng(8).standard_normal((10, 2)), P)
    assert info.value.pair == (0, 1)


def test_identity_cap_arithmetic():
    res = decompose(np.eye(3), np.zeros((4, 3)))
    np.testing.assert_allclose(res.eigenvalues, 1.0)
    assert res.q == 2


def test_two_by_two_closed_form():
    r = 0.6
    res = decompose(np.array([[1.0, r], [r, 1.0]]), np.zeros((3, 2)))
    np.testing.assert_allclose(res.eigenvalues, [1 + r, 1 - r], rtol=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(res.eigenvectors), s, rtol=1e-14)
    np.testing.assert_allclose(res.eigenvectors[:, 0], [s, s], rtol=1e-14)


def test_nonpositive_eigenvalues_excluded():
    R = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
    res = decompose(R, np.zeros((5, 3)), robust=True)
    assert res.excluded == (2,)
    assert res.all_eigenvalues[2] < 0
    assert res.r == 2 and np.all(res.eigenvalues > 0)
    with pytest.raises(RobpcrError, match="no positive"):
        decompose(-np.eye(2), np.zeros((3, 2)))


def test_decompose_input_checks():
    with pytest.raises(DesignError):
        decompose(np.eye(2), np.zeros((3, 3)))
    with pytest.raises(DesignError, match="symmetric"):
        decompose(np.array([[1.0, 0.2], [0.1, 1.0]]), np.zeros((3, 2)))
    with pytest.raises(DesignError):
        decompose(np.eye(2), np.zeros((3, 2)), cap=0.0)


def test_q_floored_at_one():
    R = np.array([[1.0, 0.99], [0.99, 1.0]])
    assert decompose(R, np.zeros((3, 2))).q == 1


def test_full_rank_reconstruction_exact():
    C_raw = np.random.default_rng(9).standard_normal((25, 4))
    res, _ = run_pca(C_raw, robust=False, cap=1.0)
    np.testing.assert_allclose(reconstruct(res, res.r), res.C, atol=1e-8)
    np.testing.assert_allclose(reconstruct(res, res.r, original_scale=True), C_raw, atol=1e-8)


def test_rank_one_reconstruction_exact():
    x = np.random.default_rng(10).standard_normal(12)
    res, _ = run_pca(np.column_stack([x, x]), robust=False)
    np.testing.assert_allclose(reconstruct(res, 1), res.C, atol=1e-8)
    with pytest.raises(DesignError):
        reconstruct(res, 2)


def test_normal_scores_standardized():
    res, _ = run_pca(np.random.default_rng(11).standard_normal((40, 5)), robust=False)
    n = 40
    Z = res.scores
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(Z.T @ Z, (n - 1) * np.eye(res.q), atol=1e-6)
    np.testing.assert_allclose(res.project(res.C), Z, atol=1e-10)


def test_robust_scores_unrescaled():
    res, _ = run_pca(np.random.default_rng(12).standard_normal((30, 3)), robust=True, p=P)
    np.testing.assert_allclose(res.scores, res.C @ res.eigenvectors[:, : res.q], rtol=1e-14)
    np.testing.assert_allclose(res.project(res.C), res.scores, rtol=1e-14)


def test_robust_path_matches_normal_on_clean_data():
    rng = np.random.default_rng(13)
    A = rng.standard_normal((3, 3))
    C_raw = rng.standard_normal((500, 3)) @ A
    rob, _ = run_pca(C_raw, robust=True, p=P)
    nor, _ = run_pca(C_raw, robust=False)
    q = min(rob.q, nor.q)
    # put both on the unit-variance scale before comparing
    zr = rob.scores[:, :q] / rob.scores[:, :q].std(axis=0, ddof=1)
    zn = nor.scores[:, :q]
    for j in range(q):
        s = np.sign(zr[:, j] @ zn[:, j])
        assert np.max(np.abs(s * zr[:, j] - zn[:, j])) < 0.05 * np.max(np.abs(zn[:, j])) + 0.05


def test_toy_robust_beats_traditional():
    ratios = []
    for seed in range(1, 21):
        er, en = _toy_errors(seed)
        assert er < en
        ratios.append(er / en)
    assert np.median(ratios) < 0.7


def test_sign_convention():
    res, _ = run_pca(np.random.default_rng(14).standard_normal((20, 4)), robust=False, cap=1.0)
    V = res.eigenvectors
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(V.shape[1])] > 0)
    flipped = res.C @ (-V[:, :2]) @ (-V[:, :2]).T
    np.testing.assert_allclose(flipped, reconstruct(res, 2), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 60), st.integers(2, 5), st.integers(0, 2**31))
def test_eckart_young_identity(n, ncol, seed):
    C_raw = np.random.default_rng(seed).standard_normal((n, ncol))
    res, _ = run_pca(C_raw, robust=False)
    lam = res.all_eigenvalues
    for q in range(1, res.r + 1):
        err = np.sum((res.C - reconstruct(res, q)) ** 2)
        np.testing.assert_allclose(err, (n - 1) * np.sum(lam[q:]), atol=1e-6 * n)


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(2, 5), st.integers(0, 2**31), st.floats(min_value=0.1, max_value=1.0))
def test_decomposition_invariants(n, ncol, seed, cap):
    C_raw = np.random.default_rng(seed).standard_normal((n, ncol))
    res, _ = run_pca(C_raw, robust=False, cap=cap)
    assert np.all(np.diff(res.eigenvalues) <= 0)
    np.testing.assert_allclose(res.eigenvectors.T @ res.eigenvectors, np.eye(res.r), atol=1e-8)
    share = np.cumsum(res.eigenvalues) / res.eigenvalues.sum()
    assert res.q == 1 or share[res.q - 1] <= cap + 1e-12
    assert res.q == res.r or share[res.q] > cap - 1e-12


def test_column_location_matches_location_scale_fit():
    col = np.random.default_rng(15).standard_t(2, 50)
    _, stats = standardize(col[:, None], "robust", P)
    f = map_location_scale(col, P)
    assert stats.loc[0] == f.loc and stats.scale[0] == f.sigma
