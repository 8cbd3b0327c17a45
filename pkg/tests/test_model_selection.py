import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.metrics import roc_auc_score

from housesplit import model_selection as ms
from housesplit.errors import FitError, InsufficientDataError

from conftest import make_account


def test_bic_plug_in_values():
    assert ms.bic_value(0.0, 1, 1, math.e, 1.0) == pytest.approx(4 / math.e)
    a = ms.bic_value(0.3, 2, 4, 100, 0.1)
    b = ms.bic_value(0.3, 2, 4, 100, 0.2)
    pen = ms.bic_penalty(2, 4, 100)
    assert b - pen == pytest.approx((a - pen) / 2)
    with pytest.raises(ValueError):
        ms.bic_value(0.1, 1, 1, 10, 0.0)


def test_bic_of_result():
    acc = make_account(sigma=0.1, m=100, seed=0)
    fits = ms.fit_sizes(acc.view, (1, 2), seed=0)
    assert ms.bic(acc.view, fits[2], 0.01) == pytest.approx(
        fits[2].mse / 0.02 + 2 * 2 * 6 * math.log(100) / 100)


def test_classify_threshold_cases():
    assert ms.classify_threshold(1.0, 0.5, 10, 0.0)
    assert not ms.classify_threshold(0.5, 0.5, 10, 0.0)
    assert not ms.classify_threshold(0.5, 0.5, 10, 1.0)
    with pytest.raises(ValueError):
        ms.classify_threshold(1, 0, 1, 0)


@given(st.floats(0, 10), st.floats(0, 10), st.integers(2, 10_000), st.floats(0, 5), st.floats(0, 5))
def test_classify_threshold_monotone_in_tau(m1, m2, m, t1, t2):
    lo, hi = sorted((t1, t2))
    if not ms.classify_threshold(m1, m2, m, lo):
        assert not ms.classify_threshold(m1, m2, m, hi)


def test_bic_tau_constants():
    assert ms.bic_tau(0.5, 3) == pytest.approx(8.0)
    assert ms.bic_tau(0.5, 3, "d_plus_2") == pytest.approx(5.0)
    with pytest.raises(ValueError):
        ms.bic_tau(0.5, 3, "other")


@given(st.floats(1e-4, 5), st.floats(0, 1), st.integers(3, 5000), st.integers(1, 30), st.floats(0.01, 2))
def test_consistent_tau_matches_bic_comparison(mse2, frac, m, d, sigma2):
    mse1 = mse2 + frac
    bic = ms.bic_value(mse1, 1, d, m, sigma2) > ms.bic_value(mse2, 2, d, m, sigma2)
    thr = ms.classify_threshold(mse1, mse2, m, ms.bic_tau(sigma2, d))
    lhs = (mse1 - mse2) / (2 * sigma2)
    rhs = 2 * (d + 1) * math.log(m) / m
    if abs(lhs - rhs) > 1e-9 * max(1.0, rhs):
        assert bic == thr


def test_select_size_noiseless():
    for n in (1, 2, 3):
        acc = make_account(n=n, sigma=0.0, m=400, seed=n)
        rep = ms.select_size(acc.view, 0.01, seed=0)
        assert rep.label == n
        assert len(rep.normalized_gaps) == 2


def test_single_user_split_gain_is_the_folded_gaussian():
    # a hard two-profile fit of one noisy hyperplane removes about 1 - 2/pi
    # of the residual variance, whatever the noise level
    gains = []
    for s in range(10):
        acc = make_account(n=1, sigma=0.3, m=2000, seed=s)
        fits = ms.fit_sizes(acc.view, (1, 2), seed=s)
        gains.append(fits[2].mse / fits[1].mse)
    assert np.mean(gains) == pytest.approx(1 - 2 / math.pi, abs=0.05)


def test_fit_sizes_falls_back_when_degenerate():
    from housesplit.data_model import AccountView
    view = AccountView(np.arange(8), np.ones(8), np.ones((8, 2)))
    fits = ms.fit_sizes(view, (1, 2), restarts=1, max_reseeds=1, ridge_lambda=1.0)
    assert fits[2].mse == fits[1].mse and "fallback" in fits[2].info


def test_roc_against_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.integers(2, size=60).astype(bool)
        y[:2] = [True, False]
        s = np.round(rng.standard_normal(60) + y, 1)
        assert ms.roc_curve(s, y).auc == pytest.approx(roc_auc_score(y, s), abs=1e-12)


def test_roc_endpoints_and_errors():
    c = ms.roc_curve([0.1, 0.2, 0.9, 0.8], [False, False, True, True])
    assert c.auc == 1.0
    assert c.points[0] == (0.0, 1.0) and c.points[-1] == (1.0, 0.0)
    with pytest.raises(ValueError):
        ms.roc_curve([1, 2], [True, True])


@given(st.integers(0, 2 ** 31))
def test_roc_auc_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[True, False, rng.integers(2, size=40).astype(bool)]
    s = rng.standard_normal(42)
    assert ms.roc_curve(s, y).auc == pytest.approx(ms.roc_curve(np.exp(3 * s) + 1, y).auc)


def test_gamma_null_and_planted_tail():
    rng = np.random.default_rng(1)
    g = rng.gamma(2.0, 3.0, 10_000)
    assert ms.gamma_outlier_labels(g).labels.mean() <= 0.02
    bulk = rng.gamma(2.0, 3.0, 2000)
    heavy = rng.gamma(2.0, 3.0, 200) + 10 * bulk.mean()
    res = ms.gamma_outlier_labels(np.r_[bulk, heavy])
    # separates the clusters up to the bulk's own extreme points
    assert np.quantile(bulk, 0.995) < res.threshold <= heavy.min()
    assert res.labels[:2000].mean() <= 0.005 and res.labels[2000:].all()


@given(st.floats(0.01, 1000), st.integers(0, 2 ** 31))
def test_gamma_threshold_scale_equivariant(c, seed):
    rng = np.random.default_rng(seed)
    g = np.r_[rng.gamma(3.0, 1.0, 500), rng.gamma(3.0, 1.0, 50) + 25]
    a = ms.gamma_outlier_labels(g)
    b = ms.gamma_outlier_labels(c * g)
    assert b.threshold == pytest.approx(c * a.threshold, rel=1e-6)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_gamma_errors():
    with pytest.raises(InsufficientDataError):
        ms.gamma_outlier_labels(np.ones(10))
    with pytest.raises(FitError):
        ms.gamma_outlier_labels(-np.abs(np.random.default_rng(0).standard_normal(100)) - 1)


def test_truncated_fit_recovers_parameters():
    g = np.random.default_rng(3).gamma(4.0, 2.0, 50_000)
    fit = ms.fit_gamma_trimmed(g)
    assert fit.shape == pytest.approx(4.0, rel=0.1)
    assert fit.scale == pytest.approx(2.0, rel=0.1)


def test_two_pass_buckets():
    rng = np.random.default_rng(4)
    g12 = np.r_[rng.gamma(2, 1, 900), rng.gamma(2, 1, 200) + 40]
    g23 = np.r_[rng.gamma(2, 1, 900), rng.gamma(2, 1, 140), rng.gamma(2, 1, 60) + 40]
    sizes, first, second = ms.two_pass_outlier_sizes(g12, g23)
    assert set(np.unique(sizes)) == {1, 2, 3}
    assert second is not None
    assert np.all(sizes[:900] == 1)
