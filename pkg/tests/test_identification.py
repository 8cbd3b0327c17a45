import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from housesplit.data_model import AccountView, UserProfile
from housesplit.errors import (
    DegenerateAccountError,
    EmptyClassError,
    InsufficientDataError,
    SingularFitError,
)
from housesplit.identification import (
    EmConfig,
    GpcaConfig,
    SpectralConfig,
    best_permutation,
    confident_tails,
    delta_scores,
    em_run,
    fit_oracle,
    fit_profiles,
    fit_single,
    identify,
    identify_em,
    identify_gpca,
    identify_kmeans,
    identify_spectral,
    similarity,
    veronese_dim,
)
from housesplit.identification.gpca import relative_residuals

from conftest import make_account, random_view


# regression

def test_noiseless_single_user_recovered():
    acc = make_account(n=1, sigma=0.0, m=50, seed=3)
    p = fit_profiles(acc.view, np.zeros(50, int), 1, 0.0)[0]
    np.testing.assert_allclose(p.theta, acc.profiles[0].theta, rtol=1e-8, atol=1e-10)


def test_ridge_limit():
    acc = make_account(n=1, sigma=0.5, m=60, seed=1)
    p = fit_profiles(acc.view, np.zeros(60, int), 1, 1e12)[0]
    assert np.max(np.abs(p.u)) < 1e-6
    assert p.z == pytest.approx(acc.view.ratings.mean(), abs=1e-5)


def test_underdetermined_and_empty_classes(rng):
    view = random_view(rng, m=4, d=3)
    with pytest.raises(SingularFitError, match="ridge_lambda"):
        fit_profiles(view, [0, 0, 1, 1], 2, 0.0)
    fit_profiles(view, [0, 0, 1, 1], 2, 1.0)
    with pytest.raises(EmptyClassError):
        fit_profiles(view, [0, 0, 0, 0], 2, 1.0)


def _penalized_lstsq(X, y, lam):
    k = X.shape[1]
    P = np.sqrt(lam) * np.eye(k)[:-1]
    A = np.vstack([X, P])
    b = np.r_[y, np.zeros(k - 1)]
    return np.linalg.lstsq(A, b, rcond=None)[0]


@given(st.integers(0, 2 ** 31), st.sampled_from([0.0, 0.5, 3.0]))
def test_fit_profiles_matches_augmented_least_squares(seed, lam):
    rng = np.random.default_rng(seed)
    view = random_view(rng, m=40, d=3, n_truth=2)
    got = fit_profiles(view, view.ground_truth, 2, lam)
    for i in range(2):
        sel = view.ground_truth == i
        want = _penalized_lstsq(view.design[sel], view.ratings[sel], lam)
        np.testing.assert_allclose(got[i].theta, want, rtol=1e-8, atol=1e-10)


def test_oracle_and_single(rng):
    view = random_view(rng, m=40, d=2, n_truth=2)
    o = fit_oracle(view)
    assert o.algorithm == "oracle" and o.n == 2 and o.check(view)
    s = fit_single(view)
    assert s.algorithm == "regression" and s.mse >= o.mse


# EM

def test_em_single_class_is_regression(rng):
    view = random_view(rng, m=40, d=3)
    res = identify_em(view, 1, EmConfig(seed=0, ridge_lambda=0.3))
    np.testing.assert_allclose(res.theta, fit_single(view, 0.3).theta, rtol=1e-10)


def test_em_deterministic_and_recovers():
    acc = make_account(sigma=0.0, m=500, seed=11)
    a = identify_em(acc.view, 2, EmConfig(seed=4))
    b = identify_em(acc.view, 2, EmConfig(seed=4))
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert similarity(a.assignment, acc.view.ground_truth) >= 0.99
    assert a.check(acc.view)
    assert len(a.info["restart_mse"]) == 5


@given(st.integers(0, 2 ** 31), st.integers(2, 3), st.floats(0.0, 2.0))
def test_em_trace_monotone(seed, n, lam):
    rng = np.random.default_rng(seed)
    m, d = 60, 3
    X = np.column_stack([rng.standard_normal((m, d)), np.ones(m)])
    r = rng.standard_normal(m)
    labels = np.r_[np.arange(n), rng.integers(n, size=m - n)]
    try:
        run = em_run(X, r, labels, n, lam)
    except (EmptyClassError, SingularFitError):
        return
    obj = np.array(run.objective_trace)
    assert np.all(np.diff(obj) <= 1e-10 * np.maximum(1.0, np.abs(obj[:-1])))
    if lam == 0.0:
        mse = np.array(run.mse_trace)
        assert np.all(np.diff(mse) <= 1e-10)


def test_em_degenerate_account():
    view = AccountView(np.arange(4), np.ones(4), np.ones((4, 3)))
    with pytest.raises(DegenerateAccountError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        identify_em(view, 2, EmConfig(seed=0, restarts=2, max_reseeds=2))


def test_em_warns_when_underdetermined(rng):
    view = random_view(rng, m=6, d=3)
    with pytest.warns(UserWarning):
        try:
            identify_em(view, 2, EmConfig(seed=0, ridge_lambda=1.0))
        except DegenerateAccountError:
            pass


def test_em_config_validation():
    with pytest.raises(ValueError):
        EmConfig(restarts=0)


# clustering

def _blobs(rng, noise=0.05):
    m = 100
    V = np.r_[rng.normal(-3, noise, (m // 2, 2)), rng.normal(3, noise, (m // 2, 2))]
    r = np.r_[np.full(m // 2, 1.0), np.full(m // 2, 5.0)] + rng.normal(0, noise, m)
    truth = np.repeat([0, 1], m // 2)
    return AccountView(np.arange(m), r, V, truth)


def test_kmeans_and_spectral_separate_blobs(rng):
    view = _blobs(rng)
    for res in (identify_kmeans(view, 2, seed=0), identify_spectral(view, 2, SpectralConfig(seed=0))):
        assert similarity(res.assignment, view.ground_truth) == 1.0
        assert res.check(view)


def test_kmeans_standardization_invariance(rng):
    view = _blobs(rng, noise=1.0)
    scaled = AccountView(view.movie_indices, view.ratings, view.features * 10, view.ground_truth)
    a = identify_kmeans(view, 2, seed=0).assignment
    b = identify_kmeans(scaled, 2, seed=0).assignment
    assert similarity(a, b) == 1.0


def test_kmeans_single_cluster_and_degenerate(rng):
    view = random_view(rng, m=30, d=2)
    np.testing.assert_allclose(identify_kmeans(view, 1, seed=0).theta, fit_single(view).theta)
    flat = AccountView(np.arange(5), np.ones(5), np.ones((5, 2)))
    with pytest.raises(DegenerateAccountError):
        identify_kmeans(flat, 2, seed=0)
    with pytest.raises(DegenerateAccountError):
        identify_spectral(flat, 2)


# GPCA

def test_veronese_dimension():
    assert veronese_dim(2, 10) == 78 == math.comb(13, 2)


def test_gpca_noiseless_recovery():
    acc = make_account(sigma=0.0, m=200, seed=21)
    res = identify_gpca(acc.view, 2)
    assert similarity(res.assignment, acc.view.ground_truth) == 1.0
    assert res.info["max_relative_residual"] <= 1e-8
    perm = best_permutation(res.assignment, acc.view.ground_truth)
    for i, nv in enumerate(res.info["normals"]):
        t = acc.profiles[perm[i]].normal
        cos = abs(nv @ t) / (np.linalg.norm(nv) * np.linalg.norm(t))
        assert math.acos(min(cos, 1.0)) < 1e-6
    np.testing.assert_allclose(res.theta[np.argsort(perm)], [p.theta for p in acc.profiles],
                               atol=1e-8)


def test_gpca_single_hyperplane():
    acc = make_account(n=1, sigma=0.0, m=40, seed=2)
    res = identify_gpca(acc.view, 1)
    c = res.info["coefficients"]
    t = acc.profiles[0].normal
    assert abs(abs(c @ t) / (np.linalg.norm(c) * np.linalg.norm(t)) - 1.0) < 1e-10
    Y = acc.view.lifted / np.linalg.norm(acc.view.lifted, axis=1, keepdims=True)
    from housesplit.identification.gpca import monomial_exponents
    assert relative_residuals(Y, c, monomial_exponents(1, 7)).max() < 1e-10


def test_gpca_insufficient_data(rng):
    view = random_view(rng, m=10, d=3)
    with pytest.raises(InsufficientDataError, match="K = 15"):
        identify_gpca(view, 2)


@pytest.mark.parametrize("algo", ["em", "gpca", "kmeans", "spectral"])
def test_stored_mse_matches_recomputation(algo):
    acc = make_account(sigma=0.2, m=150, seed=5)
    res = identify(acc.view, 2, algo, seed=1)
    assert res.check(acc.view) and res.algorithm == algo


def test_identify_rejects_unknown_algorithm(rng):
    with pytest.raises(ValueError):
        identify(random_view(rng), 2, "soft-em")


# metrics

def test_similarity_examples():
    t = np.array([0, 0, 1, 1])
    assert similarity(t, t) == 1.0
    assert similarity(1 - t, t) == 1.0
    assert similarity([0, 0, 1, 0], t) == 0.75


def _brute(a, t):
    n = max(max(a), max(t)) + 1
    return max(np.mean(np.array([p[x] for x in a]) == t) for p in itertools.permutations(range(n)))


@given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_similarity_equals_brute_force(m, n, seed):
    rng = np.random.default_rng(seed)
    a, t = rng.integers(n, size=m), rng.integers(n, size=m)
    assert similarity(a, t) == pytest.approx(_brute(list(a), t), abs=1e-15)
    perm = rng.permutation(n)
    assert similarity(perm[a], t) == pytest.approx(similarity(a, t))
    assert similarity(a, t) >= 1.0 / (max(a.max(), t.max()) + 1) - 1e-15


def test_delta_examples():
    V = np.zeros((2, 1))
    view = AccountView([0, 1], [0.0, 0.5], V)
    ps = [UserProfile([0.0], 0.0), UserProfile([0.0], 1.0)]
    np.testing.assert_allclose(delta_scores(view, ps), [-1.0, 0.0])
    with pytest.raises(ValueError):
        delta_scores(view, ps[:1])


def test_noiseless_delta_sign_matches_truth():
    acc = make_account(sigma=0.0, m=300, seed=8)
    dl = delta_scores(acc.view, acc.profiles)
    np.testing.assert_array_equal(np.where(dl < 0, 0, 1), acc.view.ground_truth)


def test_confident_tails_cases():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-3, 0.1, 200), rng.normal(3, 0.1, 200), rng.normal(0, 0.3, 600)]
    t = confident_tails(x)
    assert len(t.user1) > 0 and len(t.user2) > 0
    assert set(t.user1).isdisjoint(t.user2)
    assert len(t.user1) + len(t.user2) + len(t.uncertain) == len(x)
    flat = confident_tails(np.ones(50))
    assert len(flat.uncertain) == 50
    few = confident_tails(np.arange(5.0))
    assert len(few.uncertain) == 5


def test_confident_tails_null_fraction():
    fr = []
    for s in range(20):
        x = np.random.default_rng(s).standard_normal(1000)
        t = confident_tails(x)
        fr.append((len(t.user1) + len(t.user2)) / 1000)
    assert abs(np.mean(fr) - 0.134) < 0.05
