import math

import numpy as np
import pytest

from housesplit.data_model import (
    AccountView,
    IdentificationResult,
    MovieFeatures,
    RatingsDataset,
    UserProfile,
    lift,
    log_likelihood,
    mse,
    residual,
)
from housesplit.errors import DatasetMismatchError, EmptyAccountError, InputError


def test_residual_sign_and_normal():
    p = UserProfile([1.0, 2.0], 0.5)
    v = np.array([1.0, -1.0])
    assert residual(p, v, 3.0) == pytest.approx(3.0 - (1 - 2) - 0.5)
    x = np.r_[v, 1.0, 3.0]
    # n . x = <u,v> + z - r = -residual
    assert p.normal @ x == pytest.approx(-residual(p, v, 3.0))


def test_residual_dimension_mismatch():
    with pytest.raises(DatasetMismatchError):
        residual(UserProfile([1.0], 0.0), [1.0, 2.0], 1.0)


def test_lift_layout_and_errors():
    feats = MovieFeatures(np.arange(6.0).reshape(3, 2), 0.1)
    view = lift(feats, [2, 0], [4.0, 5.0])
    np.testing.assert_array_equal(view.lifted, [[4, 5, 1, 4], [0, 1, 1, 5]])
    with pytest.raises(DatasetMismatchError):
        lift(feats, [3], [1.0])
    with pytest.raises(EmptyAccountError):
        lift(feats, [], [])
    with pytest.raises(DatasetMismatchError):
        lift(feats, [0], [np.nan])


def test_views_are_read_only():
    view = AccountView([0, 1], [1.0, 2.0], np.eye(2))
    with pytest.raises(ValueError):
        view.ratings[0] = 3.0


def test_ground_truth_must_be_surjective():
    with pytest.raises(DatasetMismatchError):
        AccountView([0, 1], [1.0, 2.0], np.eye(2), [0, 2])


def test_subset_densifies_truth():
    view = AccountView(np.arange(3), [1.0, 2.0, 3.0], np.eye(3), [0, 1, 2])
    assert view.subset([1, 2]).ground_truth.tolist() == [0, 1]


def test_result_validation_and_check(rng):
    V = rng.standard_normal((10, 2))
    p = UserProfile([1.0, 0.0], 0.0)
    view = AccountView(np.arange(10), V @ p.u, V)
    res = IdentificationResult(1, np.zeros(10), [p], 0.0, "em")
    assert res.check(view)
    assert mse(view, res) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        IdentificationResult(2, np.zeros(10), [p, p], 0.0, "em")
    with pytest.raises(ValueError):
        IdentificationResult(1, np.zeros(10), [p], 0.0, "bogus")
    IdentificationResult(2, np.zeros(10), [p, p], 0.0, "em", empty=(1,))


def test_log_likelihood_is_scaled_sse():
    V = np.eye(2)
    view = AccountView([0, 1], [1.0, 3.0], V)
    p = UserProfile([0.0, 0.0], 1.0)
    assert log_likelihood(view, [0, 0], [p], 0.5) == pytest.approx(-4.0 / 1.0)


def test_dataset_validation():
    with pytest.raises(InputError):
        RatingsDataset(("a",), ("m",), [0, 0], [0, 0], [1.0, 2.0])
    with pytest.raises(InputError):
        RatingsDataset(("a",), ("m",), [0], [0], [9.0], scale=(1, 5))
    ds = RatingsDataset(("a", "b"), ("x", "y"), [1, 0, 1], [1, 0, 0], [1.0, 2.0, 3.0])
    mi, r = ds.account_ratings(1)
    assert mi.tolist() == [0, 1] and r.tolist() == [3.0, 1.0]
    assert ds.movie_counts().tolist() == [2, 1]
    assert ds.account_index("b") == 1
    assert math.isclose(len(ds), 3)
