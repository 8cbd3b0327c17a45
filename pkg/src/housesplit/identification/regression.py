"""Per-user ridge regression on a fixed movie-to-user assignment."""
from __future__ import annotations

import numpy as np

from ..data_model import AccountView, IdentificationResult, UserProfile, mse_of
from ..errors import EmptyClassError, SingularFitError
from ..kernels import grouped_normal_equations


def solve_profiles(X, y, assignment, n, ridge_lambda=0.0):
    """Ridge solutions ``theta_i`` (rows) of every class; the bias is unpenalized."""
    assignment = np.asarray(assignment, dtype=np.int64)
    gram, rhs, counts = grouped_normal_equations(X, y, assignment, n)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise EmptyClassError(empty.tolist())
    k = X.shape[1]
    pen = np.ones(k)
    pen[-1] = 0.0
    A = gram + ridge_lambda * np.diag(pen)[None]
    theta = np.empty((n, k))
    for i in range(n):
        if ridge_lambda == 0.0 and np.linalg.matrix_rank(A[i]) < k:
            raise SingularFitError(
                f"class {i} has {counts[i]} movies: normal equations are singular, use ridge_lambda > 0"
            )
        try:
            theta[i] = np.linalg.solve(A[i], rhs[i])
        except np.linalg.LinAlgError:
            raise SingularFitError(f"class {i}: singular normal equations") from None
    return theta


def fit_profiles(view: AccountView, assignment, n: int = None, ridge_lambda: float = 0.0) -> list:
    """Profiles minimizing ``sum (r_j - <u,v_j> - z)^2 + lambda ||u||^2`` per user.

    Raises ``EmptyClassError`` when a label in ``[0, n)`` has no movies and
    ``SingularFitError`` when ``ridge_lambda == 0`` leaves a class underdetermined.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if n is None:
        n = int(assignment.max()) + 1
    theta = solve_profiles(view.design, view.ratings, assignment, n, ridge_lambda)
    return [UserProfile.from_theta(t) for t in theta]


def fit_single(view: AccountView, ridge_lambda: float = 0.0) -> IdentificationResult:
    """One profile for the whole account (household size 1)."""
    labels = np.zeros(view.m, dtype=np.int64)
    profiles = fit_profiles(view, labels, 1, ridge_lambda)
    return IdentificationResult(1, labels, profiles, mse_of(view, labels, profiles), "regression")


def fit_oracle(view: AccountView, ridge_lambda: float = 0.0) -> IdentificationResult:
    """Profiles fit on the ground-truth assignment."""
    if view.ground_truth is None:
        raise ValueError("oracle fit needs ground truth")
    labels = view.ground_truth
    n = view.n_true
    profiles = fit_profiles(view, labels, n, ridge_lambda)
    return IdentificationResult(n, labels, profiles, mse_of(view, labels, profiles), "oracle")
