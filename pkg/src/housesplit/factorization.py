"""Movie features by alternating ridge regression.

The model is ``r_aj ~ <u_a, v_j> + z_a`` with a bias on the account side
only. Each half-step solves every row's ridge problem exactly, so the
penalized objective never increases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .data_model import MovieFeatures, RatingsDataset
from .errors import DatasetMismatchError, DivergenceError
from .kernels import grouped_normal_equations

logger = logging.getLogger(__name__)

COLD_THRESHOLD = 3
DEFAULT_D = {"camra": 10, "netflix": 30}


@dataclass
class FactorizationTrace:
    objective: list
    half_steps: list
    iters: int
    converged: bool


def _solve_rows(gram, rhs, penalty, lam):
    """Batched ridge solves; rows with lam == 0 fall back to least squares."""
    A = gram + lam * np.diag(penalty)[None]
    out = np.empty_like(rhs)
    for g in range(len(A)):
        try:
            c = np.linalg.cholesky(A[g])
        except np.linalg.LinAlgError:
            out[g] = np.linalg.lstsq(A[g], rhs[g], rcond=None)[0]
            continue
        out[g] = np.linalg.solve(c.T, np.linalg.solve(c, rhs[g]))
    return out


def objective(ds: RatingsDataset, U, z, V, lam) -> float:
    pred = np.einsum("ij,ij->i", U[ds.account_idx], V[ds.movie_idx]) + z[ds.account_idx]
    res = ds.ratings - pred
    return float(res @ res + lam * (np.sum(U * U) + np.sum(V * V)))


def _init_movies(ds: RatingsDataset, d: int, rng, dense_limit: int):
    if ds.N * ds.M <= dense_limit and d < min(ds.N, ds.M):
        means = np.bincount(ds.account_idx, ds.ratings, ds.N) / np.maximum(
            np.bincount(ds.account_idx, minlength=ds.N), 1
        )
        R = csr_matrix((ds.ratings - means[ds.account_idx], (ds.account_idx, ds.movie_idx)),
                       shape=(ds.N, ds.M)).toarray()
        _, s, vt = np.linalg.svd(R, full_matrices=False)
        V = vt[:d].T * np.sqrt(s[:d] / max(ds.N, 1) + 1e-12)
        if np.all(np.isfinite(V)) and np.any(V):
            return V
    return rng.standard_normal((ds.M, d)) / np.sqrt(d)


def factorize(ds: RatingsDataset, d: int = 10, lam: float = 1.0, max_iters: int = 100,
              tol: float = 1e-6, seed=None, dense_limit: int = 4_000_000,
              sigma2_source: str = "train", return_trace: bool = False, center: bool = False):
    """Learn ``MovieFeatures`` of dimension ``d`` from ``ds``.

    The initial movie factors are the top-``d`` right singular vectors of the
    zero-filled, per-account-centered rating matrix when it has at most
    ``dense_limit`` cells, random normal otherwise. Alternation stops when the
    relative objective decrease of a full iteration falls below ``tol``.

    ``sigma2`` is the training mean square error, or with
    ``sigma2_source="holdout"`` the error on a random 10% of ratings held
    out from an identical refit.

    ``center=True`` subtracts the global mean rating first. The account
    biases are unpenalized, so they absorb the mean either way and the
    features agree up to round-off; the mean is kept in ``meta``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    global_mean = 0.0
    if center:
        global_mean = float(ds.ratings.mean())
        ds = RatingsDataset(ds.accounts, ds.movies, ds.account_idx, ds.movie_idx,
                            ds.ratings - global_mean, None)
    counts = ds.movie_counts()
    if np.any(counts == 0):
        raise DatasetMismatchError(
            f"{int(np.sum(counts == 0))} movies have no ratings, e.g. {ds.movies[np.argmax(counts == 0)]!r}"
        )
    rng = np.random.default_rng(seed)
    V = _init_movies(ds, d, rng, dense_limit)
    acc_pen = np.r_[np.ones(d), 0.0]
    mov_pen = np.ones(d)
    U = np.zeros((ds.N, d))
    z = np.zeros(ds.N)
    obj_hist, half = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # accounts: regress on [v_j, 1]
        X = np.column_stack([V[ds.movie_idx], np.ones(len(ds))])
        gram, rhs, _ = grouped_normal_equations(X, ds.ratings, ds.account_idx, ds.N)
        theta = _solve_rows(gram, rhs, acc_pen, lam)
        U, z = theta[:, :d], theta[:, d]
        half.append(objective(ds, U, z, V, lam))
        # movies: regress r - z_a on u_a
        gram, rhs, _ = grouped_normal_equations(
            U[ds.account_idx], ds.ratings - z[ds.account_idx], ds.movie_idx, ds.M
        )
        V = _solve_rows(gram, rhs, mov_pen, lam)
        obj = objective(ds, U, z, V, lam)
        half.append(obj)
        if not np.isfinite(obj):
            raise DivergenceError(f"objective became non-finite at iteration {it}")
        obj_hist.append(obj)
        if len(obj_hist) > 1:
            prev = obj_hist[-2]
            if prev - obj <= tol * max(prev, 1e-300):
                converged = True
                break
    # account half-step on the final movie factors
    X = np.column_stack([V[ds.movie_idx], np.ones(len(ds))])
    gram, rhs, _ = grouped_normal_equations(X, ds.ratings, ds.account_idx, ds.N)
    theta = _solve_rows(gram, rhs, acc_pen, lam)
    U, z = theta[:, :d], theta[:, d]
    half.append(objective(ds, U, z, V, lam))

    res = ds.ratings - (np.einsum("ij,ij->i", U[ds.account_idx], V[ds.movie_idx]) + z[ds.account_idx])
    sigma2 = float(res @ res / len(res))
    if sigma2_source == "holdout":
        sigma2 = holdout_mse(ds, d, lam, max_iters, tol, seed)
    elif sigma2_source != "train":
        raise ValueError("sigma2_source must be 'train' or 'holdout'")
    logger.debug("factorize: %d iterations, objective %.6g, sigma2 %.6g", it, obj_hist[-1], sigma2)
    feats = MovieFeatures(
        V, sigma2, ds.movies, counts < COLD_THRESHOLD,
        {"d": d, "lambda": lam, "sigma2": sigma2, "iters": it, "converged": converged,
         "sigma2_source": sigma2_source, "center": center, "global_mean": global_mean},
    )
    if return_trace:
        return feats, FactorizationTrace(obj_hist, half, it, converged), (U, z)
    return feats


def _subset(ds: RatingsDataset, rows) -> RatingsDataset:
    return RatingsDataset(ds.accounts, ds.movies, ds.account_idx[rows], ds.movie_idx[rows],
                          ds.ratings[rows], ds.scale)


def _rating_folds(ds: RatingsDataset, folds: int, rng):
    # every movie keeps at least one training rating
    fold = rng.integers(folds, size=len(ds))
    perm = rng.permutation(len(ds))
    first = np.full(ds.M, -1)
    for row in perm:
        if first[ds.movie_idx[row]] < 0:
            first[ds.movie_idx[row]] = row
    return fold, first


def _predict(model_U, model_z, V, ds, rows):
    a, m = ds.account_idx[rows], ds.movie_idx[rows]
    return np.einsum("ij,ij->i", model_U[a], V[m]) + model_z[a]


def holdout_mse(ds, d, lam, max_iters=100, tol=1e-6, seed=None, frac=0.1) -> float:
    rng = np.random.default_rng(seed)
    fold, keep = _rating_folds(ds, int(round(1 / frac)), rng)
    test = fold == 0
    test[keep] = False
    feats, _, (U, z) = factorize(_subset(ds, ~test), d, lam, max_iters, tol, seed,
                                 return_trace=True)
    rows = np.flatnonzero(test)
    res = ds.ratings[rows] - _predict(U, z, feats.vectors, ds, rows)
    return float(res @ res / max(len(rows), 1))


def select_lambda(ds: RatingsDataset, d: int, grid=(0.1, 1.0, 10.0), folds: int = 5,
                  max_iters: int = 50, tol: float = 1e-5, seed=None):
    """Pick the ridge penalty with the smallest k-fold held-out MSE.

    Returns ``(best_lambda, {lambda: mean_heldout_mse})``.
    """
    rng = np.random.default_rng(seed)
    fold, keep = _rating_folds(ds, folds, rng)
    scores = {}
    for lam in grid:
        errs = []
        for f in range(folds):
            test = fold == f
            test[keep] = False
            feats, _, (U, z) = factorize(_subset(ds, ~test), d, lam, max_iters, tol, seed,
                                         return_trace=True)
            rows = np.flatnonzero(test)
            res = ds.ratings[rows] - _predict(U, z, feats.vectors, ds, rows)
            errs.append(res @ res / max(len(rows), 1))
        scores[lam] = float(np.mean(errs))
    best = min(scores, key=lambda k: (scores[k], k))
    return best, scores
