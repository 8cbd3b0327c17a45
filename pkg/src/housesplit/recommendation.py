"""Recommendation value of identification: Single, Oracle, EM and CNV profiles.

Each method is trained on four folds of a household's movies and scored on
the fifth. A test movie is always predicted with the profile standing in for
the user who truly rated it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import NamedTuple, Sequence

import numpy as np

from .data_model import AccountView, UserProfile
from .errors import InputError, InsufficientDataError
from .identification import EmConfig, best_permutation, fit_profiles, identify_em, solve_profiles

logger = logging.getLogger(__name__)

METHODS = ("single", "oracle", "em", "cnv")
ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
LAMBDA_GRID = (0.1, 1.0, 10.0)
DEFAULT_EM = EmConfig(ridge_lambda=1.0)


def crossval_split(view: AccountView, folds: int = 5, seed=None) -> list:
    """Disjoint test folds (arrays of positions) covering every movie.

    With ground truth each user's movies are shuffled and dealt round-robin
    as one continuing sequence from a random starting fold, so every fold
    holds each user's movies within one of proportional and fold sizes
    differ by at most one.
    """
    if view.m < folds:
        raise InputError(f"cannot make {folds} folds from {view.m} movies")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    groups = [np.arange(view.m)] if view.ground_truth is None else [
        np.flatnonzero(view.ground_truth == i) for i in range(view.n_true)
    ]
    order = np.concatenate([rng.permutation(g) for g in groups])
    fold_of = np.empty(view.m, dtype=np.int64)
    fold_of[order] = (int(rng.integers(folds)) + np.arange(view.m)) % folds
    return [np.sort(np.flatnonzero(fold_of == f)) for f in range(folds)]


def top_k(scores, keys, k: int) -> list:
    """Positions of the ``k`` largest scores; ties go to the smaller key."""
    order = np.lexsort((np.asarray(keys), -np.asarray(scores, dtype=float)))
    return order[:k].tolist()


def overlap(view: AccountView, positions, profiles, truth, k_per_user: int = 3) -> int:
    """Recommended list versus the union of each user's top rated test movies.

    ``profiles`` of length one is Single: its list is the top ``k_per_user *
    n`` of all test movies. Otherwise profile ``i`` picks its top
    ``k_per_user`` among the test movies of true user ``i``, the same user
    attribution the RMSE uses, and the list joins these picks. Lists and
    relevant movies are sets.
    """
    positions = np.asarray(positions)
    V = view.features[positions]
    keys = view.movie_indices[positions]
    r = view.ratings[positions]
    t = np.asarray(truth)
    n = int(t.max()) + 1 if len(t) else 1
    own = [np.flatnonzero(t == i) for i in range(n)]
    relevant = set()
    for rows in own:
        relevant.update(keys[rows[top_k(r[rows], keys[rows], k_per_user)]].tolist())
    if len(profiles) == 1:
        chosen = set(keys[top_k(profiles[0].predict(V), keys, k_per_user * n)].tolist())
    else:
        chosen = set()
        for p, rows in zip(profiles, own):
            chosen.update(keys[rows[top_k(p.predict(V[rows]), keys[rows], k_per_user)]].tolist())
    return len(chosen & relevant)


def rmse_true_user(view: AccountView, positions, profiles, truth) -> float:
    """RMSE when each movie is predicted by the profile of its true user (one profile = shared)."""
    positions = np.asarray(positions)
    theta = np.array([p.theta for p in profiles])
    who = np.zeros(len(positions), dtype=np.int64) if len(profiles) == 1 else truth
    pred = np.einsum("ij,ij->i", view.design[positions], theta[who])
    res = view.ratings[positions] - pred
    return float(math.sqrt(res @ res / len(res)))


def blend(single: UserProfile, profiles, alpha: float) -> list:
    """``alpha * theta_S + (1 - alpha) * theta_i`` per user; exact at both endpoints."""
    if alpha == 0.0:
        return list(profiles)
    if alpha == 1.0:
        return [single] * len(profiles)
    return [UserProfile.from_theta(alpha * single.theta + (1.0 - alpha) * p.theta) for p in profiles]


def _single(view, rows, lam):
    theta = solve_profiles(view.design[rows], view.ratings[rows],
                           np.zeros(len(rows), dtype=np.int64), 1, lam)
    return UserProfile.from_theta(theta[0])


def _aligned_em(view, rows, n, cfg):
    """EM on ``rows`` with profiles reordered to the truth labels of those rows."""
    sub = view.subset(rows)
    res = identify_em(sub, n, cfg)
    perm = best_permutation(res.assignment, view.ground_truth[rows], n)
    out = [None] * n
    for i, j in enumerate(perm):
        out[j] = res.profiles[i]
    return out


def _inner_folds(view, rows, folds, rng):
    sub = view.subset(rows)
    return [rows[f] for f in crossval_split(sub, folds, rng)]


def choose_lambda(view: AccountView, rows, grid: Sequence[float] = LAMBDA_GRID, folds: int = 4,
                  seed=None) -> float:
    """Ridge penalty of the single profile with the smallest inner-CV RMSE."""
    rng = np.random.default_rng(seed)
    inner = _inner_folds(view, rows, folds, rng)
    scores = []
    for lam in grid:
        errs = []
        for test in inner:
            train = np.setdiff1d(rows, test)
            p = _single(view, train, lam)
            errs.append(rmse_true_user(view, test, [p], view.ground_truth[test]))
        scores.append(np.mean(errs))
    return float(grid[int(np.argmin(scores))])


def choose_alpha(view: AccountView, rows, n: int, lam_single: float, em_cfg: EmConfig,
                 grid: Sequence[float] = ALPHA_GRID, folds: int = 4, seed=None) -> float:
    """Blend weight with the smallest inner-CV RMSE; ties go to the smaller alpha."""
    rng = np.random.default_rng(seed)
    inner = _inner_folds(view, rows, folds, rng)
    errs = np.zeros(len(grid))
    for test in inner:
        train = np.setdiff1d(rows, test)
        if len(np.unique(view.ground_truth[train])) < n:
            continue
        s = _single(view, train, lam_single)
        em = _aligned_em(view, train, n, replace(em_cfg, seed=int(rng.integers(2 ** 32))))
        for a, alpha in enumerate(grid):
            errs[a] += rmse_true_user(view, test, blend(s, em, alpha), view.ground_truth[test])
    return float(grid[int(np.argmin(errs))])


class FoldScore(NamedTuple):
    account: str
    fold: int
    method: str
    rmse: float
    overlap: int
    alpha: float


def eval_methods(view: AccountView, folds: int = 5, em_cfg: EmConfig = DEFAULT_EM,
                 alpha_grid: Sequence[float] = ALPHA_GRID,
                 lambda_grid: Sequence[float] = LAMBDA_GRID, seed=None, alpha: float = None,
                 k_per_user: int = 3) -> list:
    """Score the four profile strategies on every fold of one household.

    Single's ridge penalty and CNV's ``alpha`` come from 4-fold CV inside the
    training split; passing ``alpha`` fixes the blend instead. Oracle and EM
    use ``em_cfg.ridge_lambda``. A fold whose training part misses a user is
    redrawn once with a fresh seed before giving up.
    """
    if view.ground_truth is None:
        raise InputError("eval_methods needs ground truth")
    n = view.n_true
    seeds = np.random.SeedSequence(seed).generate_state(2)
    split = crossval_split(view, folds, int(seeds[0]))
    if not _covers(view, split, n):
        logger.info("account %s: reshuffling folds once", view.account)
        split = crossval_split(view, folds, int(seeds[1]))
        if not _covers(view, split, n):
            raise InsufficientDataError(
                f"account {view.account!r}: a fold leaves a user without training movies"
            )
    rng = np.random.default_rng(seeds[0] ^ seeds[1])
    out = []
    everything = np.arange(view.m)
    for f, test in enumerate(split):
        train = np.setdiff1d(everything, test)
        t_test = view.ground_truth[test]
        lam = choose_lambda(view, train, lambda_grid, seed=int(rng.integers(2 ** 32))) \
            if len(lambda_grid) > 1 else float(lambda_grid[0])
        single = _single(view, train, lam)
        oracle = fit_profiles(view.subset(train),
                              view.ground_truth[train], n, em_cfg.ridge_lambda)
        em = _aligned_em(view, train, n, replace(em_cfg, seed=int(rng.integers(2 ** 32))))
        a = alpha if alpha is not None else choose_alpha(
            view, train, n, lam, em_cfg, alpha_grid, seed=int(rng.integers(2 ** 32)))
        cnv = blend(single, em, a)
        for method, profs, a_out in (("single", [single], math.nan), ("oracle", oracle, math.nan),
                                     ("em", em, math.nan), ("cnv", cnv, a)):
            out.append(FoldScore(view.account, f, method,
                                 rmse_true_user(view, test, profs, t_test),
                                 overlap(view, test, profs, t_test, k_per_user), a_out))
    return out


def _covers(view, split, n):
    everything = np.arange(view.m)
    return all(
        len(np.unique(view.ground_truth[np.setdiff1d(everything, test)])) == n for test in split
    )


def summarize(scores: Sequence[FoldScore]) -> dict:
    """Per method: mean rmse, its standard error over households, mean overlap."""
    out = {}
    for method in METHODS:
        by_acc = {}
        for s in scores:
            if s.method == method:
                by_acc.setdefault(s.account, []).append((s.rmse, s.overlap))
        if not by_acc:
            continue
        rm = np.array([np.mean([x[0] for x in v]) for v in by_acc.values()])
        ov = np.array([np.mean([x[1] for x in v]) for v in by_acc.values()])
        se = float(rm.std(ddof=1) / math.sqrt(len(rm))) if len(rm) > 1 else 0.0
        out[method] = {"rmse": float(rm.mean()), "rmse_se": se, "overlap": float(ov.mean()),
                       "households": len(rm)}
    return out
