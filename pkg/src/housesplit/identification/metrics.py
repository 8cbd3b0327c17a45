"""Agreement with ground truth and per-movie attribution confidence."""
from __future__ import annotations

import itertools
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import norm

from ..data_model import AccountView
from ..errors import DatasetMismatchError


def confusion(assignment, truth, n: int = None) -> np.ndarray:
    a = np.asarray(assignment, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if len(a) != len(t):
        raise DatasetMismatchError(f"assignment length {len(a)} != truth length {len(t)}")
    if n is None:
        n = int(max(a.max(), t.max())) + 1
    C = np.zeros((n, n), dtype=np.int64)
    np.add.at(C, (a, t), 1)
    return C


def similarity(assignment, truth) -> float:
    """Fraction of movies on which ``assignment`` matches ``truth`` under the best relabeling.

    Exhaustive over permutations for up to 4 labels, Hungarian matching beyond.
    """
    C = confusion(assignment, truth)
    n = len(C)
    if n <= 4:
        best = max(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    else:
        rows, cols = linear_sum_assignment(-C)
        best = C[rows, cols].sum()
    return float(best) / C.sum()


def best_permutation(assignment, truth, n: int = None) -> np.ndarray:
    """``perm[i]`` is the truth label matched to assignment label ``i``."""
    C = confusion(assignment, truth, n)
    rows, cols = linear_sum_assignment(-C)
    perm = np.empty(len(C), dtype=np.int64)
    perm[rows] = cols
    return perm


def delta_scores(view: AccountView, profiles) -> np.ndarray:
    """``|r - <u_1,v> - z_1| - |r - <u_2,v> - z_2|`` per movie; negative favours user 1."""
    if len(profiles) != 2:
        raise ValueError(f"delta scores need exactly 2 profiles, got {len(profiles)}")
    p, q = profiles
    return np.abs(view.ratings - p.predict(view.features)) - np.abs(
        view.ratings - q.predict(view.features)
    )


class TailSplit(NamedTuple):
    user1: np.ndarray
    user2: np.ndarray
    uncertain: np.ndarray
    mean: float
    std: float


def _kept_variance_ratio(a):
    # variance of N(0,1) restricted to [-a, a]
    return 1.0 - 2.0 * a * norm.pdf(a) / (2.0 * norm.cdf(a) - 1.0)


def fit_trimmed_gaussian(x, trim: float = 1.5, passes: int = 2):
    """Mean and standard deviation of the Gaussian core of ``x``.

    Each pass discards points more than ``trim`` standard deviations from the
    current mean and re-estimates; the spread of the kept points is inflated
    to undo the truncation.
    """
    x = np.asarray(x, dtype=float)
    mu, sd = float(x.mean()), float(x.std())
    factor = math.sqrt(_kept_variance_ratio(trim))
    for _ in range(passes):
        if sd == 0:
            break
        kept = x[np.abs(x - mu) <= trim * sd]
        if len(kept) < 2:
            break
        mu, sd = float(kept.mean()), float(kept.std()) / factor
    return mu, sd


def confident_tails(deltas, k_sigma: float = 1.5, trim: float = 1.5) -> TailSplit:
    """Split movies into confident user-1, confident user-2 and uncertain sets.

    Movies further than ``k_sigma`` fitted standard deviations below (above)
    the Gaussian core of the deltas are attributed to user 1 (user 2).
    """
    deltas = np.asarray(deltas, dtype=float)
    idx = np.arange(len(deltas))
    empty = np.array([], dtype=np.int64)
    if len(deltas) < 10:
        return TailSplit(empty, empty, idx, float("nan"), float("nan"))
    mu, sd = fit_trimmed_gaussian(deltas, trim)
    if not sd > 0:
        return TailSplit(empty, empty, idx, mu, 0.0)
    lo = deltas < mu - k_sigma * sd
    hi = deltas > mu + k_sigma * sd
    return TailSplit(idx[lo], idx[hi], idx[~(lo | hi)], mu, sd)
